//! Shared domain values: subject names, role names and rights tuples.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Rejection of a malformed domain value.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("invalid subject DN {0:?}: {1}")]
    SubjectDn(String, &'static str),
    #[error("invalid token {0:?}: expected [a-z][a-z0-9_-]*")]
    Token(String),
    #[error("invalid role name {0:?}: expected <vo>/<name>")]
    RoleName(String),
    #[error("invalid target {0:?}: {1}")]
    Target(String, &'static str),
    #[error("invalid match mode {0:?}: expected exact or wildcard")]
    MatchMode(String),
    #[error("invalid account {0:?}: expected [a-z_][a-z0-9_-]*")]
    Account(String),
    #[error("invalid tag {0:?}: expected [a-zA-Z][a-zA-Z0-9_-]*")]
    Tag(String),
}

/// Lowercase identifier used for service types and actions.
pub fn is_token(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some('a'..='z'))
        && chars.all(|c| matches!(c, 'a'..='z' | '0'..='9' | '_' | '-'))
}

/// Local account name as used by role maps, grid maps and account tables.
pub fn is_account(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some('a'..='z' | '_'))
        && chars.all(|c| matches!(c, 'a'..='z' | '0'..='9' | '_' | '-'))
}

pub fn validate_account(s: &str) -> Result<(), ModelError> {
    if is_account(s) {
        Ok(())
    } else {
        Err(ModelError::Account(s.to_string()))
    }
}

/// A slash-delimited distinguished name such as `/O=Grid/OU=People/CN=Jane Doe`.
///
/// Embedded spaces are allowed. Double quotes and control characters are not,
/// since every text format quotes DNs with `"`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SubjectDn(String);

impl SubjectDn {
    pub fn new(value: impl Into<String>) -> Result<Self, ModelError> {
        let value = value.into();
        let reason = if value.is_empty() {
            Some("empty")
        } else if !value.starts_with('/') {
            Some("must begin with '/'")
        } else if !value.contains('=') {
            Some("must contain '='")
        } else if value.trim() != value {
            Some("leading or trailing whitespace")
        } else if value.chars().any(|c| c == '"' || c.is_control()) {
            Some("contains a double quote or control character")
        } else {
            None
        };
        match reason {
            Some(r) => Err(ModelError::SubjectDn(value, r)),
            None => Ok(Self(value)),
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// The DN as a text-format field, quoted when it contains whitespace.
    pub fn to_field(&self) -> String {
        if self.0.chars().any(char::is_whitespace) {
            format!("\"{}\"", self.0)
        } else {
            self.0.clone()
        }
    }
}

impl fmt::Display for SubjectDn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl FromStr for SubjectDn {
    type Err = ModelError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::new(s)
    }
}

impl Serialize for SubjectDn {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.0)
    }
}

impl<'de> Deserialize<'de> for SubjectDn {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Self::new(s).map_err(serde::de::Error::custom)
    }
}

/// A two-level role or group name, `<vo>/<name>`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RoleName {
    vo: String,
    name: String,
}

impl RoleName {
    pub fn new(value: &str) -> Result<Self, ModelError> {
        match value.split_once('/') {
            Some((vo, name)) if is_token(vo) && is_token(name) => Ok(Self {
                vo: vo.to_string(),
                name: name.to_string(),
            }),
            _ => Err(ModelError::RoleName(value.to_string())),
        }
    }

    pub fn vo(&self) -> &str {
        &self.vo
    }

    pub fn name(&self) -> &str {
        &self.name
    }
}

impl fmt::Display for RoleName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.vo, self.name)
    }
}

impl FromStr for RoleName {
    type Err = ModelError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::new(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatchMode {
    Exact,
    Wildcard,
}

impl MatchMode {
    pub fn as_str(self) -> &'static str {
        match self {
            MatchMode::Exact => "exact",
            MatchMode::Wildcard => "wildcard",
        }
    }
}

impl fmt::Display for MatchMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MatchMode {
    type Err = ModelError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "exact" => Ok(MatchMode::Exact),
            "wildcard" => Ok(MatchMode::Wildcard),
            other => Err(ModelError::MatchMode(other.to_string())),
        }
    }
}

/// One authorization right: an action on a target, scoped to a service type.
///
/// Field order gives the derived ordering used everywhere rights are sorted:
/// service type, action, target, match mode.
///
/// A wildcard tuple whose target has no `*` matches exactly one target, so it
/// is stored as `exact`. The rights filter line `group member atlas/admin wildcard`
/// therefore denotes the same tuple as a plain exact membership grant.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct RightsTuple {
    service_type: String,
    action: String,
    target: String,
    match_mode: MatchMode,
}

impl RightsTuple {
    pub fn new(
        service_type: &str,
        action: &str,
        target: &str,
        match_mode: MatchMode,
    ) -> Result<Self, ModelError> {
        if !is_token(service_type) {
            return Err(ModelError::Token(service_type.to_string()));
        }
        if !is_token(action) {
            return Err(ModelError::Token(action.to_string()));
        }
        if target.is_empty() {
            return Err(ModelError::Target(target.to_string(), "empty"));
        }
        if target.chars().any(|c| c.is_whitespace() || c.is_control() || c == '"') {
            return Err(ModelError::Target(
                target.to_string(),
                "contains whitespace, a control character or a double quote",
            ));
        }
        let match_mode = match match_mode {
            MatchMode::Wildcard if !target.contains('*') => MatchMode::Exact,
            m => m,
        };
        Ok(Self {
            service_type: service_type.to_string(),
            action: action.to_string(),
            target: target.to_string(),
            match_mode,
        })
    }

    pub fn exact(service_type: &str, action: &str, target: &str) -> Result<Self, ModelError> {
        Self::new(service_type, action, target, MatchMode::Exact)
    }

    pub fn wildcard(service_type: &str, action: &str, target: &str) -> Result<Self, ModelError> {
        Self::new(service_type, action, target, MatchMode::Wildcard)
    }

    /// Membership right on a role: `(group, member, <role>, exact)`.
    pub fn membership(role: &RoleName) -> Self {
        Self {
            service_type: GROUP_SERVICE.to_string(),
            action: MEMBER_ACTION.to_string(),
            target: role.to_string(),
            match_mode: MatchMode::Exact,
        }
    }

    pub fn service_type(&self) -> &str {
        &self.service_type
    }

    pub fn action(&self) -> &str {
        &self.action
    }

    pub fn target(&self) -> &str {
        &self.target
    }

    pub fn match_mode(&self) -> MatchMode {
        self.match_mode
    }
}

impl fmt::Display for RightsTuple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {} {} {}",
            self.service_type, self.action, self.target, self.match_mode
        )
    }
}

impl<'de> Deserialize<'de> for RightsTuple {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(deny_unknown_fields)]
        struct Raw {
            service_type: String,
            action: String,
            target: String,
            match_mode: MatchMode,
        }
        let raw = Raw::deserialize(d)?;
        let tuple = RightsTuple::new(&raw.service_type, &raw.action, &raw.target, raw.match_mode)
            .map_err(serde::de::Error::custom)?;
        if tuple.match_mode != raw.match_mode {
            return Err(serde::de::Error::custom(
                "wildcard tuple without '*' must be encoded as exact",
            ));
        }
        Ok(tuple)
    }
}

/// Service type carrying role and group memberships.
pub const GROUP_SERVICE: &str = "group";
/// Action expressing membership in a role or group.
pub const MEMBER_ACTION: &str = "member";
/// Service type for file rights.
pub const FILE_SERVICE: &str = "file";

/// A client-chosen name selecting one stored assertion.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Tag(String);

impl Tag {
    pub fn new(value: &str) -> Result<Self, ModelError> {
        let mut chars = value.chars();
        let ok = matches!(chars.next(), Some(c) if c.is_ascii_alphabetic())
            && chars.all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-');
        if ok {
            Ok(Self(value.to_string()))
        } else {
            Err(ModelError::Tag(value.to_string()))
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Tag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl FromStr for Tag {
    type Err = ModelError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::new(s)
    }
}
