//! Authorization decisions over a set of rights tuples.
//!
//! This is the policy decision point. It holds no state and does no I/O; the
//! file service calls into it for every request.

use std::fmt;

use thiserror::Error;

use crate::model::{
    MatchMode, ModelError, RightsTuple, RoleName, GROUP_SERVICE, MEMBER_ACTION,
};
use crate::text;

/// Glob match where `*` matches any run of characters, `/` included.
/// Matching is byte-wise and case-sensitive with no escapes.
pub fn match_target(pattern: &str, mode: MatchMode, target: &str) -> bool {
    match mode {
        MatchMode::Exact => pattern == target,
        MatchMode::Wildcard => glob_match(pattern.as_bytes(), target.as_bytes()),
    }
}

// Greedy scan remembering the most recent star; on mismatch the star absorbs
// one more byte. Linear in practice, O(p*t) worst case.
fn glob_match(pattern: &[u8], target: &[u8]) -> bool {
    let (mut p, mut t) = (0, 0);
    let mut resume: Option<(usize, usize)> = None;
    while t < target.len() {
        if p < pattern.len() && pattern[p] == b'*' {
            resume = Some((p, t));
            p += 1;
        } else if p < pattern.len() && pattern[p] == target[t] {
            p += 1;
            t += 1;
        } else if let Some((star_p, star_t)) = resume {
            p = star_p + 1;
            t = star_t + 1;
            resume = Some((star_p, star_t + 1));
        } else {
            return false;
        }
    }
    pattern[p..].iter().all(|&b| b == b'*')
}

/// Sorted, duplicate-free rights.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct RightsSet(Vec<RightsTuple>);

impl RightsSet {
    pub fn new(tuples: impl IntoIterator<Item = RightsTuple>) -> Self {
        let mut v: Vec<_> = tuples.into_iter().collect();
        v.sort();
        v.dedup();
        Self(v)
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn tuples(&self) -> &[RightsTuple] {
        &self.0
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, RightsTuple> {
        self.0.iter()
    }

    pub fn into_vec(self) -> Vec<RightsTuple> {
        self.0
    }

    pub fn has_service_type(&self, service_type: &str) -> bool {
        self.0.iter().any(|t| t.service_type() == service_type)
    }
}

impl FromIterator<RightsTuple> for RightsSet {
    fn from_iter<I: IntoIterator<Item = RightsTuple>>(iter: I) -> Self {
        Self::new(iter)
    }
}

impl<'a> IntoIterator for &'a RightsSet {
    type Item = &'a RightsTuple;
    type IntoIter = std::slice::Iter<'a, RightsTuple>;
    fn into_iter(self) -> Self::IntoIter {
        self.0.iter()
    }
}

pub const REASON_MATCHED: &str = "matched";
pub const REASON_NO_MATCH: &str = "no-matching-tuple";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Decision {
    pub allowed: bool,
    pub matched_tuple: Option<RightsTuple>,
    pub reason: String,
}

impl Decision {
    pub fn allow(tuple: Option<RightsTuple>, reason: impl Into<String>) -> Self {
        Self {
            allowed: true,
            matched_tuple: tuple,
            reason: reason.into(),
        }
    }

    pub fn deny(reason: impl Into<String>) -> Self {
        Self {
            allowed: false,
            matched_tuple: None,
            reason: reason.into(),
        }
    }
}

/// Is `action` on `target` permitted? The first matching tuple in sorted
/// order is reported.
pub fn check_right(rights: &RightsSet, service_type: &str, action: &str, target: &str) -> Decision {
    rights
        .iter()
        .find(|t| {
            t.service_type() == service_type
                && t.action() == action
                && match_target(t.target(), t.match_mode(), target)
        })
        .map(|t| Decision::allow(Some(t.clone()), REASON_MATCHED))
        .unwrap_or_else(|| Decision::deny(REASON_NO_MATCH))
}

/// A membership tuple whose target is not a two-level role name.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RoleWarning {
    pub tuple: RightsTuple,
    pub error: ModelError,
}

/// Roles asserted by exact `group member <vo>/<name>` tuples, sorted.
/// Wildcard memberships are not roles and are ignored.
pub fn roles_in(rights: &RightsSet) -> (Vec<RoleName>, Vec<RoleWarning>) {
    let mut roles = Vec::new();
    let mut warnings = Vec::new();
    for t in rights.iter().filter(|t| {
        t.service_type() == GROUP_SERVICE
            && t.action() == MEMBER_ACTION
            && t.match_mode() == MatchMode::Exact
    }) {
        match RoleName::new(t.target()) {
            Ok(role) => roles.push(role),
            Err(error) => warnings.push(RoleWarning {
                tuple: t.clone(),
                error,
            }),
        }
    }
    roles.sort();
    roles.dedup();
    (roles, warnings)
}

/// Requested tuples that no granted tuple covers.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub struct FilterDenied {
    pub uncovered: Vec<RightsTuple>,
}

impl fmt::Display for FilterDenied {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "requested rights not granted:")?;
        for t in &self.uncovered {
            write!(f, " [{t}]")?;
        }
        Ok(())
    }
}

fn covers(granted: &RightsTuple, requested: &RightsTuple) -> bool {
    granted.service_type() == requested.service_type()
        && granted.action() == requested.action()
        && match granted.match_mode() {
            MatchMode::Exact => granted == requested,
            MatchMode::Wildcard => {
                match_target(granted.target(), MatchMode::Wildcard, requested.target())
            }
        }
}

/// Narrows `granted` to `requested`. An empty request means "everything
/// granted"; otherwise every requested tuple must be covered or the whole
/// request is refused.
pub fn filter_rights(granted: &RightsSet, requested: &RightsSet) -> Result<RightsSet, FilterDenied> {
    if requested.is_empty() {
        return Ok(granted.clone());
    }
    let uncovered: Vec<RightsTuple> = requested
        .iter()
        .filter(|r| !granted.iter().any(|g| covers(g, r)))
        .cloned()
        .collect();
    if uncovered.is_empty() {
        Ok(requested.clone())
    } else {
        Err(FilterDenied { uncovered })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}: {reason}")]
pub struct FilterFileError {
    pub line: usize,
    pub reason: String,
}

/// Parses a rights-filter file: `<servicetype> <action> <target> <exact|wildcard>` per line.
pub fn parse_filter_file(text: &str) -> Result<RightsSet, FilterFileError> {
    let mut tuples = Vec::new();
    for (line, fields) in text::records(text) {
        let err = |reason: String| FilterFileError { line, reason };
        let fields = fields.map_err(|e| err(e.to_string()))?;
        let [st, action, target, mode] = fields.as_slice() else {
            return Err(err(
                "expected: <servicetype> <action> <target> <exact|wildcard>".into(),
            ));
        };
        let mode: MatchMode = mode.parse().map_err(|e: ModelError| err(e.to_string()))?;
        tuples.push(RightsTuple::new(st, action, target, mode).map_err(|e| err(e.to_string()))?);
    }
    Ok(RightsSet::new(tuples))
}
