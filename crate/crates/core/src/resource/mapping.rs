use std::fmt;

use thiserror::Error;

use crate::authz::roles_in;
use crate::credentials::VerifiedRights;
use crate::model::{RoleName, SubjectDn};

use super::config::{GridMap, RoleMap};

/// How a session reached its local account.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Via {
    Role(RoleName),
    Personal,
}

impl fmt::Display for Via {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Via::Role(r) => write!(f, "role:{r}"),
            Via::Personal => f.write_str("personal"),
        }
    }
}

/// The account a session runs as. `issuer` is `None` for sessions that
/// presented no assertion.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AccountDecision {
    pub subject: SubjectDn,
    pub issuer: Option<SubjectDn>,
    pub account: String,
    pub via: Via,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MappingError {
    #[error("issuer {issuer} may not map role {role} to account {account}")]
    IssuerNotAuthorized {
        issuer: SubjectDn,
        role: RoleName,
        account: String,
    },
    #[error("{0} holds no honored role and has no personal mapping")]
    NoMapping(SubjectDn),
}

impl MappingError {
    pub fn code(&self) -> &'static str {
        match self {
            MappingError::IssuerNotAuthorized { .. } => "issuer-not-authorized",
            MappingError::NoMapping(_) => "no-role-and-no-personal-mapping",
        }
    }
}

/// Picks the local account for a verified assertion.
///
/// The first role-map line whose role the assertion carries wins. That
/// account must also be listed for the issuer in the grid map; if it is not,
/// the session is refused outright rather than falling back. With no honored
/// role, the subject's own grid-map entry is used.
pub fn map_to_account(
    verified: &VerifiedRights,
    role_map: &RoleMap,
    grid_map: &GridMap,
) -> Result<AccountDecision, MappingError> {
    let (roles, warnings) = roles_in(&verified.rights);
    for w in &warnings {
        tracing::warn!(tuple = ?w.tuple, error = %w.error, "ignoring malformed membership");
    }
    if let Some((role, account)) = role_map.entries.iter().find(|(r, _)| roles.contains(r)) {
        let authorized = grid_map
            .accounts(&verified.issuer)
            .is_some_and(|accts| accts.contains(account));
        if !authorized {
            return Err(MappingError::IssuerNotAuthorized {
                issuer: verified.issuer.clone(),
                role: role.clone(),
                account: account.clone(),
            });
        }
        return Ok(AccountDecision {
            subject: verified.subject.clone(),
            issuer: Some(verified.issuer.clone()),
            account: account.clone(),
            via: Via::Role(role.clone()),
        });
    }
    let mut personal = map_personal(&verified.subject, grid_map)?;
    personal.issuer = Some(verified.issuer.clone());
    Ok(personal)
}

/// The subject's own grid-map entry; the lexicographically first account if
/// several are listed.
pub fn map_personal(subject: &SubjectDn, grid_map: &GridMap) -> Result<AccountDecision, MappingError> {
    let account = grid_map
        .accounts(subject)
        .and_then(|a| a.first())
        .ok_or_else(|| MappingError::NoMapping(subject.clone()))?;
    Ok(AccountDecision {
        subject: subject.clone(),
        issuer: None,
        account: account.clone(),
        via: Via::Personal,
    })
}
