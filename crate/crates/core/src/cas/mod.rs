//! The community authorization server.
//!
//! Authenticates a VO member, narrows their stored rights by the request
//! filter, and signs an assertion. Admins can bulk-load command files.

mod config;
mod server;

use std::collections::BTreeSet;
use std::path::PathBuf;
use std::sync::Arc;

use thiserror::Error;

use crate::authz::{filter_rights, FilterDenied, RightsSet};
use crate::credentials::{
    sign_assertion, write_atomic, Assertion, AssertionBody, AuthenticatedPeer, PublicKey,
    SecretKey, DEFAULT_ASSERTION_LIFETIME,
};
use crate::model::SubjectDn;
use crate::policy::{PolicyError, PolicyStore, SharedPolicy};
use crate::time::{Clock, Timestamp};
use crate::wire::{ErrorBody, Message};

pub use config::{CasConfig, ConfigError};
pub(crate) use config::{read as config_read, read_json as config_read_json};
pub use server::serve;

/// Server-side cap on assertion lifetime unless configured otherwise.
pub const DEFAULT_MAX_LIFETIME: i64 = 43_200;

/// What the client asks for. An empty `requested` set means all granted rights.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IssueRequest {
    pub requested: RightsSet,
    pub lifetime_seconds: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum IssueError {
    #[error("{0} is not a member of this VO")]
    NoVoMembership(SubjectDn),
    #[error(transparent)]
    Denied(#[from] FilterDenied),
    #[error("{0} holds no rights")]
    NoRights(SubjectDn),
    #[error("lifetime must be positive")]
    BadLifetime,
}

impl IssueError {
    pub fn code(&self) -> &'static str {
        match self {
            IssueError::NoVoMembership(_) => "no-vo-membership",
            IssueError::Denied(_) => "rights-not-granted",
            IssueError::NoRights(_) => "no-rights",
            IssueError::BadLifetime => "bad-request",
        }
    }

    pub fn to_message(&self) -> Message {
        let status = match self {
            IssueError::BadLifetime => 400,
            _ => 403,
        };
        Message::Error(ErrorBody {
            status,
            reason: self.code().to_string(),
            message: self.to_string(),
            uncovered: match self {
                IssueError::Denied(d) => d.uncovered.clone(),
                _ => Vec::new(),
            },
        })
    }
}

/// The signing identity of a CAS server.
#[derive(Debug, Clone)]
pub struct Issuer {
    pub dn: SubjectDn,
    pub key: SecretKey,
    pub max_lifetime: i64,
}

/// Issues an assertion for an authenticated peer against one store version.
pub fn handle_issue(
    issuer: &Issuer,
    peer: &AuthenticatedPeer,
    request: &IssueRequest,
    store: &PolicyStore,
    now: Timestamp,
) -> Result<Assertion, IssueError> {
    if !store.has_subject(&peer.subject) {
        return Err(IssueError::NoVoMembership(peer.subject.clone()));
    }
    let lifetime = match request.lifetime_seconds {
        Some(0) => return Err(IssueError::BadLifetime),
        Some(s) => i64::try_from(s).unwrap_or(i64::MAX),
        None => DEFAULT_ASSERTION_LIFETIME,
    }
    .min(issuer.max_lifetime);
    let granted = RightsSet::new(store.rights_of(&peer.subject));
    let rights = filter_rights(&granted, &request.requested)?;
    if rights.is_empty() {
        return Err(IssueError::NoRights(peer.subject.clone()));
    }
    let body = AssertionBody::new(
        issuer.dn.clone(),
        peer.subject.clone(),
        now,
        now.plus(lifetime),
        rights,
    );
    Ok(sign_assertion(body, &issuer.key).expect("freshly built body is valid"))
}

#[derive(Debug, Error)]
pub enum AdminError {
    #[error("{0} is not an administrator")]
    NotAdmin(SubjectDn),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error("could not persist snapshot: {0}")]
    Persist(std::io::Error),
}

impl AdminError {
    pub fn to_message(&self) -> Message {
        match self {
            AdminError::NotAdmin(_) => Message::error(403, "not-admin", self.to_string()),
            AdminError::Policy(_) => Message::error(400, "command-file", self.to_string()),
            AdminError::Persist(_) => Message::error(500, "internal", self.to_string()),
        }
    }
}

/// A running CAS: issuer identity, trust root for client authentication,
/// and the live policy store.
pub struct CasService {
    pub issuer: Issuer,
    pub trust_root: PublicKey,
    policy: SharedPolicy,
    snapshot_file: Option<PathBuf>,
    admins: BTreeSet<SubjectDn>,
    clock: Arc<dyn Clock>,
}

impl CasService {
    pub fn new(
        issuer: Issuer,
        trust_root: PublicKey,
        store: PolicyStore,
        admins: impl IntoIterator<Item = SubjectDn>,
        snapshot_file: Option<PathBuf>,
        clock: Arc<dyn Clock>,
    ) -> Self {
        Self {
            issuer,
            trust_root,
            policy: SharedPolicy::new(store),
            snapshot_file,
            admins: admins.into_iter().collect(),
            clock,
        }
    }

    pub fn now(&self) -> Timestamp {
        self.clock.now()
    }

    pub fn store(&self) -> Arc<PolicyStore> {
        self.policy.snapshot()
    }

    pub fn issue(&self, peer: &AuthenticatedPeer, request: &IssueRequest) -> Result<Assertion, IssueError> {
        let store = self.policy.snapshot();
        handle_issue(&self.issuer, peer, request, &store, self.clock.now())
    }

    /// Applies an admin command file. The new store is persisted before it
    /// becomes visible; on any failure nothing changes.
    pub fn admin_load(&self, peer: &AuthenticatedPeer, text: &str) -> Result<usize, AdminError> {
        if !self.admins.contains(&peer.subject) {
            return Err(AdminError::NotAdmin(peer.subject.clone()));
        }
        self.policy.update(|store| {
            let (next, applied) = store.apply_command_file(text)?;
            if let Some(path) = &self.snapshot_file {
                write_atomic(path, &next.save_snapshot(), 0o600).map_err(AdminError::Persist)?;
            }
            Ok((next, applied))
        })
    }
}
