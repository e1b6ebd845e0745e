//! The file service: maps a verified assertion to a local account and
//! enforces both the CAS rights and the account's own permissions on every
//! command.

mod audit;
mod config;
mod enforce;
mod mapping;
mod path;
mod server;

use std::path::PathBuf;
use std::sync::Arc;

use crate::cas::ConfigError;
use crate::credentials::{PublicKey, TrustedIssuers};
use crate::time::{Clock, Timestamp};

pub use audit::{AuditRecord, AuditSink, FileAuditLog, MemoryAuditLog};
pub use config::{
    Account, AccountTable, GridMap, LoadedPolicy, ParseError, ResourceConfig, RoleMap, DEFAULT_PORT,
};
pub use enforce::{authorize_file_op, FileOp, Resource, REASON_CAS_RIGHTS, REASON_LOCAL_PERMS, REASON_OK};
pub use mapping::{map_personal, map_to_account, AccountDecision, MappingError, Via};
pub use path::{PathError, VirtualPath};
pub use server::{handle_session, serve, MAX_PUT_SIZE};

/// Everything a running file service needs.
pub struct ResourceService {
    pub server_name: String,
    pub export_root: PathBuf,
    pub public_root: Option<VirtualPath>,
    pub trust_root: PublicKey,
    pub issuers: TrustedIssuers,
    pub role_map: RoleMap,
    pub grid_map: GridMap,
    pub accounts: AccountTable,
    pub audit: Arc<dyn AuditSink>,
    pub clock: Arc<dyn Clock>,
}

impl ResourceService {
    pub fn now(&self) -> Timestamp {
        self.clock.now()
    }

    pub fn resource(&self) -> Resource<'_> {
        Resource {
            server_name: &self.server_name,
            accounts: &self.accounts,
            public_root: self.public_root.as_ref(),
        }
    }
}

impl ResourceConfig {
    pub fn build(&self, clock: Arc<dyn Clock>) -> Result<ResourceService, ConfigError> {
        let policy = self.load_policy()?;
        let audit = FileAuditLog::open(&self.audit_log).map_err(|source| ConfigError::Io {
            path: self.audit_log.clone(),
            source,
        })?;
        if !self.export_root.is_dir() {
            return Err(ConfigError::Invalid {
                path: self.export_root.clone(),
                reason: "export root is not a directory".into(),
            });
        }
        Ok(ResourceService {
            server_name: self.server_name.clone(),
            export_root: self.export_root.clone(),
            public_root: self.public_root.clone(),
            trust_root: policy.trust_root,
            issuers: policy.issuers,
            role_map: policy.role_map,
            grid_map: policy.grid_map,
            accounts: policy.accounts,
            audit: Arc::new(audit),
            clock,
        })
    }
}
