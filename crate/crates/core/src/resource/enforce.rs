use std::fmt;
use std::str::FromStr;

use crate::authz::{check_right, Decision, RightsSet};
use crate::model::FILE_SERVICE;

use super::config::AccountTable;
use super::mapping::AccountDecision;
use super::path::VirtualPath;

pub const REASON_OK: &str = "ok";
pub const REASON_CAS_RIGHTS: &str = "cas-rights";
pub const REASON_LOCAL_PERMS: &str = "local-perms";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum FileOp {
    List,
    Get,
    Put,
}

impl FileOp {
    pub fn as_str(self) -> &'static str {
        match self {
            FileOp::List => "LIST",
            FileOp::Get => "GET",
            FileOp::Put => "PUT",
        }
    }

    /// The action a CAS file tuple must grant.
    pub fn action(self) -> &'static str {
        match self {
            FileOp::List | FileOp::Get => "read",
            FileOp::Put => "write",
        }
    }

    pub fn writes(self) -> bool {
        self == FileOp::Put
    }
}

impl fmt::Display for FileOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FileOp {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "LIST" => Ok(FileOp::List),
            "GET" => Ok(FileOp::Get),
            "PUT" => Ok(FileOp::Put),
            other => Err(format!("unknown operation {other:?}")),
        }
    }
}

/// Static facts about the resource the enforcement decision needs.
#[derive(Debug, Clone)]
pub struct Resource<'a> {
    pub server_name: &'a str,
    pub accounts: &'a AccountTable,
    pub public_root: Option<&'a VirtualPath>,
}

impl Resource<'_> {
    /// The CAS object name for `path` on this server.
    pub fn url(&self, path: &VirtualPath) -> String {
        format!("ftp://{}{}", self.server_name, path)
    }
}

/// Both layers must allow. CAS file rights are consulted only when the
/// assertion carries some; local account permissions always apply.
pub fn authorize_file_op(
    rights: &RightsSet,
    account: &AccountDecision,
    op: FileOp,
    path: &VirtualPath,
    resource: &Resource<'_>,
) -> Decision {
    let mut matched = None;
    if rights.has_service_type(FILE_SERVICE) {
        let d = check_right(rights, FILE_SERVICE, op.action(), &resource.url(path));
        if !d.allowed {
            return Decision::deny(REASON_CAS_RIGHTS);
        }
        matched = d.matched_tuple;
    }
    if !local_allows(account, op, path, resource) {
        return Decision::deny(REASON_LOCAL_PERMS);
    }
    Decision::allow(matched, REASON_OK)
}

fn local_allows(account: &AccountDecision, op: FileOp, path: &VirtualPath, resource: &Resource<'_>) -> bool {
    let Some(acct) = resource.accounts.get(&account.account) else {
        return false;
    };
    if op.writes() {
        acct.writable && path.is_within(&acct.home) && path != &acct.home
    } else {
        path.is_within(&acct.home) || resource.public_root.is_some_and(|p| path.is_within(p))
    }
}
