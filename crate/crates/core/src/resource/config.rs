//! Resource-side configuration files.
//!
//! ```text
//! # role map: honored roles, first match wins
//! atlas/admin admin
//! atlas/data  data
//!
//! # grid map: who may map to which accounts
//! "/O=Grid/CN=CAS atlas" admin,data
//! "/O=doesciencegrid.org/OU=People/CN=Craig E. Tull 49565" tull
//!
//! # account table
//! admin /home/admin rw
//! data  /home/data  rw
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::cas::ConfigError;
use crate::credentials::{TrustRootFile, TrustedIssuers};
use crate::model::{validate_account, RoleName, SubjectDn};
use crate::text;

use super::path::VirtualPath;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}: {reason}")]
pub struct ParseError {
    pub line: usize,
    pub reason: String,
}

fn fields_of(
    text: &str,
) -> impl Iterator<Item = (usize, Result<Vec<String>, ParseError>)> + '_ {
    text::records(text).map(|(line, f)| {
        (
            line,
            f.map_err(|e| ParseError {
                line,
                reason: e.to_string(),
            }),
        )
    })
}

/// Ordered role → account lines. Order decides which role wins.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RoleMap {
    pub entries: Vec<(RoleName, String)>,
}

impl RoleMap {
    pub fn new(entries: impl IntoIterator<Item = (RoleName, String)>) -> Self {
        Self {
            entries: entries.into_iter().collect(),
        }
    }

    pub fn parse(text: &str) -> Result<Self, ParseError> {
        let mut entries = Vec::new();
        for (line, fields) in fields_of(text) {
            let err = |reason: String| ParseError { line, reason };
            let fields = fields?;
            let [role, account] = fields.as_slice() else {
                return Err(err("expected: <vo>/<role> <account>".into()));
            };
            let role = RoleName::new(role).map_err(|e| err(e.to_string()))?;
            validate_account(account).map_err(|e| err(e.to_string()))?;
            entries.push((role, account.clone()));
        }
        Ok(Self { entries })
    }
}

/// DN → accounts that DN may use, for both CAS issuers and individuals.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct GridMap {
    pub entries: BTreeMap<SubjectDn, BTreeSet<String>>,
}

impl GridMap {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn allow(&mut self, dn: SubjectDn, account: &str) {
        self.entries.entry(dn).or_default().insert(account.to_string());
    }

    pub fn with(mut self, dn: SubjectDn, accounts: &[&str]) -> Self {
        for a in accounts {
            self.allow(dn.clone(), a);
        }
        self
    }

    pub fn accounts(&self, dn: &SubjectDn) -> Option<&BTreeSet<String>> {
        self.entries.get(dn)
    }

    pub fn parse(text: &str) -> Result<Self, ParseError> {
        let mut map = Self::new();
        for (line, fields) in fields_of(text) {
            let err = |reason: String| ParseError { line, reason };
            let fields = fields?;
            let [dn, accounts] = fields.as_slice() else {
                return Err(err("expected: \"<DN>\" <account>[,<account>...]".into()));
            };
            let dn = SubjectDn::new(dn.as_str()).map_err(|e| err(e.to_string()))?;
            for account in accounts.split(',') {
                validate_account(account).map_err(|e| err(e.to_string()))?;
                map.allow(dn.clone(), account);
            }
        }
        Ok(map)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Account {
    pub home: VirtualPath,
    pub writable: bool,
}

/// Simulated local accounts: a home directory under the export root and a
/// write flag.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AccountTable {
    pub accounts: BTreeMap<String, Account>,
}

impl AccountTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, name: &str, home: &str, writable: bool) -> Self {
        self.accounts.insert(
            name.to_string(),
            Account {
                home: VirtualPath::parse(home).expect("valid home path"),
                writable,
            },
        );
        self
    }

    pub fn get(&self, name: &str) -> Option<&Account> {
        self.accounts.get(name)
    }

    pub fn parse(text: &str) -> Result<Self, ParseError> {
        let mut table = Self::new();
        for (line, fields) in fields_of(text) {
            let err = |reason: String| ParseError { line, reason };
            let fields = fields?;
            let [name, home, mode] = fields.as_slice() else {
                return Err(err("expected: <account> <home-path> <ro|rw>".into()));
            };
            validate_account(name).map_err(|e| err(e.to_string()))?;
            let home = VirtualPath::parse(home).map_err(|e| err(e.to_string()))?;
            let writable = match mode.as_str() {
                "rw" => true,
                "ro" => false,
                other => return Err(err(format!("bad mode {other:?}, expected ro or rw"))),
            };
            if table.accounts.contains_key(name.as_str()) {
                return Err(err(format!("account {name:?} listed twice")));
            }
            table.accounts.insert(name.clone(), Account { home, writable });
        }
        Ok(table)
    }
}

/// Demo port of the file service.
pub const DEFAULT_PORT: u16 = 2813;

/// File-service settings from `key=value` lines.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResourceConfig {
    pub listen_host: String,
    pub port: u16,
    pub server_name: String,
    pub export_root: PathBuf,
    pub public_root: Option<VirtualPath>,
    pub trust_root_file: PathBuf,
    pub trusted_issuers_file: PathBuf,
    pub role_map_file: PathBuf,
    pub grid_map_file: PathBuf,
    pub account_table_file: PathBuf,
    pub audit_log: PathBuf,
}

impl ResourceConfig {
    pub fn parse(text: &str, base: &Path) -> Result<Self, ConfigError> {
        let mut listen_host = "127.0.0.1".to_string();
        let mut port = DEFAULT_PORT;
        let mut server_name = None;
        let mut export_root = None;
        let mut public_root = None;
        let mut trust_root_file = None;
        let mut trusted_issuers_file = None;
        let mut role_map_file = None;
        let mut grid_map_file = None;
        let mut account_table_file = None;
        let mut audit_log = None;
        for (line, key, value) in text::key_values(text).map_err(ConfigError::Syntax)? {
            let bad = |reason: String| ConfigError::Syntax(format!("line {line}: {reason}"));
            match key.as_str() {
                "listen_host" => listen_host = value,
                "port" => port = value.parse().map_err(|_| bad(format!("bad port {value:?}")))?,
                "server_name" => server_name = Some(value),
                "export_root" => export_root = Some(base.join(value)),
                "public_root" => {
                    public_root = Some(VirtualPath::parse(&value).map_err(|e| bad(e.to_string()))?)
                }
                "trust_root_file" => trust_root_file = Some(base.join(value)),
                "trusted_issuers_file" => trusted_issuers_file = Some(base.join(value)),
                "role_map_file" => role_map_file = Some(base.join(value)),
                "grid_map_file" => grid_map_file = Some(base.join(value)),
                "account_table_file" => account_table_file = Some(base.join(value)),
                "audit_log" => audit_log = Some(base.join(value)),
                other => return Err(bad(format!("unknown key {other:?}"))),
            }
        }
        Ok(Self {
            listen_host,
            port,
            server_name: server_name.ok_or(ConfigError::Missing("server_name"))?,
            export_root: export_root.ok_or(ConfigError::Missing("export_root"))?,
            public_root,
            trust_root_file: trust_root_file.ok_or(ConfigError::Missing("trust_root_file"))?,
            trusted_issuers_file: trusted_issuers_file
                .ok_or(ConfigError::Missing("trusted_issuers_file"))?,
            role_map_file: role_map_file.ok_or(ConfigError::Missing("role_map_file"))?,
            grid_map_file: grid_map_file.ok_or(ConfigError::Missing("grid_map_file"))?,
            account_table_file: account_table_file
                .ok_or(ConfigError::Missing("account_table_file"))?,
            audit_log: audit_log.ok_or(ConfigError::Missing("audit_log"))?,
        })
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = crate::cas::config_read(path)?;
        Self::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn load_policy(&self) -> Result<LoadedPolicy, ConfigError> {
        let parse_err = |path: &Path, e: ParseError| ConfigError::Invalid {
            path: path.to_path_buf(),
            reason: e.to_string(),
        };
        let root: TrustRootFile = crate::cas::config_read_json(&self.trust_root_file)?;
        let issuers = TrustedIssuers::parse(&crate::cas::config_read(&self.trusted_issuers_file)?)
            .map_err(|reason| ConfigError::Invalid {
                path: self.trusted_issuers_file.clone(),
                reason,
            })?;
        let role_map = RoleMap::parse(&crate::cas::config_read(&self.role_map_file)?)
            .map_err(|e| parse_err(&self.role_map_file, e))?;
        let grid_map = GridMap::parse(&crate::cas::config_read(&self.grid_map_file)?)
            .map_err(|e| parse_err(&self.grid_map_file, e))?;
        let accounts = AccountTable::parse(&crate::cas::config_read(&self.account_table_file)?)
            .map_err(|e| parse_err(&self.account_table_file, e))?;
        Ok(LoadedPolicy {
            trust_root: root.public_key,
            issuers,
            role_map,
            grid_map,
            accounts,
        })
    }
}

/// The files named by a [`ResourceConfig`], parsed.
#[derive(Debug, Clone)]
pub struct LoadedPolicy {
    pub trust_root: crate::credentials::PublicKey,
    pub issuers: TrustedIssuers,
    pub role_map: RoleMap,
    pub grid_map: GridMap,
    pub accounts: AccountTable,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn role_map_keeps_order() {
        let m = RoleMap::parse("# honored roles\natlas/data data\natlas/admin admin\n").unwrap();
        assert_eq!(m.entries[0].0.to_string(), "atlas/data");
        assert_eq!(m.entries[1].1, "admin");
        assert_eq!(RoleMap::parse("atlas data").unwrap_err().line, 1);
        assert!(RoleMap::parse("atlas/data Data").is_err());
    }

    #[test]
    fn grid_map_quoted_dns() {
        let m = GridMap::parse(
            "\"/O=doesciencegrid.org/OU=People/CN=Craig E. Tull 49565\" tull\n\"/O=Grid/CN=CAS\" admin,data\n\"/O=Grid/CN=CAS\" extra\n",
        )
        .unwrap();
        let tull = SubjectDn::new("/O=doesciencegrid.org/OU=People/CN=Craig E. Tull 49565").unwrap();
        assert_eq!(m.accounts(&tull).unwrap().len(), 1);
        let cas = SubjectDn::new("/O=Grid/CN=CAS").unwrap();
        assert_eq!(m.accounts(&cas).unwrap().len(), 3);
        assert!(GridMap::parse("\"/O=x/CN=A\" Bad").is_err());
    }

    #[test]
    fn account_table() {
        let t = AccountTable::parse("admin /home/admin rw\ndata /home/data ro\n").unwrap();
        assert!(t.get("admin").unwrap().writable);
        assert!(!t.get("data").unwrap().writable);
        assert!(AccountTable::parse("x /home/x rx").is_err());
        assert!(AccountTable::parse("x home/x rw").is_err());
        assert!(AccountTable::parse("x /a rw\nx /b rw").is_err());
    }

    #[test]
    fn resource_config() {
        let c = ResourceConfig::parse(
            "server_name = pdsfgrid3.nersc.gov\nexport_root = export\ntrust_root_file = root.json\ntrusted_issuers_file = issuers\nrole_map_file = roles\ngrid_map_file = grid-mapfile\naccount_table_file = accounts\naudit_log = audit.log\npublic_root = /pub\n",
            Path::new("/srv"),
        )
        .unwrap();
        assert_eq!(c.port, DEFAULT_PORT);
        assert_eq!(c.export_root, Path::new("/srv/export"));
        assert_eq!(c.public_root.unwrap().as_str(), "/pub");
    }
}
