use std::path::{Path, PathBuf};
use std::sync::Arc;

use thiserror::Error;

use crate::credentials::{KeyFile, TrustRootFile};
use crate::model::SubjectDn;
use crate::policy::{PolicyError, PolicyStore};
use crate::text;
use crate::time::Clock;

use super::{CasService, Issuer, DEFAULT_MAX_LIFETIME};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config: {0}")]
    Syntax(String),
    #[error("config: missing required key {0:?}")]
    Missing(&'static str),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {reason}")]
    Invalid { path: PathBuf, reason: String },
    #[error("snapshot {path}: {source}")]
    Snapshot { path: PathBuf, source: PolicyError },
}

/// CAS server settings, read from `key=value` lines.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CasConfig {
    pub listen: String,
    pub key_file: PathBuf,
    pub trust_root_file: PathBuf,
    pub snapshot_file: PathBuf,
    pub admin_dns: Vec<SubjectDn>,
    pub max_lifetime_seconds: i64,
}

impl CasConfig {
    /// Relative paths resolve against `base` (normally the config file's directory).
    pub fn parse(text: &str, base: &Path) -> Result<Self, ConfigError> {
        let mut listen = None;
        let mut key_file = None;
        let mut trust_root_file = None;
        let mut snapshot_file = None;
        let mut admin_dns = Vec::new();
        let mut max_lifetime_seconds = DEFAULT_MAX_LIFETIME;
        for (line, key, value) in text::key_values(text).map_err(ConfigError::Syntax)? {
            let bad = |reason: String| ConfigError::Syntax(format!("line {line}: {reason}"));
            match key.as_str() {
                "listen" => listen = Some(value),
                "key_file" => key_file = Some(base.join(value)),
                "trust_root_file" => trust_root_file = Some(base.join(value)),
                "snapshot_file" => snapshot_file = Some(base.join(value)),
                "admin_dns" => {
                    admin_dns = text::quoted_list(&value)
                        .map_err(bad)?
                        .into_iter()
                        .map(|s| SubjectDn::new(s).map_err(|e| bad(e.to_string())))
                        .collect::<Result<_, _>>()?;
                }
                "max_lifetime_seconds" => {
                    max_lifetime_seconds = value
                        .parse()
                        .ok()
                        .filter(|v| *v > 0)
                        .ok_or_else(|| bad(format!("bad max_lifetime_seconds {value:?}")))?;
                }
                other => return Err(bad(format!("unknown key {other:?}"))),
            }
        }
        Ok(Self {
            listen: listen.ok_or(ConfigError::Missing("listen"))?,
            key_file: key_file.ok_or(ConfigError::Missing("key_file"))?,
            trust_root_file: trust_root_file.ok_or(ConfigError::Missing("trust_root_file"))?,
            snapshot_file: snapshot_file.ok_or(ConfigError::Missing("snapshot_file"))?,
            admin_dns,
            max_lifetime_seconds,
        })
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = read(path)?;
        Self::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }

    /// Reads keys and the policy snapshot (empty store if the file is absent).
    pub fn build(&self, clock: Arc<dyn Clock>) -> Result<CasService, ConfigError> {
        let key_file: KeyFile = read_json(&self.key_file)?;
        let key = key_file.key().ok_or_else(|| ConfigError::Invalid {
            path: self.key_file.clone(),
            reason: "bad secret key".into(),
        })?;
        let root: TrustRootFile = read_json(&self.trust_root_file)?;
        let store = match std::fs::read(&self.snapshot_file) {
            Ok(bytes) => PolicyStore::load_snapshot(&bytes).map_err(|source| ConfigError::Snapshot {
                path: self.snapshot_file.clone(),
                source,
            })?,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => PolicyStore::new(),
            Err(source) => {
                return Err(ConfigError::Io {
                    path: self.snapshot_file.clone(),
                    source,
                })
            }
        };
        Ok(CasService::new(
            Issuer {
                dn: key_file.subject,
                key,
                max_lifetime: self.max_lifetime_seconds,
            },
            root.public_key,
            store,
            self.admin_dns.clone(),
            Some(self.snapshot_file.clone()),
            clock,
        ))
    }
}

pub(crate) fn read(path: &Path) -> Result<String, ConfigError> {
    std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub(crate) fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, ConfigError> {
    serde_json::from_str(&read(path)?).map_err(|e| ConfigError::Invalid {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })
}
