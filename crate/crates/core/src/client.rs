//! The member's side: session credentials, tagged assertions, and the
//! client halves of the CAS and file protocols.
//!
//! Credentials live in one directory (`~/.vo-authz` unless `VO_AUTHZ_DIR`
//! says otherwise):
//!
//! ```text
//! identity.json       sealed long-term identity
//! session.json        current session credential and key
//! tags/<tag>.json     one assertion per tag
//! ```

use std::fs;
use std::io::{self, Read, Write};
use std::net::{TcpStream, ToSocketAddrs};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::authz::{roles_in, RightsSet};
use crate::credentials::{
    prove_identity, write_private_atomic, Assertion, CredentialError, HandshakeError, IdentityFile,
    IdentityFileError, SecretKey, SessionCredential, SessionFile, DEFAULT_SESSION_LIFETIME,
};
use crate::model::{ModelError, RightsTuple, RoleName, SubjectDn, Tag};
use crate::net::IO_TIMEOUT;
use crate::time::Timestamp;
use crate::wire::{read_message, write_message, Message, ResponseBody, WireError};

pub const DIR_ENV: &str = "VO_AUTHZ_DIR";

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}: {reason}")]
    Corrupt { path: PathBuf, reason: String },
    #[error(transparent)]
    Identity(#[from] IdentityFileError),
    #[error(transparent)]
    Credential(#[from] CredentialError),
    #[error("no session; run identity-init first")]
    NoSession,
    #[error("session expired at {0}; run identity-init again")]
    SessionExpired(Timestamp),
    #[error("no such tag: {0}")]
    NoSuchTag(String),
    #[error("tag {tag} expired at {at}; run cas-init again")]
    TagExpired { tag: String, at: Timestamp },
    #[error(transparent)]
    BadName(#[from] ModelError),
    #[error("connect {addr}: {source}")]
    Connect { addr: String, source: io::Error },
    #[error("authentication failed: {0}")]
    Handshake(#[from] HandshakeError),
    #[error(transparent)]
    Wire(#[from] WireError),
    #[error("refused ({status} {reason}): {message}")]
    Refused {
        status: u16,
        reason: String,
        message: String,
        uncovered: Vec<RightsTuple>,
    },
    #[error("{op} failed: {status} {reason}")]
    Failed { op: String, status: u16, reason: String },
}

impl ClientError {
    /// The server's machine-readable reason, if the server refused.
    pub fn reason(&self) -> Option<&str> {
        match self {
            ClientError::Refused { reason, .. } | ClientError::Failed { reason, .. } => Some(reason),
            _ => None,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> ClientError + '_ {
    move |source| ClientError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// An assertion saved under a tag, together with the session it was issued
/// to. Commands under the tag authenticate with that session, so later
/// `identity-init` runs do not disturb existing tags.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TagFile {
    pub tag: String,
    pub cas: String,
    pub created_at: Timestamp,
    pub assertion: Assertion,
    pub session: SessionFile,
}

impl TagFile {
    /// The earlier of the assertion's and the session's expiry.
    pub fn not_after(&self) -> Timestamp {
        self.assertion.body.not_after.min(self.session.session.not_after)
    }
}

/// A usable tag: its assertion, session credential and session key.
#[derive(Debug, Clone)]
pub struct TaggedCredential {
    pub assertion: Assertion,
    pub session: SessionCredential,
    pub key: SecretKey,
}

/// One row of `vo tags`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TagSummary {
    pub tag: String,
    pub subject: SubjectDn,
    pub issuer: SubjectDn,
    pub roles: Vec<RoleName>,
    pub not_after: Timestamp,
    pub expired: bool,
}

/// The client's credential directory.
#[derive(Debug, Clone)]
pub struct CredentialStore {
    dir: PathBuf,
}

impl CredentialStore {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    /// `$VO_AUTHZ_DIR`, else `$HOME/.vo-authz`.
    pub fn from_env() -> Self {
        if let Some(d) = std::env::var_os(DIR_ENV) {
            return Self::new(d);
        }
        let home = std::env::var_os("HOME").map(PathBuf::from).unwrap_or_else(|| ".".into());
        Self::new(home.join(".vo-authz"))
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn identity_path(&self) -> PathBuf {
        self.dir.join("identity.json")
    }

    pub fn session_path(&self) -> PathBuf {
        self.dir.join("session.json")
    }

    fn tags_dir(&self) -> PathBuf {
        self.dir.join("tags")
    }

    pub fn tag_path(&self, tag: &Tag) -> PathBuf {
        self.tags_dir().join(format!("{tag}.json"))
    }

    fn ensure_dir(&self, dir: &Path) -> Result<(), ClientError> {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        #[cfg(unix)]
        {
            use std::os::unix::fs::PermissionsExt;
            fs::set_permissions(dir, fs::Permissions::from_mode(0o700)).map_err(io_err(dir))?;
        }
        Ok(())
    }

    fn write_json<T: Serialize>(&self, path: &Path, value: &T) -> Result<(), ClientError> {
        let mut bytes = serde_json::to_vec_pretty(value).expect("credential types serialize");
        bytes.push(b'\n');
        write_private_atomic(path, &bytes).map_err(io_err(path))
    }

    fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Option<T>, ClientError> {
        let bytes = match fs::read(path) {
            Ok(b) => b,
            Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(None),
            Err(e) => return Err(io_err(path)(e)),
        };
        serde_json::from_slice(&bytes).map(Some).map_err(|e| ClientError::Corrupt {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })
    }

    pub fn save_identity(&self, identity: &IdentityFile) -> Result<(), ClientError> {
        self.ensure_dir(&self.dir)?;
        self.write_json(&self.identity_path(), identity)
    }

    pub fn load_identity(&self, path: Option<&Path>) -> Result<IdentityFile, ClientError> {
        let default = self.identity_path();
        let path = path.unwrap_or(&default);
        Self::read_json(path)?.ok_or_else(|| ClientError::Io {
            path: path.to_path_buf(),
            source: io::Error::new(io::ErrorKind::NotFound, "no identity file"),
        })
    }

    pub fn save_session(&self, session: &SessionFile) -> Result<(), ClientError> {
        self.ensure_dir(&self.dir)?;
        self.write_json(&self.session_path(), session)
    }

    /// The current session and its key, refusing one that has expired.
    pub fn load_session(&self, now: Timestamp) -> Result<(SessionCredential, SecretKey), ClientError> {
        let path = self.session_path();
        let file: SessionFile = Self::read_json(&path)?.ok_or(ClientError::NoSession)?;
        if now >= file.session.not_after {
            return Err(ClientError::SessionExpired(file.session.not_after));
        }
        let key = file.key().ok_or_else(|| ClientError::Corrupt {
            path,
            reason: "bad session key".into(),
        })?;
        Ok((file.session, key))
    }

    /// Stores an assertion and its session under `tag`. Returns true if an
    /// older one was replaced.
    pub fn save_tag(&self, tag: &Tag, file: &TagFile) -> Result<bool, ClientError> {
        self.ensure_dir(&self.tags_dir())?;
        let path = self.tag_path(tag);
        let replaced = path.exists();
        self.write_json(&path, file)?;
        Ok(replaced)
    }

    pub fn load_tag(&self, tag: &Tag) -> Result<TagFile, ClientError> {
        Self::read_json(&self.tag_path(tag))?.ok_or_else(|| ClientError::NoSuchTag(tag.to_string()))
    }

    /// The credential under `tag`, refusing one whose assertion or session
    /// has expired.
    pub fn usable_tag(&self, tag: &Tag, now: Timestamp) -> Result<TaggedCredential, ClientError> {
        let path = self.tag_path(tag);
        let file = self.load_tag(tag)?;
        if now >= file.not_after() {
            return Err(ClientError::TagExpired {
                tag: tag.to_string(),
                at: file.not_after(),
            });
        }
        let key = file.session.key().ok_or_else(|| ClientError::Corrupt {
            path,
            reason: "bad session key".into(),
        })?;
        Ok(TaggedCredential {
            assertion: file.assertion,
            session: file.session.session,
            key,
        })
    }

    /// All readable tags, sorted by name. Unreadable files are skipped.
    pub fn list_tags(&self, now: Timestamp) -> Result<Vec<TagSummary>, ClientError> {
        let dir = self.tags_dir();
        let entries = match fs::read_dir(&dir) {
            Ok(e) => e,
            Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(io_err(&dir)(e)),
        };
        let mut rows = Vec::new();
        for entry in entries {
            let path = entry.map_err(io_err(&dir))?.path();
            if path.extension().and_then(|e| e.to_str()) != Some("json") {
                continue;
            }
            let file: TagFile = match Self::read_json(&path) {
                Ok(Some(f)) => f,
                Ok(None) => continue,
                Err(e) => {
                    tracing::warn!(error = %e, "skipping unreadable tag");
                    continue;
                }
            };
            let body = &file.assertion.body;
            let (roles, _) = roles_in(&RightsSet::new(body.rights.iter().cloned()));
            rows.push(TagSummary {
                tag: file.tag.clone(),
                subject: body.subject.clone(),
                issuer: body.issuer.clone(),
                roles,
                not_after: file.not_after(),
                expired: now >= file.not_after(),
            });
        }
        rows.sort_by(|a, b| a.tag.cmp(&b.tag));
        Ok(rows)
    }
}

/// Unseals the identity and writes a fresh session credential. Without an
/// explicit lifetime the session runs for the default period, capped at the
/// identity's expiry; an explicit lifetime past that expiry is an error.
pub fn identity_init(
    store: &CredentialStore,
    identity_path: Option<&Path>,
    passphrase: &str,
    lifetime: Option<i64>,
    now: Timestamp,
) -> Result<SessionCredential, ClientError> {
    let identity = store.load_identity(identity_path)?;
    let identity_key = identity.unseal(passphrase)?;
    if now >= identity.credential.not_after {
        return Err(CredentialError::Expired {
            what: "identity",
            at: identity.credential.not_after,
        }
        .into());
    }
    let not_after = match lifetime {
        Some(secs) => now.plus(secs),
        None => now
            .plus(DEFAULT_SESSION_LIFETIME)
            .min(identity.credential.not_after),
    };
    let session_key = SecretKey::generate();
    let session = SessionCredential::delegate(
        &identity.credential,
        &identity_key,
        session_key.public_key(),
        not_after,
    )?;
    store.save_session(&SessionFile::new(session.clone(), &session_key))?;
    Ok(session)
}

/// Opens a TCP connection with the standard I/O timeouts.
pub fn connect(addr: &str) -> Result<TcpStream, ClientError> {
    let connect_err = |source| ClientError::Connect {
        addr: addr.to_string(),
        source,
    };
    let addrs: Vec<_> = addr.to_socket_addrs().map_err(connect_err)?.collect();
    let stream = TcpStream::connect(&addrs[..]).map_err(|e| ClientError::Connect {
        addr: addr.to_string(),
        source: e,
    })?;
    let _ = stream.set_read_timeout(Some(IO_TIMEOUT));
    let _ = stream.set_write_timeout(Some(IO_TIMEOUT));
    Ok(stream)
}

fn refused(e: crate::wire::ErrorBody) -> ClientError {
    ClientError::Refused {
        status: e.status,
        reason: e.reason,
        message: e.message,
        uncovered: e.uncovered,
    }
}

fn unexpected(got: &Message, expected: &'static str) -> ClientError {
    ClientError::Wire(WireError::Unexpected {
        got: got.kind(),
        expected,
    })
}

/// Asks a CAS for an assertion over an open channel.
pub fn request_assertion<C: Read + Write>(
    channel: &mut C,
    session: &SessionCredential,
    key: &SecretKey,
    requested: &RightsSet,
    lifetime_seconds: Option<u64>,
) -> Result<Assertion, ClientError> {
    prove_identity(channel, session, key)?;
    write_message(
        channel,
        &Message::IssueRequest {
            requested: requested.tuples().to_vec(),
            lifetime_seconds,
        },
    )?;
    match read_message(channel)? {
        Message::IssueResponse { assertion } => Ok(assertion),
        Message::Error(e) => Err(refused(e)),
        other => Err(unexpected(&other, "issue_response")),
    }
}

/// Sends an admin command file to a CAS. Returns the number of commands applied.
pub fn admin_load<C: Read + Write>(
    channel: &mut C,
    session: &SessionCredential,
    key: &SecretKey,
    text: &str,
) -> Result<usize, ClientError> {
    prove_identity(channel, session, key)?;
    write_message(channel, &Message::AdminLoad { text: text.to_string() })?;
    match read_message(channel)? {
        Message::AdminResult { applied } => Ok(applied),
        Message::Error(e) => Err(refused(e)),
        other => Err(unexpected(&other, "admin_result")),
    }
}

/// Requests an assertion and stores it under `tag`. Returns the assertion
/// and whether an existing tag was overwritten.
pub fn cas_init(
    store: &CredentialStore,
    tag: &Tag,
    cas_addr: &str,
    requested: &RightsSet,
    lifetime_seconds: Option<u64>,
    now: Timestamp,
) -> Result<(Assertion, bool), ClientError> {
    let (session, key) = store.load_session(now)?;
    let mut stream = connect(cas_addr)?;
    let assertion = request_assertion(&mut stream, &session, &key, requested, lifetime_seconds)?;
    let file = TagFile {
        tag: tag.to_string(),
        cas: cas_addr.to_string(),
        created_at: now,
        assertion: assertion.clone(),
        session: SessionFile::new(session, &key),
    };
    let replaced = store.save_tag(tag, &file)?;
    if replaced {
        tracing::warn!(%tag, "replaced existing tag");
    }
    Ok((assertion, replaced))
}

/// How the file service mapped a session.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mapped {
    pub account: String,
    pub via: String,
}

/// A mapped file-service session.
pub struct FileClient<C: Read + Write> {
    channel: C,
    mapped: Mapped,
}

impl<C: Read + Write> FileClient<C> {
    /// Authenticates and presents `assertion` (or none, for a personal session).
    pub fn open(
        mut channel: C,
        session: &SessionCredential,
        key: &SecretKey,
        assertion: Option<&Assertion>,
    ) -> Result<Self, ClientError> {
        prove_identity(&mut channel, session, key)?;
        write_message(
            &mut channel,
            &Message::PresentAssertion {
                assertion: assertion.cloned(),
            },
        )?;
        let body = Self::response(&mut channel, "MAP")?;
        Ok(Self {
            channel,
            mapped: Mapped {
                account: body.account.unwrap_or_default(),
                via: body.via.unwrap_or_default(),
            },
        })
    }

    pub fn mapped(&self) -> &Mapped {
        &self.mapped
    }

    fn response(channel: &mut C, op: &str) -> Result<ResponseBody, ClientError> {
        match read_message(channel)? {
            Message::Response(body) if body.status == 200 => Ok(body),
            Message::Response(body) => Err(ClientError::Failed {
                op: op.to_string(),
                status: body.status,
                reason: body.reason,
            }),
            Message::Error(e) => Err(refused(e)),
            other => Err(unexpected(&other, "response")),
        }
    }

    fn command(&mut self, op: &str, path: &str, size: Option<u64>) -> Result<(), ClientError> {
        write_message(
            &mut self.channel,
            &Message::Command {
                op: op.to_string(),
                path: path.to_string(),
                size,
            },
        )?;
        Ok(())
    }

    pub fn list(&mut self, path: &str) -> Result<Vec<String>, ClientError> {
        self.command("LIST", path, None)?;
        Ok(Self::response(&mut self.channel, "LIST")?.entries)
    }

    /// Streams the remote file into `out`; returns the byte count.
    pub fn get(&mut self, path: &str, out: &mut impl Write) -> Result<u64, ClientError> {
        self.command("GET", path, None)?;
        Self::response(&mut self.channel, "GET")?;
        let size = match read_message(&mut self.channel)? {
            Message::DataHeader { size } => size,
            other => return Err(unexpected(&other, "data_header")),
        };
        let got = io::copy(&mut (&mut self.channel).take(size), out).map_err(WireError::from)?;
        if got < size {
            return Err(WireError::Closed.into());
        }
        Ok(size)
    }

    pub fn put(&mut self, path: &str, data: &[u8]) -> Result<(), ClientError> {
        self.command("PUT", path, Some(data.len() as u64))?;
        self.channel.write_all(data).map_err(WireError::from)?;
        self.channel.flush().map_err(WireError::from)?;
        Self::response(&mut self.channel, "PUT").map(|_| ())
    }

    pub fn quit(mut self) -> Result<(), ClientError> {
        self.command("QUIT", "/", None)?;
        Self::response(&mut self.channel, "QUIT").map(|_| ())
    }
}

/// A file operation for [`run`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RunCommand {
    Ls { path: String },
    Get { remote: String, local: PathBuf },
    Put { local: PathBuf, remote: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RunOutput {
    Listing(Vec<String>),
    Fetched(u64),
    Stored(u64),
}

/// Runs one file operation, under the credential stored as `tag` or, with
/// no tag, as a personal session on the current session credential.
pub fn run(
    store: &CredentialStore,
    tag: Option<&Tag>,
    server: &str,
    command: &RunCommand,
    now: Timestamp,
) -> Result<(Mapped, RunOutput), ClientError> {
    let (session, key, assertion) = match tag {
        Some(t) => {
            let c = store.usable_tag(t, now)?;
            (c.session, c.key, Some(c.assertion))
        }
        None => {
            let (s, k) = store.load_session(now)?;
            (s, k, None)
        }
    };
    let stream = connect(server)?;
    let mut client = FileClient::open(stream, &session, &key, assertion.as_ref())?;
    let output = match command {
        RunCommand::Ls { path } => RunOutput::Listing(client.list(path)?),
        RunCommand::Get { remote, local } => {
            let mut buf = Vec::new();
            let n = client.get(remote, &mut buf)?;
            fs::write(local, &buf).map_err(io_err(local))?;
            RunOutput::Fetched(n)
        }
        RunCommand::Put { local, remote } => {
            let data = fs::read(local).map_err(io_err(local))?;
            client.put(remote, &data)?;
            RunOutput::Stored(data.len() as u64)
        }
    };
    let mapped = client.mapped().clone();
    client.quit()?;
    Ok((mapped, output))
}
