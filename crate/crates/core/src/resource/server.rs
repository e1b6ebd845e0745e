use std::fs::{self, File};
use std::io::{self, Read, Write};
use std::net::{TcpStream, ToSocketAddrs};
use std::path::Path;
use std::sync::Arc;

use crate::authz::RightsSet;
use crate::credentials::{authenticate_peer, verify_assertion, Assertion, AuthenticatedPeer};
use crate::model::SubjectDn;
use crate::net::{self, ServerHandle};
use crate::wire::{read_message, write_message, Message, ResponseBody, WireError};

use super::audit::AuditRecord;
use super::enforce::{authorize_file_op, FileOp, REASON_OK};
use super::mapping::{map_personal, map_to_account, AccountDecision};
use super::path::VirtualPath;
use super::ResourceService;

/// Largest upload accepted in one PUT.
pub const MAX_PUT_SIZE: u64 = 1 << 30;

pub fn serve(service: Arc<ResourceService>, addr: impl ToSocketAddrs) -> io::Result<ServerHandle> {
    net::spawn(addr, move |mut stream: TcpStream| {
        let peer_addr = stream.peer_addr().ok();
        if let Err(e) = handle_session(&service, &mut stream) {
            tracing::debug!(?peer_addr, error = %e, "file session ended with error");
        }
    })
}

struct Session {
    account: AccountDecision,
    rights: RightsSet,
}

/// Outcome of one audited step: status, reason, and whether it was allowed.
struct Outcome {
    status: u16,
    reason: String,
}

impl Outcome {
    fn new(status: u16, reason: impl Into<String>) -> Self {
        Self {
            status,
            reason: reason.into(),
        }
    }

    fn allowed(&self) -> bool {
        self.status == 200
    }
}

fn protocol_error(channel: &mut impl Write, message: impl Into<String>) -> Result<(), WireError> {
    write_message(channel, &Message::error(400, "protocol-error", message))
}

/// Runs one file-service session over any duplex channel.
pub fn handle_session<C: Read + Write>(svc: &ResourceService, channel: &mut C) -> Result<(), WireError> {
    let peer = match authenticate_peer(channel, &svc.trust_root, svc.now()) {
        Ok(p) => p,
        Err(e) => {
            let record = record(svc, None, None, None, "AUTH", None, false, e.code());
            let (status, reason) = match svc.audit.append(&record) {
                Ok(()) => (401, e.code()),
                Err(_) => (500, "audit-failure"),
            };
            let _ = write_message(channel, &Message::error(status, reason, e.to_string()));
            return Ok(());
        }
    };

    let mut pending = None;
    let session = match read_message(channel) {
        Ok(Message::PresentAssertion { assertion }) => {
            let Some(session) = establish(svc, channel, &peer, assertion.as_ref())? else {
                return Ok(());
            };
            let mut body = ResponseBody::status(200, "mapped");
            body.account = Some(session.account.account.clone());
            body.via = Some(session.account.via.to_string());
            write_message(channel, &Message::Response(body))?;
            session
        }
        Ok(cmd @ Message::Command { .. }) => {
            let Some(session) = establish(svc, channel, &peer, None)? else {
                return Ok(());
            };
            pending = Some(cmd);
            session
        }
        Ok(other) => return protocol_error(channel, format!("unexpected {} frame", other.kind())),
        Err(e @ (WireError::TooLarge(_) | WireError::Malformed(_))) => {
            return protocol_error(channel, e.to_string())
        }
        Err(WireError::Closed) => return Ok(()),
        Err(e) => return Err(e),
    };

    loop {
        let msg = match pending.take() {
            Some(m) => m,
            None => match read_message(channel) {
                Ok(m) => m,
                Err(WireError::Closed) => return Ok(()),
                Err(e @ (WireError::TooLarge(_) | WireError::Malformed(_))) => {
                    return protocol_error(channel, e.to_string())
                }
                Err(e) => return Err(e),
            },
        };
        let Message::Command { op, path, size } = msg else {
            return protocol_error(channel, format!("unexpected {} frame", msg.kind()));
        };
        if op == "QUIT" {
            return write_message(channel, &Message::Response(ResponseBody::status(200, "bye")));
        }
        let Ok(op) = op.parse::<FileOp>() else {
            return protocol_error(channel, format!("unknown operation {op:?}"));
        };
        let size = match (op, size) {
            (FileOp::Put, None) => return protocol_error(channel, "PUT requires a size"),
            (FileOp::Put, Some(s)) if s > MAX_PUT_SIZE => {
                return protocol_error(channel, format!("upload larger than {MAX_PUT_SIZE} bytes"))
            }
            (FileOp::Put, Some(s)) => s,
            _ => 0,
        };
        run_command(svc, channel, &session, op, &path, size)?;
    }
}

/// Verifies the assertion (if any) and maps to an account. On refusal the
/// reply has been sent and `None` is returned.
fn establish<C: Read + Write>(
    svc: &ResourceService,
    channel: &mut C,
    peer: &AuthenticatedPeer,
    assertion: Option<&Assertion>,
) -> Result<Option<Session>, WireError> {
    let claimed_issuer = assertion.map(|a| a.body.issuer.clone());
    let refuse = |channel: &mut C, status: u16, reason: &str, message: String| {
        let record = record(
            svc,
            Some(&peer.subject),
            claimed_issuer.as_ref(),
            None,
            "MAP",
            None,
            false,
            reason,
        );
        let body = match svc.audit.append(&record) {
            Ok(()) => ResponseBody::status(status, reason),
            Err(_) => ResponseBody::status(500, "audit-failure"),
        };
        tracing::info!(subject = %peer.subject, reason, %message, "session refused");
        write_message(channel, &Message::Response(body)).map(|()| None)
    };

    let mapped = match assertion {
        Some(a) => {
            let verified = match verify_assertion(a, &svc.issuers, svc.now()) {
                Ok(v) => v,
                Err(e) => return refuse(channel, 401, e.code(), e.to_string()),
            };
            if verified.subject != peer.subject {
                return refuse(
                    channel,
                    401,
                    "subject-mismatch",
                    format!("assertion names {}", verified.subject),
                );
            }
            map_to_account(&verified, &svc.role_map, &svc.grid_map).map(|d| (d, verified.rights))
        }
        None => map_personal(&peer.subject, &svc.grid_map).map(|d| (d, RightsSet::empty())),
    };
    match mapped {
        Ok((account, rights)) => Ok(Some(Session { account, rights })),
        Err(e) => refuse(channel, 403, e.code(), e.to_string()),
    }
}

#[allow(clippy::too_many_arguments)]
fn record(
    svc: &ResourceService,
    subject: Option<&SubjectDn>,
    issuer: Option<&SubjectDn>,
    session: Option<&Session>,
    op: &str,
    path: Option<&str>,
    allowed: bool,
    reason: &str,
) -> AuditRecord {
    AuditRecord {
        time: svc.now(),
        subject: subject.cloned(),
        issuer: issuer.cloned(),
        account: session.map(|s| s.account.account.clone()),
        via: session.map(|s| s.account.via.to_string()),
        op: op.to_string(),
        path: path.map(str::to_string),
        allowed,
        reason: reason.to_string(),
    }
}

fn drain(channel: &mut impl Read, size: u64) -> Result<(), WireError> {
    let copied = io::copy(&mut channel.by_ref().take(size), &mut io::sink())?;
    if copied < size {
        return Err(WireError::Closed);
    }
    Ok(())
}

/// True if any existing component of `path` below the export root is a
/// symbolic link.
fn crosses_symlink(root: &Path, path: &VirtualPath) -> bool {
    let mut p = root.to_path_buf();
    for c in path.components() {
        p.push(c);
        match fs::symlink_metadata(&p) {
            Ok(m) if m.file_type().is_symlink() => return true,
            Ok(_) => {}
            Err(_) => return false,
        }
    }
    false
}

enum Payload {
    None,
    Entries(Vec<String>),
    File(File, u64),
}

fn run_command<C: Read + Write>(
    svc: &ResourceService,
    channel: &mut C,
    session: &Session,
    op: FileOp,
    raw_path: &str,
    size: u64,
) -> Result<(), WireError> {
    // A refused upload is still read off the wire to keep the stream in step.
    let finish_upload = |channel: &mut C| match op {
        FileOp::Put => drain(channel, size),
        _ => Ok(()),
    };

    let (outcome, audit_path, payload) = match VirtualPath::parse(raw_path) {
        Err(e) => {
            finish_upload(channel)?;
            tracing::debug!(error = %e, "bad path");
            (Outcome::new(400, "bad-path"), raw_path.to_string(), Payload::None)
        }
        Ok(path) => {
            let decision = authorize_file_op(&session.rights, &session.account, op, &path, &svc.resource());
            let host = path.under(&svc.export_root);
            let (outcome, payload) = if !decision.allowed {
                finish_upload(channel)?;
                (Outcome::new(403, decision.reason), Payload::None)
            } else if crosses_symlink(&svc.export_root, &path) {
                finish_upload(channel)?;
                (Outcome::new(403, "symlink"), Payload::None)
            } else {
                match op {
                    FileOp::List => list(&host),
                    FileOp::Get => get(&host),
                    FileOp::Put => put(channel, &host, size)?,
                }
            };
            (outcome, path.to_string(), payload)
        }
    };

    let rec = record(
        svc,
        Some(&session.account.subject),
        session.account.issuer.as_ref(),
        Some(session),
        op.as_str(),
        Some(&audit_path),
        outcome.allowed(),
        &outcome.reason,
    );
    if let Err(e) = svc.audit.append(&rec) {
        tracing::error!(error = %e, "audit write failed");
        if op == FileOp::Put && outcome.allowed() {
            let _ = fs::remove_file(VirtualPath::parse(raw_path).map(|p| p.under(&svc.export_root)).unwrap_or_default());
        }
        return write_message(channel, &Message::Response(ResponseBody::status(500, "audit-failure")));
    }

    let mut body = ResponseBody::status(outcome.status, outcome.reason);
    match payload {
        Payload::None => write_message(channel, &Message::Response(body)),
        Payload::Entries(entries) => {
            body.entries = entries;
            write_message(channel, &Message::Response(body))
        }
        Payload::File(file, size) => {
            write_message(channel, &Message::Response(body))?;
            write_message(channel, &Message::DataHeader { size })?;
            let sent = io::copy(&mut file.take(size), channel)?;
            if sent < size {
                return Err(WireError::Io(io::Error::new(
                    io::ErrorKind::UnexpectedEof,
                    "file shrank during transfer",
                )));
            }
            channel.flush()?;
            Ok(())
        }
    }
}

fn io_outcome(e: &io::Error) -> Outcome {
    match e.kind() {
        io::ErrorKind::NotFound => Outcome::new(404, "not-found"),
        io::ErrorKind::AlreadyExists => Outcome::new(409, "exists"),
        _ => Outcome::new(500, "io-error"),
    }
}

fn list(host: &Path) -> (Outcome, Payload) {
    let read = || -> io::Result<Option<Vec<String>>> {
        if !fs::metadata(host)?.is_dir() {
            return Ok(None);
        }
        let mut names = Vec::new();
        for entry in fs::read_dir(host)? {
            let entry = entry?;
            let mut name = entry.file_name().to_string_lossy().into_owned();
            if entry.file_type()?.is_dir() {
                name.push('/');
            }
            names.push(name);
        }
        names.sort();
        Ok(Some(names))
    };
    match read() {
        Ok(Some(names)) => (Outcome::new(200, REASON_OK), Payload::Entries(names)),
        Ok(None) => (Outcome::new(400, "not-a-directory"), Payload::None),
        Err(e) => (io_outcome(&e), Payload::None),
    }
}

fn get(host: &Path) -> (Outcome, Payload) {
    let open = || -> io::Result<Option<(File, u64)>> {
        let file = File::open(host)?;
        let meta = file.metadata()?;
        Ok(meta.is_file().then_some((file, meta.len())))
    };
    match open() {
        Ok(Some((file, size))) => (Outcome::new(200, REASON_OK), Payload::File(file, size)),
        Ok(None) => (Outcome::new(400, "not-a-file"), Payload::None),
        Err(e) => (io_outcome(&e), Payload::None),
    }
}

/// Receives exactly `size` bytes, then creates the target without
/// overwriting anything.
fn put(channel: &mut impl Read, host: &Path, size: u64) -> Result<(Outcome, Payload), WireError> {
    let parent = host.parent().filter(|p| p.is_dir());
    let Some(parent) = parent else {
        drain(channel, size)?;
        return Ok((Outcome::new(404, "not-found"), Payload::None));
    };
    if fs::symlink_metadata(host).is_ok() {
        drain(channel, size)?;
        return Ok((Outcome::new(409, "exists"), Payload::None));
    }
    let mut tmp = match tempfile::NamedTempFile::new_in(parent) {
        Ok(t) => t,
        Err(e) => {
            drain(channel, size)?;
            return Ok((io_outcome(&e), Payload::None));
        }
    };
    let received = io::copy(&mut channel.by_ref().take(size), tmp.as_file_mut())?;
    if received < size {
        return Err(WireError::Closed);
    }
    let outcome = match tmp.persist_noclobber(host) {
        Ok(_) => Outcome::new(200, REASON_OK),
        Err(e) => io_outcome(&e.error),
    };
    Ok((outcome, Payload::None))
}
