//! Length-prefixed JSON framing shared by both services.
//!
//! Each frame is a 4-byte big-endian length followed by that many bytes of
//! UTF-8 JSON carrying a `type` field. File payloads are the one exception:
//! raw bytes of a size announced in the preceding frame.

use std::io::{self, Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::credentials::{Assertion, SessionCredential, SignatureBytes};
use crate::model::RightsTuple;

/// Largest accepted frame body, in bytes.
pub const MAX_FRAME: usize = 1_048_576;

#[derive(Debug, Error)]
pub enum WireError {
    #[error("connection closed")]
    Closed,
    #[error("timed out")]
    Timeout,
    #[error("frame of {0} bytes exceeds the {MAX_FRAME} byte limit")]
    TooLarge(usize),
    #[error("malformed frame: {0}")]
    Malformed(String),
    #[error("unexpected {got} frame, expected {expected}")]
    Unexpected { got: &'static str, expected: &'static str },
    #[error(transparent)]
    Io(io::Error),
}

impl From<io::Error> for WireError {
    fn from(e: io::Error) -> Self {
        match e.kind() {
            io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut => WireError::Timeout,
            io::ErrorKind::UnexpectedEof => WireError::Closed,
            _ => WireError::Io(e),
        }
    }
}

#[allow(clippy::large_enum_variant)]
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Message {
    Challenge {
        nonce: String,
    },
    Auth {
        session: SessionCredential,
        signature: SignatureBytes,
    },
    IssueRequest {
        #[serde(default)]
        requested: Vec<RightsTuple>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        lifetime_seconds: Option<u64>,
    },
    IssueResponse {
        assertion: Assertion,
    },
    AdminLoad {
        text: String,
    },
    AdminResult {
        applied: usize,
    },
    Error(ErrorBody),
    PresentAssertion {
        assertion: Option<Assertion>,
    },
    Command {
        op: String,
        path: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        size: Option<u64>,
    },
    Response(ResponseBody),
    DataHeader {
        size: u64,
    },
}

impl Message {
    pub fn kind(&self) -> &'static str {
        match self {
            Message::Challenge { .. } => "challenge",
            Message::Auth { .. } => "auth",
            Message::IssueRequest { .. } => "issue_request",
            Message::IssueResponse { .. } => "issue_response",
            Message::AdminLoad { .. } => "admin_load",
            Message::AdminResult { .. } => "admin_result",
            Message::Error(_) => "error",
            Message::PresentAssertion { .. } => "present_assertion",
            Message::Command { .. } => "command",
            Message::Response(_) => "response",
            Message::DataHeader { .. } => "data_header",
        }
    }

    pub fn error(status: u16, reason: impl Into<String>, message: impl Into<String>) -> Self {
        Message::Error(ErrorBody {
            status,
            reason: reason.into(),
            message: message.into(),
            uncovered: Vec::new(),
        })
    }
}

/// Payload of an `error` frame. `reason` is a stable machine-readable code.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub status: u16,
    pub reason: String,
    pub message: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub uncovered: Vec<RightsTuple>,
}

/// Payload of a file-service `response` frame.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResponseBody {
    pub status: u16,
    pub reason: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub account: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub via: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub entries: Vec<String>,
}

impl ResponseBody {
    pub fn status(status: u16, reason: impl Into<String>) -> Self {
        Self {
            status,
            reason: reason.into(),
            account: None,
            via: None,
            entries: Vec::new(),
        }
    }
}

pub fn write_message(w: &mut impl Write, msg: &Message) -> Result<(), WireError> {
    let body = serde_json::to_vec(msg).map_err(|e| WireError::Malformed(e.to_string()))?;
    write_frame(w, &body)
}

pub fn write_frame(w: &mut impl Write, body: &[u8]) -> Result<(), WireError> {
    if body.len() > MAX_FRAME {
        return Err(WireError::TooLarge(body.len()));
    }
    w.write_all(&(body.len() as u32).to_be_bytes())?;
    w.write_all(body)?;
    w.flush()?;
    Ok(())
}

/// Reads one frame body. An oversized length is rejected before any of
/// the body is read.
pub fn read_frame(r: &mut impl Read) -> Result<Vec<u8>, WireError> {
    let mut len = [0u8; 4];
    r.read_exact(&mut len)?;
    let len = u32::from_be_bytes(len) as usize;
    if len > MAX_FRAME {
        return Err(WireError::TooLarge(len));
    }
    let mut body = vec![0u8; len];
    r.read_exact(&mut body)?;
    Ok(body)
}

pub fn read_message(r: &mut impl Read) -> Result<Message, WireError> {
    let body = read_frame(r)?;
    serde_json::from_slice(&body).map_err(|e| WireError::Malformed(e.to_string()))
}
