use std::fmt::Write as _;
use std::fs::{File, OpenOptions};
use std::io::{self, Write};
use std::path::Path;
use std::sync::Mutex;

use crate::model::SubjectDn;
use crate::time::Timestamp;

/// One audited event. `op` is `LIST`, `GET`, `PUT`, `MAP` or `AUTH`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AuditRecord {
    pub time: Timestamp,
    pub subject: Option<SubjectDn>,
    pub issuer: Option<SubjectDn>,
    pub account: Option<String>,
    pub via: Option<String>,
    pub op: String,
    pub path: Option<String>,
    pub allowed: bool,
    pub reason: String,
}

impl AuditRecord {
    /// A tab-separated line with a trailing newline. Missing fields are `-`;
    /// tabs, newlines and backslashes in client-supplied text are escaped.
    pub fn to_line(&self) -> String {
        let opt = |s: Option<&str>| s.map(escape).unwrap_or_else(|| "-".into());
        let fields = [
            self.time.to_rfc3339(),
            opt(self.subject.as_ref().map(SubjectDn::as_str)),
            opt(self.issuer.as_ref().map(SubjectDn::as_str)),
            opt(self.account.as_deref()),
            opt(self.via.as_deref()),
            escape(&self.op),
            opt(self.path.as_deref()),
            if self.allowed { "allow" } else { "deny" }.to_string(),
            escape(&self.reason),
        ];
        let mut line = fields.join("\t");
        line.push('\n');
        line
    }
}

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '\t' => out.push_str("\\t"),
            '\n' => out.push_str("\\n"),
            c if c.is_control() => {
                let _ = write!(out, "\\u{{{:x}}}", c as u32);
            }
            c => out.push(c),
        }
    }
    out
}

/// Where audit records go. `append` must not return until the record is
/// durable enough to survive the process; callers fail the command otherwise.
pub trait AuditSink: Send + Sync {
    fn append(&self, record: &AuditRecord) -> io::Result<()>;
}

/// Appends lines to a file, one write per record.
#[derive(Debug)]
pub struct FileAuditLog {
    file: Mutex<File>,
}

impl FileAuditLog {
    pub fn open(path: &Path) -> io::Result<Self> {
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(Self { file: Mutex::new(file) })
    }
}

impl AuditSink for FileAuditLog {
    fn append(&self, record: &AuditRecord) -> io::Result<()> {
        let mut f = self.file.lock().unwrap_or_else(|e| e.into_inner());
        f.write_all(record.to_line().as_bytes())?;
        f.flush()
    }
}

/// Keeps records in memory, for tests and embedding.
#[derive(Debug, Default)]
pub struct MemoryAuditLog {
    records: Mutex<Vec<AuditRecord>>,
}

impl MemoryAuditLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn records(&self) -> Vec<AuditRecord> {
        self.records.lock().unwrap().clone()
    }
}

impl AuditSink for MemoryAuditLog {
    fn append(&self, record: &AuditRecord) -> io::Result<()> {
        self.records.lock().unwrap().push(record.clone());
        Ok(())
    }
}
