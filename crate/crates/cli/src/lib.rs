//! Shared helpers for the command-line tools.

use std::io::BufRead;
use std::path::Path;

use anyhow::{bail, Context, Result};

pub const PASSPHRASE_ENV: &str = "VO_AUTHZ_PASSPHRASE";

pub fn init_tracing() {
    let filter = tracing_subscriber::EnvFilter::try_from_default_env()
        .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("info"));
    tracing_subscriber::fmt()
        .with_env_filter(filter)
        .with_writer(std::io::stderr)
        .init();
}

/// From `file` if given, else `$VO_AUTHZ_PASSPHRASE`, else one line of stdin.
pub fn read_passphrase(file: Option<&Path>) -> Result<String> {
    if let Some(f) = file {
        let text = std::fs::read_to_string(f).with_context(|| format!("reading {}", f.display()))?;
        return Ok(text.trim_end_matches(['\r', '\n']).to_string());
    }
    if let Ok(p) = std::env::var(PASSPHRASE_ENV) {
        return Ok(p);
    }
    eprint!("Enter passphrase: ");
    let mut line = String::new();
    std::io::stdin().lock().read_line(&mut line)?;
    let line = line.trim_end_matches(['\r', '\n']).to_string();
    if line.is_empty() {
        bail!("empty passphrase");
    }
    Ok(line)
}

/// Accepts `/path` or `ftp://<server-name>/path`; the host must match
/// `server_name` when one is configured.
pub fn remote_path(arg: &str, server_name: Option<&str>) -> Result<String> {
    let Some(rest) = arg.strip_prefix("ftp://") else {
        return Ok(arg.to_string());
    };
    let (host, path) = rest.find('/').map_or((rest, "/"), |i| (&rest[..i], &rest[i..]));
    match server_name {
        Some(name) if name != host => bail!("{arg}: host {host:?} is not {name:?}"),
        _ => Ok(path.to_string()),
    }
}
