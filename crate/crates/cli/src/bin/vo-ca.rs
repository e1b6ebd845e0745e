//! Key and identity provisioning for demos and tests.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context, Result};
use clap::{Parser, Subcommand};
use vo_authz::credentials::{
    write_private_atomic, IdentityCredential, IdentityFile, KeyFile, SecretKey, TrustRootFile,
    TrustedIssuers, DEFAULT_KDF_ITERATIONS,
};
use vo_authz::time::Timestamp;
use vo_authz::SubjectDn;

#[derive(Parser)]
#[command(name = "vo-ca", about = "Create trust roots, identities and service keys")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a trust root: <out>/root.key (private) and <out>/root.json.
    InitRoot {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "/O=vo-authz/CN=Root")]
        subject: String,
    },
    /// Certify a new identity key under the root and seal it with a passphrase.
    IssueIdentity {
        #[arg(long)]
        root_key: PathBuf,
        #[arg(long)]
        subject: String,
        #[arg(long, default_value_t = 365)]
        days: i64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        passphrase_file: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_KDF_ITERATIONS)]
        kdf_iterations: u32,
    },
    /// Generate a signing key for a CAS server. Prints its trusted-issuers line.
    Keygen {
        #[arg(long)]
        subject: String,
        #[arg(long)]
        out: PathBuf,
    },
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T, private: bool) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    if private {
        write_private_atomic(path, &bytes)
    } else {
        std::fs::write(path, &bytes)
    }
    .with_context(|| format!("writing {}", path.display()))
}

fn read_key(path: &Path) -> Result<KeyFile> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn main() -> Result<()> {
    vo_authz_cli::init_tracing();
    match Cli::parse().cmd {
        Cmd::InitRoot { out, subject } => {
            std::fs::create_dir_all(&out)?;
            let key = SecretKey::generate();
            write_json(&out.join("root.key"), &KeyFile::new(SubjectDn::new(&subject)?, &key), true)?;
            write_json(
                &out.join("root.json"),
                &TrustRootFile {
                    public_key: key.public_key(),
                },
                false,
            )?;
            println!("{}", out.join("root.json").display());
        }
        Cmd::IssueIdentity {
            root_key,
            subject,
            days,
            out,
            passphrase_file,
            kdf_iterations,
        } => {
            let root = read_key(&root_key)?.key().ok_or_else(|| anyhow!("bad root key"))?;
            let passphrase = vo_authz_cli::read_passphrase(passphrase_file.as_deref())?;
            let key = SecretKey::generate();
            let now = Timestamp::now();
            let cred = IdentityCredential::issue(
                &root,
                SubjectDn::new(&subject)?,
                key.public_key(),
                now,
                now.plus(days * 86_400),
            )?;
            if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir)?;
            }
            write_json(&out, &IdentityFile::seal(cred, &key, &passphrase, kdf_iterations), true)?;
            println!("{subject}");
        }
        Cmd::Keygen { subject, out } => {
            let dn = SubjectDn::new(&subject)?;
            let key = SecretKey::generate();
            write_json(&out, &KeyFile::new(dn.clone(), &key), true)?;
            print!("{}", TrustedIssuers::new().with(dn, key.public_key()).to_text());
        }
    }
    Ok(())
}
