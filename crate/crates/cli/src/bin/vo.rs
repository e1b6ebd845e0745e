use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use vo_authz::authz::{parse_filter_file, RightsSet};
use vo_authz::client::{self, ClientError, CredentialStore, RunCommand, RunOutput};
use vo_authz::time::Timestamp;
use vo_authz::Tag;
use vo_authz_cli::remote_path;

const DEFAULT_CAS: &str = "127.0.0.1:7512";
const DEFAULT_RESOURCE: &str = "127.0.0.1:2813";

#[derive(Parser)]
#[command(name = "vo", about = "Acquire tagged VO credentials and use them")]
struct Cli {
    /// Credential directory (default: $VO_AUTHZ_DIR or ~/.vo-authz).
    #[arg(long, global = true)]
    dir: Option<PathBuf>,
    /// Host name used in ftp:// URLs for remote paths.
    #[arg(long, global = true)]
    server_name: Option<String>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Unlock the identity and create a session credential.
    IdentityInit {
        #[arg(long)]
        identity: Option<PathBuf>,
        #[arg(long)]
        passphrase_file: Option<PathBuf>,
        /// Session lifetime in seconds.
        #[arg(long)]
        lifetime: Option<i64>,
    },
    /// Obtain an assertion from a CAS and store it under <tag>.
    CasInit {
        tag: String,
        #[arg(short = 'f', long)]
        filter: Option<PathBuf>,
        #[arg(long, default_value = DEFAULT_CAS)]
        server: String,
        #[arg(long)]
        lifetime: Option<u64>,
    },
    /// Run one file command under <tag> (`-` for a personal session).
    Run {
        tag: String,
        #[arg(long, default_value = DEFAULT_RESOURCE)]
        server: String,
        #[command(subcommand)]
        op: Op,
    },
    /// List stored tags.
    Tags,
    /// Send a command file to the CAS (administrators only).
    AdminLoad {
        file: PathBuf,
        #[arg(long, default_value = DEFAULT_CAS)]
        server: String,
    },
}

#[derive(Subcommand)]
enum Op {
    Ls { path: String },
    Get { remote: String, local: PathBuf },
    Put { local: PathBuf, remote: String },
}

fn main() -> ExitCode {
    vo_authz_cli::init_tracing();
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            if let Some(ClientError::Refused { uncovered, .. }) = e.downcast_ref::<ClientError>() {
                for t in uncovered {
                    eprintln!("  not granted: {} {} {} {}", t.service_type(), t.action(), t.target(), t.match_mode());
                }
            }
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    let store = cli.dir.map(CredentialStore::new).unwrap_or_else(CredentialStore::from_env);
    let now = Timestamp::now();
    match cli.cmd {
        Cmd::IdentityInit {
            identity,
            passphrase_file,
            lifetime,
        } => {
            let passphrase = vo_authz_cli::read_passphrase(passphrase_file.as_deref())?;
            let session = client::identity_init(&store, identity.as_deref(), &passphrase, lifetime, now)?;
            println!("Your identity: {}", session.identity.subject);
            println!("Your session is valid until {}", session.not_after);
        }
        Cmd::CasInit {
            tag,
            filter,
            server,
            lifetime,
        } => {
            let tag = Tag::new(&tag)?;
            let requested = match filter {
                Some(f) => {
                    let text = std::fs::read_to_string(&f).with_context(|| format!("reading {}", f.display()))?;
                    parse_filter_file(&text).with_context(|| format!("{}", f.display()))?
                }
                None => RightsSet::empty(),
            };
            let (assertion, replaced) = client::cas_init(&store, &tag, &server, &requested, lifetime, now)?;
            if replaced {
                eprintln!("warning: replaced existing tag {tag}");
            }
            println!(
                "Tag {tag}: {} rights from {}, valid until {}",
                assertion.body.rights.len(),
                assertion.body.issuer,
                assertion.body.not_after
            );
        }
        Cmd::Run { tag, server, op } => {
            let tag = if tag == "-" { None } else { Some(Tag::new(&tag)?) };
            let name = cli.server_name.as_deref();
            let command = match op {
                Op::Ls { path } => RunCommand::Ls {
                    path: remote_path(&path, name)?,
                },
                Op::Get { remote, local } => RunCommand::Get {
                    remote: remote_path(&remote, name)?,
                    local,
                },
                Op::Put { local, remote } => RunCommand::Put {
                    local,
                    remote: remote_path(&remote, name)?,
                },
            };
            let (mapped, output) = client::run(&store, tag.as_ref(), &server, &command, now)?;
            tracing::debug!(account = %mapped.account, via = %mapped.via, "mapped");
            match output {
                RunOutput::Listing(names) => {
                    for n in names {
                        println!("{n}");
                    }
                }
                RunOutput::Fetched(n) | RunOutput::Stored(n) => eprintln!("{n} bytes"),
            }
        }
        Cmd::Tags => {
            for row in store.list_tags(now)? {
                let roles: Vec<String> = row.roles.iter().map(|r| r.to_string()).collect();
                let roles = if roles.is_empty() { "-".to_string() } else { roles.join(",") };
                let expiry = if row.expired {
                    "expired".to_string()
                } else {
                    row.not_after.to_string()
                };
                println!("{}\t{}\t{}\t{}", row.tag, row.subject, roles, expiry);
            }
        }
        Cmd::AdminLoad { file, server } => {
            let text = std::fs::read_to_string(&file).with_context(|| format!("reading {}", file.display()))?;
            let (session, key) = store.load_session(now)?;
            let mut stream = client::connect(&server)?;
            let applied = client::admin_load(&mut stream, &session, &key, &text)?;
            println!("applied {applied} commands");
        }
    }
    Ok(())
}
