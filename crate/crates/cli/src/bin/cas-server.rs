use std::path::PathBuf;
use std::sync::Arc;

use anyhow::{Context, Result};
use clap::Parser;
use vo_authz::cas::{serve, CasConfig};
use vo_authz::time::SystemClock;

#[derive(Parser)]
#[command(name = "cas-server", about = "Community authorization server")]
struct Cli {
    #[arg(long)]
    config: PathBuf,
    /// Overrides `listen` from the config file.
    #[arg(long)]
    listen: Option<String>,
}

fn main() -> Result<()> {
    vo_authz_cli::init_tracing();
    let cli = Cli::parse();
    let mut config = CasConfig::load(&cli.config)?;
    if let Some(l) = cli.listen {
        config.listen = l;
    }
    let service = config.build(Arc::new(SystemClock))?;
    let handle = serve(Arc::new(service), config.listen.as_str())
        .with_context(|| format!("listening on {}", config.listen))?;
    tracing::info!(addr = %handle.local_addr(), "cas-server listening");
    println!("listening on {}", handle.local_addr());
    handle.wait();
    Ok(())
}
