use std::path::PathBuf;
use std::sync::Arc;

use anyhow::{Context, Result};
use clap::Parser;
use vo_authz::resource::{serve, ResourceConfig};
use vo_authz::time::SystemClock;

#[derive(Parser)]
#[command(name = "resource-server", about = "File service with role-based account mapping")]
struct Cli {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    port: Option<u16>,
    #[arg(long)]
    export_root: Option<PathBuf>,
}

fn main() -> Result<()> {
    vo_authz_cli::init_tracing();
    let cli = Cli::parse();
    let mut config = ResourceConfig::load(&cli.config)?;
    if let Some(p) = cli.port {
        config.port = p;
    }
    if let Some(r) = cli.export_root {
        config.export_root = r;
    }
    let service = config.build(Arc::new(SystemClock))?;
    let addr = format!("{}:{}", config.listen_host, config.port);
    let handle = serve(Arc::new(service), addr.as_str()).with_context(|| format!("listening on {addr}"))?;
    tracing::info!(addr = %handle.local_addr(), server_name = %config.server_name, "resource-server listening");
    println!("listening on {}", handle.local_addr());
    handle.wait();
    Ok(())
}
