use std::path::PathBuf;

use anyhow::Context;
use clap::Parser;

use mems_testbed_gateway::{router, AppState, GatewayConfig};

/// Serves simulation sessions over HTTP.
#[derive(Debug, Parser)]
#[command(name = "mems-testbed-gateway", version)]
struct Args {
    /// JSON gateway config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Port to listen on; overrides the config file and the environment.
    #[arg(long)]
    port: Option<u16>,
    /// Listen on all interfaces instead of loopback.
    #[arg(long)]
    expose: bool,
    /// Simulated seconds per wall-clock second (0 = unpaced).
    #[arg(long)]
    pace: Option<f64>,
}

#[tokio::main]
async fn main() -> anyhow::Result<()> {
    let args = Args::parse();
    let mut config = match &args.config {
        Some(p) => GatewayConfig::load(p).with_context(|| format!("loading {}", p.display()))?,
        None => GatewayConfig::default(),
    }
    .with_env()?;
    if let Some(p) = args.port {
        config.port = p;
    }
    if args.expose {
        config.expose = true;
    }
    if let Some(p) = args.pace {
        config.pace = p;
    }
    config.check()?;

    let addr = config.bind_addr();
    let listener = tokio::net::TcpListener::bind(addr)
        .await
        .with_context(|| format!("binding {addr}"))?;
    eprintln!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(AppState::new(config)))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
