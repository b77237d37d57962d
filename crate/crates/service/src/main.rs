use std::net::SocketAddr;
use std::path::PathBuf;
use std::time::Duration;

use anyhow::Context;
use clap::Parser;
use prefbo_service::{serve, AppState, ServiceConfig, Store};

/// Serves interactive preference-optimization sessions over HTTP.
#[derive(Parser)]
#[command(name = "prefbo-service", version)]
struct Args {
    #[arg(long, env = "PREFBO_PORT", default_value_t = 8080)]
    port: u16,
    #[arg(long, env = "PREFBO_HOST", default_value = "127.0.0.1")]
    host: std::net::IpAddr,
    /// Directory holding one JSON file per session.
    #[arg(long, env = "PREFBO_DATA_DIR", default_value = "sessions")]
    data_dir: PathBuf,
    /// Master seed for sessions created without an explicit seed.
    #[arg(long, env = "PREFBO_SEED", default_value_t = 0)]
    seed: u64,
    /// Limit in seconds for a single refit or proposal.
    #[arg(long, env = "PREFBO_TIMEOUT", default_value_t = 30)]
    timeout: u64,
}

#[tokio::main]
async fn main() -> anyhow::Result<()> {
    tracing_subscriber::fmt::init();
    let args = Args::parse();
    let store = Store::open(&args.data_dir).with_context(|| format!("opening {}", args.data_dir.display()))?;
    let config = ServiceConfig {
        seed: args.seed,
        timeout: Duration::from_secs(args.timeout),
        ..ServiceConfig::default()
    };
    let addr = SocketAddr::new(args.host, args.port);
    let listener = tokio::net::TcpListener::bind(addr).await.with_context(|| format!("binding {addr}"))?;
    tracing::info!("listening on {}", listener.local_addr()?);
    serve(listener, AppState::new(store, config)).await?;
    Ok(())
}
