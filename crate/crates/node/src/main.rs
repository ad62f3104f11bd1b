use std::io::IsTerminal;
use std::path::PathBuf;
use std::process::ExitCode;

use aidchain_node::{start, NodeConfig};
use clap::Parser;
use tracing_subscriber::EnvFilter;

/// Runs a ledger node.
#[derive(Parser)]
#[command(version)]
struct Args {
    /// TOML configuration file; AIDCHAIN_* environment variables override it.
    #[arg(long, env = "AIDCHAIN_NODE_CONFIG")]
    config: Option<PathBuf>,
}

#[tokio::main]
async fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("info")))
        .with_writer(std::io::stderr)
        .with_ansi(std::io::stderr().is_terminal())
        .init();
    let args = Args::parse();
    let config = match NodeConfig::load(args.config.as_deref()) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: configuration: {e}");
            return ExitCode::from(1);
        }
    };
    let node = match start(&config).await {
        Ok(n) => n,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    tracing::info!(url = %node.url(), "listening");
    let _ = tokio::signal::ctrl_c().await;
    node.shutdown().await;
    ExitCode::SUCCESS
}
