//! A ledger node: actor registry, signed-request intake, mempool, block
//! production and the HTTP/JSON API used by the CLI and the web console.

pub mod api;
pub mod auth;
pub mod config;
pub mod keyfile;
pub mod mempool;
pub mod registry;
pub mod service;
pub mod views;

use std::net::SocketAddr;
use std::sync::Arc;
use std::time::Duration;

use tokio::net::TcpListener;
use tokio::sync::watch;
use tokio::task::JoinHandle;
use tracing::error;

pub use config::NodeConfig;
pub use service::{Node, NodeError};

/// A node serving HTTP and producing blocks in the background.
pub struct RunningNode {
    pub addr: SocketAddr,
    pub node: Arc<Node>,
    shutdown: watch::Sender<bool>,
    server: JoinHandle<()>,
    producer: JoinHandle<()>,
}

impl RunningNode {
    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub async fn shutdown(self) {
        let _ = self.shutdown.send(true);
        let _ = self.server.await;
        let _ = self.producer.await;
    }
}

/// Opens the node, binds `config.listen` and starts serving.
pub async fn start(config: &NodeConfig) -> Result<RunningNode, NodeError> {
    let node = {
        let config = config.clone();
        tokio::task::spawn_blocking(move || Node::open(&config))
            .await
            .map_err(|e| NodeError::Startup(e.to_string()))??
    };
    let node = Arc::new(node);
    let listener = TcpListener::bind(config.listen)
        .await
        .map_err(|e| NodeError::Startup(format!("bind {}: {e}", config.listen)))?;
    let addr = listener
        .local_addr()
        .map_err(|e| NodeError::Startup(e.to_string()))?;
    let (shutdown, rx) = watch::channel(false);

    let app = api::router(node.clone());
    let mut server_rx = rx.clone();
    let server = tokio::spawn(async move {
        let stop = async move {
            let _ = server_rx.wait_for(|s| *s).await;
        };
        if let Err(e) = axum::serve(listener, app).with_graceful_shutdown(stop).await {
            error!(error = %e, "server stopped");
        }
    });

    let interval = Duration::from_millis(config.block_interval_ms.max(1));
    let producer_node = node.clone();
    let mut producer_rx = rx;
    let producer = tokio::spawn(async move {
        let mut tick = tokio::time::interval_at(tokio::time::Instant::now() + interval, interval);
        tick.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Delay);
        loop {
            tokio::select! {
                _ = tick.tick() => {}
                _ = producer_rx.wait_for(|s| *s) => break,
            }
            let n = producer_node.clone();
            match tokio::task::spawn_blocking(move || n.produce_block()).await {
                Ok(Ok(_)) => {}
                Ok(Err(e)) => error!(error = %e, "block production failed"),
                Err(e) => error!(error = %e, "block production panicked"),
            }
        }
    });

    Ok(RunningNode {
        addr,
        node,
        shutdown,
        server,
        producer,
    })
}
