//! Node configuration: defaults, then an optional TOML file, then
//! `AIDCHAIN_*` environment variables.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use figment::providers::{Env, Format, Serialized, Toml};
use figment::Figment;
use serde::{Deserialize, Serialize};

use crate::mempool::DEFAULT_CAPACITY;

const ENV_KEYS: &[&str] = &[
    "listen",
    "data_dir",
    "organization_public_key",
    "organization_name",
    "authorities",
    "round_duration",
    "block_interval_ms",
    "mempool_capacity",
    "max_batch",
    "network_seed",
];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeConfig {
    pub listen: SocketAddr,
    pub data_dir: PathBuf,
    /// Hex Ed25519 public key of the organization; fixed into the genesis block.
    pub organization_public_key: String,
    pub organization_name: String,
    /// 1 runs the single-authority fast path; more runs the quorum protocol
    /// among that many in-process authorities.
    pub authorities: usize,
    pub round_duration: u64,
    pub block_interval_ms: u64,
    pub mempool_capacity: usize,
    pub max_batch: usize,
    /// Seeds message delays between in-process authorities.
    pub network_seed: u64,
}

impl Default for NodeConfig {
    fn default() -> Self {
        NodeConfig {
            listen: "127.0.0.1:8650".parse().expect("valid address"),
            data_dir: PathBuf::from("./aidchain-data"),
            organization_public_key: String::new(),
            organization_name: "organization".into(),
            authorities: 1,
            round_duration: aidchain_core::consensus::DEFAULT_ROUND_DURATION,
            block_interval_ms: 500,
            mempool_capacity: DEFAULT_CAPACITY,
            max_batch: aidchain_core::consensus::DEFAULT_MAX_BATCH,
            network_seed: 0,
        }
    }
}

impl NodeConfig {
    pub fn load(file: Option<&Path>) -> Result<Self, figment::Error> {
        let mut fig = Figment::from(Serialized::defaults(NodeConfig::default()));
        if let Some(path) = file {
            fig = fig.merge(Toml::file_exact(path));
        }
        fig.merge(Env::prefixed("AIDCHAIN_").only(ENV_KEYS)).extract()
    }
}
