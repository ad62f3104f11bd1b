#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

use aidchain_core::crypto::Keypair;
use aidchain_node::{keyfile, start, NodeConfig, RunningNode};
use serde_json::Value;

pub const BIN: &str = env!("CARGO_BIN_EXE_aidchain");

/// A dev-mode node on an ephemeral port, driven by its own runtime.
pub struct TestNode {
    pub url: String,
    pub data_dir: PathBuf,
    runtime: Option<tokio::runtime::Runtime>,
    node: Option<RunningNode>,
}

impl TestNode {
    pub fn start(data_dir: &Path, organization: &Keypair, authorities: usize) -> Self {
        let runtime = tokio::runtime::Builder::new_multi_thread()
            .worker_threads(2)
            .enable_all()
            .build()
            .unwrap();
        let config = NodeConfig {
            listen: "127.0.0.1:0".parse().unwrap(),
            data_dir: data_dir.to_path_buf(),
            organization_public_key: organization.public().to_hex(),
            authorities,
            block_interval_ms: 5,
            ..NodeConfig::default()
        };
        let node = runtime.block_on(start(&config)).unwrap();
        TestNode {
            url: node.url(),
            data_dir: data_dir.to_path_buf(),
            node: Some(node),
            runtime: Some(runtime),
        }
    }

    pub fn store(&self) -> PathBuf {
        self.data_dir.join("chain.dat")
    }

    pub fn node(&self) -> &aidchain_node::Node {
        &self.node.as_ref().unwrap().node
    }

    pub fn stop(mut self) {
        self.shutdown();
    }

    fn shutdown(&mut self) {
        if let (Some(rt), Some(node)) = (self.runtime.take(), self.node.take()) {
            rt.block_on(node.shutdown());
        }
    }
}

impl Drop for TestNode {
    fn drop(&mut self) {
        self.shutdown();
    }
}

pub fn write_key(dir: &Path, name: &str, key: &Keypair) -> PathBuf {
    let path = dir.join(format!("{name}.key"));
    keyfile::write(&path, key, true).unwrap();
    path
}

pub struct Run {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

impl Run {
    pub fn json(&self) -> Value {
        serde_json::from_str(&self.stdout)
            .unwrap_or_else(|e| panic!("stdout is not one JSON document ({e}): {}", self.stdout))
    }
}

impl From<Output> for Run {
    fn from(o: Output) -> Self {
        Run {
            code: o.status.code().unwrap_or(-1),
            stdout: String::from_utf8_lossy(&o.stdout).into_owned(),
            stderr: String::from_utf8_lossy(&o.stderr).into_owned(),
        }
    }
}

pub fn cli(url: &str, args: &[&str]) -> Run {
    cli_with_stdin(url, args, None)
}

pub fn cli_with_stdin(url: &str, args: &[&str], stdin: Option<&str>) -> Run {
    let mut cmd = Command::new(BIN);
    cmd.args(args)
        .env("AIDCHAIN_NODE_URL", url)
        .env_remove("AIDCHAIN_PROFILE")
        .stdin(if stdin.is_some() { Stdio::piped() } else { Stdio::null() })
        .stdout(Stdio::piped())
        .stderr(Stdio::piped());
    let mut child = cmd.spawn().unwrap();
    if let Some(input) = stdin {
        use std::io::Write;
        child.stdin.take().unwrap().write_all(input.as_bytes()).unwrap();
    }
    child.wait_with_output().unwrap().into()
}
