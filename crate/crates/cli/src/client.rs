//! Blocking HTTP client for the node API, with request signing.

use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use aidchain_core::crypto::Keypair;
use aidchain_core::ledger::Transaction;
use aidchain_core::{Address, ContractCall, Digest};
use aidchain_node::auth::sign_request;
use reqwest::blocking::{Client, RequestBuilder};
use reqwest::Method;
use serde_json::Value;

use crate::error::CliError;

const NONCE_RETRIES: usize = 5;

pub struct NodeClient {
    base: String,
    http: Client,
}

impl NodeClient {
    pub fn new(base: &str) -> Result<Self, CliError> {
        let http = Client::builder()
            .timeout(Duration::from_secs(30))
            .build()
            .map_err(|e| CliError::Usage(e.to_string()))?;
        Ok(NodeClient {
            base: base.trim_end_matches('/').to_string(),
            http,
        })
    }

    fn send(&self, req: RequestBuilder) -> Result<Value, CliError> {
        let resp = req
            .send()
            .map_err(|e| CliError::api("Unreachable", format!("node {}: {e}", self.base)))?;
        let status = resp.status();
        let body: Value = resp
            .json()
            .map_err(|e| CliError::api("BadResponse", format!("node answered {status} with a non-JSON body: {e}")))?;
        if status.is_success() {
            return Ok(body);
        }
        let code = body["error"].as_str().unwrap_or("HttpError").to_string();
        let mut message = body["message"].as_str().unwrap_or("request failed").to_string();
        if let Some(reason) = body["reason"].as_str() {
            message = format!("{message} ({reason})");
        }
        Err(CliError::Api { code, message })
    }

    pub fn get(&self, path: &str) -> Result<Value, CliError> {
        self.send(self.http.get(format!("{}{path}", self.base)))
    }

    fn request_nonce(&self, me: &Address) -> Result<u64, CliError> {
        let last = self.get(&format!("/v1/nonces/{me}"))?["last_request_nonce"].as_u64();
        let now = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_micros() as u64)
            .unwrap_or(0);
        Ok(last.map_or(now, |l| now.max(l + 1)))
    }

    /// Sends a signed request. A stale request nonce (another client using
    /// the same key at the same moment) is retried once with a fresh one.
    pub fn signed(&self, key: &Keypair, method: Method, path: &str, body: Option<&Value>) -> Result<Value, CliError> {
        let bytes = body.map(|b| serde_json::to_vec(b).expect("JSON serializes")).unwrap_or_default();
        let route = path.split('?').next().unwrap_or(path);
        let mut attempt = 0;
        loop {
            let nonce = self.request_nonce(&key.address())?;
            let headers = sign_request(key, method.as_str(), route, nonce, &bytes);
            let mut req = self.http.request(method.clone(), format!("{}{path}", self.base));
            for (k, v) in headers.pairs() {
                req = req.header(k, v);
            }
            if body.is_some() {
                req = req.header("content-type", "application/json").body(bytes.clone());
            }
            match self.send(req) {
                Err(CliError::Api { code, .. }) if code == "StaleRequestNonce" && attempt == 0 => attempt += 1,
                other => return other,
            }
        }
    }

    /// Signs and submits `call`, refetching the nonce and re-signing after
    /// a nonce conflict.
    pub fn submit(&self, key: &Keypair, call: &ContractCall) -> Result<Digest, CliError> {
        let me = key.address();
        let mut last_err = None;
        for _ in 0..NONCE_RETRIES {
            let nonce = self.get(&format!("/v1/nonces/{me}"))?["next_tx_nonce"]
                .as_u64()
                .ok_or_else(|| CliError::api("BadResponse", "nonce response lacks next_tx_nonce"))?;
            let tx = Transaction::sign(key, nonce, call.clone());
            let body = serde_json::to_value(&tx).expect("transaction serializes");
            match self.signed(key, Method::POST, "/v1/txs", Some(&body)) {
                Ok(v) => {
                    return v["tx_hash"]
                        .as_str()
                        .and_then(|h| h.parse().ok())
                        .ok_or_else(|| CliError::api("BadResponse", "submit response lacks tx_hash"));
                }
                Err(CliError::Api { code, message }) if code == "BadNonce" => {
                    last_err = Some(CliError::Api { code, message });
                }
                Err(e) => return Err(e),
            }
        }
        Err(last_err.expect("at least one attempt"))
    }

    /// Polls until the transaction is committed or dropped.
    pub fn wait_for_commit(&self, hash: &Digest, timeout: Duration) -> Result<Value, CliError> {
        let deadline = Instant::now() + timeout;
        loop {
            let status = self.get(&format!("/v1/txs/{hash}"))?;
            match status["status"].as_str() {
                Some("committed") => return Ok(status),
                Some("dropped") => {
                    return Err(CliError::api(
                        "Dropped",
                        format!(
                            "transaction {hash} was dropped: {}",
                            status["reason"].as_str().unwrap_or("unknown reason")
                        ),
                    ))
                }
                _ if Instant::now() >= deadline => {
                    return Err(CliError::api(
                        "Timeout",
                        format!("transaction {hash} not committed within {}s", timeout.as_secs()),
                    ))
                }
                _ => std::thread::sleep(Duration::from_millis(25)),
            }
        }
    }
}
