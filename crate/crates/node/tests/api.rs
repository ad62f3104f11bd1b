use std::path::Path;
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use aidchain_core::crypto::Keypair;
use aidchain_core::ledger::store::load;
use aidchain_core::ledger::Transaction;
use aidchain_core::{Address, Amount, ContractCall};
use aidchain_node::auth::sign_request;
use aidchain_node::{start, NodeConfig, RunningNode};
use reqwest::{Method, StatusCode};
use serde_json::{json, Value};

#[path = "../../core/tests/common/keccak_ref.rs"]
mod keccak_ref;

fn org() -> Keypair {
    Keypair::from_label("api-test-org")
}

fn config(dir: &Path, authorities: usize) -> NodeConfig {
    NodeConfig {
        listen: "127.0.0.1:0".parse().unwrap(),
        data_dir: dir.to_path_buf(),
        organization_public_key: org().public().to_hex(),
        authorities,
        block_interval_ms: 10,
        ..NodeConfig::default()
    }
}

struct Client {
    base: String,
    http: reqwest::Client,
}

fn request_nonce() -> u64 {
    // Microseconds keep consecutive requests strictly increasing.
    let now = SystemTime::now().duration_since(UNIX_EPOCH).unwrap().as_micros() as u64;
    std::thread::sleep(Duration::from_micros(2));
    now
}

impl Client {
    fn new(node: &RunningNode) -> Self {
        Client {
            base: node.url(),
            http: reqwest::Client::new(),
        }
    }

    async fn get(&self, path: &str) -> (StatusCode, Value) {
        let r = self.http.get(format!("{}{path}", self.base)).send().await.unwrap();
        (r.status(), r.json().await.unwrap())
    }

    async fn signed(&self, key: &Keypair, method: Method, path: &str, body: Option<&Value>) -> (StatusCode, Value) {
        let bytes = body.map(|b| serde_json::to_vec(b).unwrap()).unwrap_or_default();
        let route = path.split('?').next().unwrap();
        let h = sign_request(key, method.as_str(), route, request_nonce(), &bytes);
        let mut req = self.http.request(method, format!("{}{path}", self.base));
        for (k, v) in h.pairs() {
            req = req.header(k, v);
        }
        if body.is_some() {
            req = req.header("content-type", "application/json").body(bytes);
        }
        let r = req.send().await.unwrap();
        (r.status(), r.json().await.unwrap())
    }

    async fn next_nonce(&self, who: &Address) -> u64 {
        self.get(&format!("/v1/nonces/{who}")).await.1["next_tx_nonce"].as_u64().unwrap()
    }

    async fn submit(&self, key: &Keypair, call: ContractCall) -> (StatusCode, Value) {
        let nonce = self.next_nonce(&key.address()).await;
        let tx = Transaction::sign(key, nonce, call);
        self.signed(key, Method::POST, "/v1/txs", Some(&serde_json::to_value(&tx).unwrap()))
            .await
    }

    async fn register(&self, key: &Keypair, subject: &Keypair, role: &str) -> (StatusCode, Value) {
        let body = json!({"public_key": subject.public().to_hex(), "role": role, "display_name": "r"});
        self.signed(key, Method::POST, "/v1/actors", Some(&body)).await
    }
}

async fn spawn(dir: &Path) -> (RunningNode, Client) {
    let node = start(&config(dir, 1)).await.unwrap();
    let client = Client::new(&node);
    (node, client)
}

async fn commit_all(node: &RunningNode) {
    let n = node.node.clone();
    tokio::task::spawn_blocking(move || n.drain().unwrap()).await.unwrap();
}

#[tokio::test]
async fn actor_registration_rules() {
    let dir = tempfile::tempdir().unwrap();
    let (node, c) = spawn(dir.path()).await;
    let r = Keypair::from_label("recipient");

    let (status, body) = c.register(&org(), &r, "Recipient").await;
    assert_eq!(status, StatusCode::CREATED);
    let expected = format!("0x{}", hex::encode(&keccak_ref::keccak256_ref(&r.public().0)[..20]));
    assert_eq!(body["address"], expected.as_str());
    assert_eq!(body["role"], "Recipient");

    let (status, body) = c.register(&org(), &Keypair::from_label("org2"), "Organization").await;
    assert_eq!((status, body["error"].as_str()), (StatusCode::CONFLICT, Some("SecondOrganization")));
    let (status, body) = c.register(&org(), &r, "Observer").await;
    assert_eq!(body["error"], "DuplicateKey", "{status}");

    // Registered but not the organization.
    let (status, _) = c.register(&r, &Keypair::from_label("x"), "Observer").await;
    assert_eq!(status, StatusCode::UNAUTHORIZED);
    // Unsigned.
    let resp = reqwest::Client::new()
        .post(format!("{}/v1/actors", c.base))
        .json(&json!({"public_key": Keypair::from_label("y").public().to_hex(), "role": "Observer", "display_name": "y"}))
        .send()
        .await
        .unwrap();
    assert_eq!(resp.status(), StatusCode::UNAUTHORIZED);

    let (_, actors) = c.get("/v1/actors").await;
    assert_eq!(actors.as_array().unwrap().len(), 2);
    node.shutdown().await;
}

#[tokio::test]
async fn transaction_intake_and_status() {
    let dir = tempfile::tempdir().unwrap();
    let (node, c) = spawn(dir.path()).await;
    let r = Keypair::from_label("recipient");
    c.register(&org(), &r, "Recipient").await;

    let (status, body) = c.submit(&org(), ContractCall::add_funds(Amount(1000))).await;
    assert_eq!(status, StatusCode::ACCEPTED);
    let hash = body["tx_hash"].as_str().unwrap().to_string();
    let (_, st) = c.get(&format!("/v1/txs/{hash}")).await;
    assert!(st["status"] == "pending" || st["status"] == "committed");

    // Wait for the background producer.
    let mut committed = Value::Null;
    for _ in 0..200 {
        let (_, st) = c.get(&format!("/v1/txs/{hash}")).await;
        if st["status"] == "committed" {
            committed = st;
            break;
        }
        tokio::time::sleep(Duration::from_millis(10)).await;
    }
    assert_eq!(committed["height"], 1);
    assert_eq!(committed["index"], 0);

    let (status, body) = c.submit(&r, ContractCall::add_recipient(r.address())).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!((body["error"].as_str(), body["reason"].as_str()), (Some("ContractError"), Some("Unauthorized")));

    let stale = Transaction::sign(&org(), 0, ContractCall::add_funds(Amount(1)));
    let (status, body) = c
        .signed(&org(), Method::POST, "/v1/txs", Some(&serde_json::to_value(&stale).unwrap()))
        .await;
    assert_eq!((status, body["error"].as_str()), (StatusCode::CONFLICT, Some("BadNonce")));
    assert_eq!(body["expected"], 1);

    let (status, _) = c.submit(&org(), ContractCall::get_balance()).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);

    // Someone else's transaction under my request signature.
    let theirs = Transaction::sign(&org(), 1, ContractCall::add_funds(Amount(1)));
    let (status, _) = c
        .signed(&r, Method::POST, "/v1/txs", Some(&serde_json::to_value(&theirs).unwrap()))
        .await;
    assert_eq!(status, StatusCode::UNAUTHORIZED);

    let (status, _) = c.get(&format!("/v1/txs/{}", "ab".repeat(32))).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(c.get("/v1/health").await.1["pending"], 0);
    node.shutdown().await;
}

#[tokio::test]
async fn forged_signatures_never_reach_the_mempool() {
    let dir = tempfile::tempdir().unwrap();
    let (node, c) = spawn(dir.path()).await;
    let mut rng_byte = 7u8;
    for i in 0..40 {
        let mut tx = Transaction::sign(&org(), 0, ContractCall::add_funds(Amount(10)));
        let at = i * 97 % tx.signature.len();
        rng_byte = rng_byte.wrapping_mul(31).wrapping_add(1) | 1;
        tx.signature[at] ^= rng_byte;
        let (status, _) = c
            .signed(&org(), Method::POST, "/v1/txs", Some(&serde_json::to_value(&tx).unwrap()))
            .await;
        assert!(status.is_client_error(), "{status}");
    }
    // Valid transaction, tampered request signature.
    let tx = Transaction::sign(&org(), 0, ContractCall::add_funds(Amount(10)));
    let body = serde_json::to_vec(&tx).unwrap();
    let mut h = sign_request(&org(), "POST", "/v1/txs", request_nonce(), &body);
    h.signature.replace_range(10..12, if &h.signature[10..12] == "00" { "11" } else { "00" });
    let mut req = c.http.post(format!("{}/v1/txs", c.base)).body(body);
    for (k, v) in h.pairs() {
        req = req.header(k, v);
    }
    assert_eq!(req.send().await.unwrap().status(), StatusCode::UNAUTHORIZED);
    assert_eq!(c.get("/v1/health").await.1["pending"], 0);
    node.shutdown().await;
}

#[tokio::test]
async fn replayed_request_nonce_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let (node, c) = spawn(dir.path()).await;
    let h = sign_request(&org(), "GET", &format!("/v1/balances/{}", org().address()), 5, &[]);
    let send = || {
        let mut req = c.http.get(format!("{}/v1/balances/{}", c.base, org().address()));
        for (k, v) in h.pairs() {
            req = req.header(k, v);
        }
        req.send()
    };
    assert_eq!(send().await.unwrap().status(), StatusCode::OK);
    let second = send().await.unwrap();
    assert_eq!(second.status(), StatusCode::CONFLICT);
    let body: Value = second.json().await.unwrap();
    assert_eq!(body["error"], "StaleRequestNonce");
    node.shutdown().await;
}

/// Funds 1000, authorizes two recipients and sends 30 and 20 to the first.
async fn fixture(c: &Client, node: &RunningNode) -> (Keypair, Keypair) {
    let r1 = Keypair::from_label("r1");
    let r2 = Keypair::from_label("r2");
    c.register(&org(), &r1, "Recipient").await;
    c.register(&org(), &r2, "Recipient").await;
    for call in [
        ContractCall::add_funds(Amount(1000)),
        ContractCall::add_recipient(r1.address()),
        ContractCall::add_recipient(r2.address()),
        ContractCall::send_allowance(r1.address(), Amount(30)),
        ContractCall::send_allowance(r1.address(), Amount(20)),
    ] {
        let (status, body) = c.submit(&org(), call).await;
        assert_eq!(status, StatusCode::ACCEPTED, "{body}");
    }
    commit_all(node).await;
    (r1, r2)
}

#[tokio::test]
async fn balance_visibility() {
    let dir = tempfile::tempdir().unwrap();
    let (node, c) = spawn(dir.path()).await;
    let (r1, r2) = fixture(&c, &node).await;

    let (status, body) = c.signed(&r1, Method::GET, &format!("/v1/balances/{}", r1.address()), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["balance"], "50");

    let (status, body) = c.signed(&r2, Method::GET, &format!("/v1/balances/{}", r1.address()), None).await;
    assert_eq!((status, body["error"].as_str()), (StatusCode::FORBIDDEN, Some("Forbidden")));

    // Organization reads agree with an offline replay of the persisted store.
    let (chain, _) = load(&dir.path().join("chain.dat")).unwrap();
    let replayed = chain.replay().unwrap();
    for who in [org().address(), r1.address(), r2.address(), Address([9; 20])] {
        let (status, body) = c.signed(&org(), Method::GET, &format!("/v1/balances/{who}"), None).await;
        assert_eq!(status, StatusCode::OK);
        assert_eq!(body["balance"], replayed.balance_of(&who).to_string());
    }
    node.shutdown().await;
}

#[tokio::test]
async fn event_queries() {
    let dir = tempfile::tempdir().unwrap();
    let (node, c) = spawn(dir.path()).await;
    assert_eq!(c.get("/v1/events").await.1, json!([]));
    let (r1, r2) = fixture(&c, &node).await;

    let (_, all) = c.get("/v1/events").await;
    let kinds: Vec<_> = all.as_array().unwrap().iter().map(|e| e["kind"].as_str().unwrap()).collect();
    assert_eq!(kinds, ["FundsAdded", "AllowanceSent", "AllowanceSent"]);
    assert_eq!(all[1]["amount"], "30");
    assert_eq!(all[2]["amount"], "20");

    let (_, sent) = c.get("/v1/events?kind=AllowanceSent").await;
    assert_eq!(sent.as_array().unwrap().len(), 2);
    let (_, mine) = c.get(&format!("/v1/events?address={}", r1.address())).await;
    assert_eq!(mine.as_array().unwrap().len(), 2);
    let (_, none) = c.get(&format!("/v1/events?address={}", r2.address())).await;
    assert_eq!(none, json!([]));
    let (_, ranged) = c.get("/v1/events?from=99").await;
    assert_eq!(ranged, json!([]));

    for bad in ["kind=Nope", "from=5&to=1", "address=xyz", "color=red"] {
        let (status, body) = c.get(&format!("/v1/events?{bad}")).await;
        assert_eq!((status, body["error"].as_str()), (StatusCode::BAD_REQUEST, Some("BadFilter")), "{bad}");
    }
    node.shutdown().await;
}

#[tokio::test]
async fn chain_queries() {
    let dir = tempfile::tempdir().unwrap();
    let (node, c) = spawn(dir.path()).await;
    let (status, genesis) = c.get("/v1/blocks/0").await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(genesis["height"], 0);
    assert_eq!(genesis["genesis"]["organization"], org().address().to_string());
    assert_eq!(genesis["genesis"]["quorum"], 1);

    let (_, sub) = c.submit(&org(), ContractCall::add_funds(Amount(5))).await;
    commit_all(&node).await;
    let (_, block) = c.get("/v1/blocks/1").await;
    assert_eq!(block["transactions"][0]["hash"], sub["tx_hash"]);
    assert_eq!(block["parent_hash"], genesis["hash"]);
    assert_eq!(c.get("/v1/blocks/2").await.0, StatusCode::NOT_FOUND);
    assert_eq!(c.get("/v1/blocks/abc").await.0, StatusCode::BAD_REQUEST);
    let (_, health) = c.get("/v1/health").await;
    assert_eq!((health["height"].as_u64(), health["status"].as_str()), (Some(1), Some("ok")));
    node.shutdown().await;
}

#[tokio::test]
async fn settlement_export() {
    let dir = tempfile::tempdir().unwrap();
    let (node, c) = spawn(dir.path()).await;
    let (r1, r2) = fixture(&c, &node).await;
    let path = format!("/v1/settlements/{}", r1.address());

    let (status, body) = c.signed(&org(), Method::POST, &path, None).await;
    assert_eq!(body["error"], "NoRegisteredAccount", "{status}");

    c.submit(&org(), ContractCall::register_bank_account(r1.address(), "IBAN-TEST-0001"))
        .await;
    c.submit(&org(), ContractCall::register_bank_account(r2.address(), "IBAN-TEST-0002"))
        .await;
    commit_all(&node).await;

    let (status, body) = c.signed(&org(), Method::POST, &path, None).await;
    assert_eq!(status, StatusCode::OK, "{body}");
    assert_eq!(body["total"], "50");
    assert_eq!(body["tx_hashes"].as_array().unwrap().len(), 2);
    assert_eq!(body["account_digest"], hex::encode(keccak_ref::keccak256_ref(b"IBAN-TEST-0001")));
    let (_, sent) = c.get(&format!("/v1/events?kind=AllowanceSent&address={}", r1.address())).await;
    let hashes: Vec<_> = sent.as_array().unwrap().iter().map(|e| e["tx_hash"].clone()).collect();
    assert_eq!(body["tx_hashes"], Value::Array(hashes));

    let (_, body) = c.signed(&org(), Method::POST, &format!("/v1/settlements/{}", r2.address()), None).await;
    assert_eq!(body["error"], "NoAllowances");
    let (status, _) = c.signed(&r1, Method::POST, &path, None).await;
    assert_eq!(status, StatusCode::UNAUTHORIZED);
    node.shutdown().await;
}

#[tokio::test]
async fn state_survives_restart() {
    let dir = tempfile::tempdir().unwrap();
    let (node, c) = spawn(dir.path()).await;
    let (r1, _) = fixture(&c, &node).await;
    let head = c.get("/v1/health").await.1;
    node.shutdown().await;

    let (node, c) = spawn(dir.path()).await;
    assert_eq!(c.get("/v1/health").await.1["head"], head["head"]);
    let (_, actor) = c.get(&format!("/v1/actors/{}", r1.address())).await;
    assert_eq!((actor["authorized"].as_bool(), actor["role"].as_str()), (Some(true), Some("Recipient")));
    assert_eq!(c.next_nonce(&org().address()).await, 5);
    node.shutdown().await;

    // A different organization cannot reuse the data directory.
    let mut other = config(dir.path(), 1);
    other.organization_public_key = Keypair::from_label("someone-else").public().to_hex();
    assert!(start(&other).await.is_err());
}

#[tokio::test]
async fn quorum_mode_commits_through_the_protocol() {
    let dir = tempfile::tempdir().unwrap();
    let node = start(&config(dir.path(), 4)).await.unwrap();
    let c = Client::new(&node);
    let (r1, _) = fixture(&c, &node).await;
    let (_, block) = c.get("/v1/blocks/1").await;
    assert!(block["votes"].as_array().unwrap().len() >= 3);
    assert_eq!(c.get("/v1/blocks/0").await.1["genesis"]["quorum"], 3);
    let (_, body) = c.signed(&r1, Method::GET, &format!("/v1/balances/{}", r1.address()), None).await;
    assert_eq!(body["balance"], "50");
    let (chain, _) = load(&dir.path().join("chain.dat")).unwrap();
    assert_eq!(chain.state().balance_of(&r1.address()), Amount(50));
    node.shutdown().await;
}

#[tokio::test]
async fn mempool_capacity_is_enforced() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = config(dir.path(), 1);
    cfg.mempool_capacity = 2;
    cfg.block_interval_ms = 60_000;
    let node = start(&cfg).await.unwrap();
    let c = Client::new(&node);
    for _ in 0..2 {
        assert_eq!(c.submit(&org(), ContractCall::add_funds(Amount(1))).await.0, StatusCode::ACCEPTED);
    }
    let (status, body) = c.submit(&org(), ContractCall::add_funds(Amount(1))).await;
    assert_eq!((status, body["error"].as_str()), (StatusCode::SERVICE_UNAVAILABLE, Some("MempoolFull")));
    node.shutdown().await;
}
