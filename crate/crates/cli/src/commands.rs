use std::io::Read;
use std::path::{Path, PathBuf};
use std::time::Duration;

use aidchain_core::consensus::{check_safety, parse_scenario, simulate};
use aidchain_core::crypto::Keypair;
use aidchain_core::{Address, Amount, ContractCall, Digest};
use aidchain_node::keyfile;
use reqwest::Method;
use serde_json::{json, Value};

use crate::args::{AllowanceAction, BankAccountAction, Cli, Command, FundsAction, RecipientAction, WaitArgs};
use crate::client::NodeClient;
use crate::error::CliError;
use crate::output::{table, Output};
use crate::profile::{OutputFormat, Profile};
use crate::verify::verify_store;

const DEFAULT_NODE: &str = "http://127.0.0.1:8650";

/// Global options after merging flags with the profile.
pub struct Context {
    pub node_url: String,
    pub key_file: Option<PathBuf>,
    pub format: OutputFormat,
}

impl Context {
    pub fn resolve(cli: &Cli) -> Result<Self, CliError> {
        let profile = match &cli.profile {
            Some(p) => Profile::load(p)?,
            None => Profile::default(),
        };
        Ok(Context {
            node_url: cli
                .node
                .clone()
                .or(profile.node_url)
                .unwrap_or_else(|| DEFAULT_NODE.into()),
            key_file: cli.key.clone().or(profile.key_file),
            format: if cli.json {
                OutputFormat::Json
            } else {
                profile.output.unwrap_or_default()
            },
        })
    }

    fn key(&self) -> Result<Keypair, CliError> {
        let path = self
            .key_file
            .as_ref()
            .ok_or_else(|| CliError::Usage("this command needs a signing key: pass --key or set key_file in the profile".into()))?;
        keyfile::read(path).map_err(|e| CliError::Usage(e.to_string()))
    }

    fn client(&self) -> Result<NodeClient, CliError> {
        NodeClient::new(&self.node_url)
    }
}

fn address(s: &str) -> Result<Address, CliError> {
    s.parse().map_err(|e| CliError::Usage(format!("address {s:?}: {e}")))
}

fn amount(s: &str) -> Result<Amount, CliError> {
    s.parse().map_err(|e| CliError::Usage(format!("amount {s:?}: {e}")))
}

pub fn run(cli: &Cli) -> Result<Output, CliError> {
    let ctx = Context::resolve(cli)?;
    match &cli.command {
        Command::Keygen { out, force } => keygen(out, *force),
        Command::ActorRegister {
            public_key,
            key_file,
            role,
            name,
        } => actor_register(&ctx, public_key.as_deref(), key_file.as_deref(), role, name),
        Command::Recipient { action } => match action {
            RecipientAction::Add { address: a, wait } => transact(&ctx, ContractCall::add_recipient(address(a)?), *wait),
            RecipientAction::Remove { address: a, wait } => {
                transact(&ctx, ContractCall::remove_recipient(address(a)?), *wait)
            }
        },
        Command::Funds {
            action: FundsAction::Add { amount: a, wait },
        } => transact(&ctx, ContractCall::add_funds(amount(a)?), *wait),
        Command::Allowance {
            action: AllowanceAction::Send { to, amount: a, wait },
        } => transact(&ctx, ContractCall::send_allowance(address(to)?, amount(a)?), *wait),
        Command::BankAccount {
            action:
                BankAccountAction::Register {
                    recipient,
                    account,
                    account_stdin,
                    wait,
                },
        } => {
            let account = match account {
                Some(a) => a.clone(),
                None if *account_stdin => {
                    let mut s = String::new();
                    std::io::stdin()
                        .read_to_string(&mut s)
                        .map_err(|e| CliError::Usage(format!("reading account from stdin: {e}")))?;
                    s.trim_end_matches(['\r', '\n']).to_string()
                }
                None => return Err(CliError::Usage("pass --account or --account-stdin".into())),
            };
            transact(&ctx, ContractCall::register_bank_account(address(recipient)?, account), *wait)
        }
        Command::Balance { address: a } => balance(&ctx, a.as_deref()),
        Command::Events { kind, address: a, from, to } => events(&ctx, kind.as_deref(), a.as_deref(), *from, *to),
        Command::Block { height } => block(&ctx, *height),
        Command::Tx { hash } => tx(&ctx, hash),
        Command::SettleExport { recipient } => settle_export(&ctx, recipient),
        Command::Health => {
            let v = ctx.client()?.get("/v1/health")?;
            let text = table(
                &["status", "height", "head", "pending", "authorities", "quorum"],
                &[row(&v, &["status", "height", "head", "pending", "authorities", "quorum"])],
            );
            Ok(Output::new(v, text))
        }
        Command::ChainVerify { store } => chain_verify(store),
        Command::Simulate { scenario, trace } => run_simulation(scenario, trace.as_deref()),
    }
}

fn plain(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        Value::Null => "-".into(),
        other => other.to_string(),
    }
}

fn row(v: &Value, keys: &[&str]) -> Vec<String> {
    keys.iter().map(|k| plain(&v[*k])).collect()
}

fn keygen(out: &Path, force: bool) -> Result<Output, CliError> {
    let key = keyfile::generate();
    keyfile::write(out, &key, force).map_err(|e| CliError::Usage(e.to_string()))?;
    let v = json!({
        "key_file": out.display().to_string(),
        "address": key.address().to_string(),
        "public_key": key.public().to_hex(),
    });
    let text = format!(
        "wrote {}\naddress    {}\npublic key {}",
        out.display(),
        key.address(),
        key.public().to_hex()
    );
    Ok(Output::new(v, text))
}

fn actor_register(
    ctx: &Context,
    public_key: Option<&str>,
    key_file: Option<&Path>,
    role: &str,
    name: &str,
) -> Result<Output, CliError> {
    let role: aidchain_node::registry::Role = role.parse().map_err(CliError::Usage)?;
    let public_key = match (public_key, key_file) {
        (Some(k), _) => k.to_string(),
        (None, Some(path)) => keyfile::read(path)
            .map_err(|e| CliError::Usage(e.to_string()))?
            .public()
            .to_hex(),
        (None, None) => return Err(CliError::Usage("pass --public-key or --key-file".into())),
    };
    let body = json!({ "public_key": public_key, "role": role, "display_name": name });
    let v = ctx.client()?.signed(&ctx.key()?, Method::POST, "/v1/actors", Some(&body))?;
    let text = table(
        &["address", "role", "display_name"],
        &[row(&v, &["address", "role", "display_name"])],
    );
    Ok(Output::new(v, text))
}

fn transact(ctx: &Context, call: ContractCall, wait: WaitArgs) -> Result<Output, CliError> {
    let key = ctx.key()?;
    let client = ctx.client()?;
    let hash = client.submit(&key, &call)?;
    if wait.no_wait {
        let v = json!({ "tx_hash": hash, "status": "pending" });
        return Ok(Output::new(v, format!("tx {hash} pending")));
    }
    let status = client.wait_for_commit(&hash, Duration::from_secs(wait.timeout))?;
    let v = json!({
        "tx_hash": hash,
        "status": "committed",
        "height": status["height"],
        "index": status["index"],
    });
    let text = format!(
        "tx {hash} committed at height {} (index {})",
        plain(&status["height"]),
        plain(&status["index"])
    );
    Ok(Output::new(v, text))
}

fn balance(ctx: &Context, who: Option<&str>) -> Result<Output, CliError> {
    let key = ctx.key()?;
    let subject = match who {
        Some(a) => address(a)?,
        None => key.address(),
    };
    let v = ctx
        .client()?
        .signed(&key, Method::GET, &format!("/v1/balances/{subject}"), None)?;
    let text = table(&["address", "balance", "height"], &[row(&v, &["address", "balance", "height"])]);
    Ok(Output::new(v, text))
}

fn events(ctx: &Context, kind: Option<&str>, who: Option<&str>, from: Option<u64>, to: Option<u64>) -> Result<Output, CliError> {
    let mut query = Vec::new();
    if let Some(k) = kind {
        query.push(format!("kind={k}"));
    }
    if let Some(a) = who {
        query.push(format!("address={}", address(a)?));
    }
    if let Some(f) = from {
        query.push(format!("from={f}"));
    }
    if let Some(t) = to {
        query.push(format!("to={t}"));
    }
    let path = if query.is_empty() {
        "/v1/events".to_string()
    } else {
        format!("/v1/events?{}", query.join("&"))
    };
    let v = ctx.client()?.get(&path)?;
    let keys = ["height", "kind", "actor", "subject", "amount", "tx_hash"];
    let rows: Vec<_> = v.as_array().into_iter().flatten().map(|e| row(e, &keys)).collect();
    Ok(Output::new(v, table(&keys, &rows)))
}

fn block(ctx: &Context, height: u64) -> Result<Output, CliError> {
    let v = ctx.client()?.get(&format!("/v1/blocks/{height}"))?;
    let mut text = table(
        &["height", "hash", "parent_hash", "proposer", "round", "state_root"],
        &[row(&v, &["height", "hash", "parent_hash", "proposer", "round", "state_root"])],
    );
    let txs: Vec<_> = v["transactions"]
        .as_array()
        .into_iter()
        .flatten()
        .enumerate()
        .map(|(i, t)| {
            vec![
                i.to_string(),
                plain(&t["hash"]),
                plain(&t["sender"]),
                plain(&t["nonce"]),
                plain(&t["call"]["kind"]),
            ]
        })
        .collect();
    if !txs.is_empty() {
        text.push('\n');
        text.push_str(&table(&["index", "tx_hash", "sender", "nonce", "call"], &txs));
    }
    text.push_str(&format!("\nvotes: {}", v["votes"].as_array().map_or(0, |a| a.len())));
    Ok(Output::new(v, text))
}

fn tx(ctx: &Context, hash: &str) -> Result<Output, CliError> {
    let hash: Digest = hash
        .trim_start_matches("0x")
        .parse()
        .map_err(|e| CliError::Usage(format!("hash {hash:?}: {e}")))?;
    let v = ctx.client()?.get(&format!("/v1/txs/{hash}"))?;
    let t = &v["transaction"];
    let text = table(
        &["tx_hash", "status", "height", "index", "sender", "nonce", "call"],
        &[vec![
            plain(&t["hash"]),
            plain(&v["status"]),
            plain(&v["height"]),
            plain(&v["index"]),
            plain(&t["sender"]),
            plain(&t["nonce"]),
            plain(&t["call"]["kind"]),
        ]],
    );
    Ok(Output::new(v, text))
}

fn settle_export(ctx: &Context, recipient: &str) -> Result<Output, CliError> {
    let r = address(recipient)?;
    let v = ctx
        .client()?
        .signed(&ctx.key()?, Method::POST, &format!("/v1/settlements/{r}"), None)?;
    let mut text = table(
        &["recipient", "account_digest", "total", "height"],
        &[row(&v, &["recipient", "account_digest", "total", "height"])],
    );
    for h in v["tx_hashes"].as_array().into_iter().flatten() {
        text.push_str(&format!("\n  tx {}", plain(h)));
    }
    Ok(Output::new(v, text))
}

fn chain_verify(store: &Path) -> Result<Output, CliError> {
    match verify_store(store)? {
        Ok(report) => {
            let v = serde_json::to_value(&report).expect("report serializes");
            let text = format!(
                "ok: {} verified\nheight       {}\nhead         {}\nstate digest {}\ntransactions {}",
                store.display(),
                report.height,
                report.head,
                report.state_digest,
                report.transactions
            );
            Ok(Output::new(v, text))
        }
        Err(failure) => Err(CliError::Verification(failure.to_string())),
    }
}

fn run_simulation(path: &Path, trace_out: Option<&Path>) -> Result<Output, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    let scenario = parse_scenario(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    let trace = simulate(&scenario).map_err(|e| CliError::Usage(e.to_string()))?;
    let rendered = trace.render();
    if let Some(out) = trace_out {
        std::fs::write(out, &rendered).map_err(|e| CliError::Usage(format!("{}: {e}", out.display())))?;
    }
    let safety = check_safety(&trace);
    let heights: Vec<u64> = trace.nodes.iter().map(|n| n.height()).collect();
    let v = json!({
        "seed": scenario.seed,
        "rounds": trace.rounds.len(),
        "committed_rounds": trace.committed_rounds(),
        "submitted_txs": trace.submitted.len(),
        "committed_txs": trace.committed.len(),
        "heights": heights,
        "safety": match &safety {
            Ok(()) => json!("ok"),
            Err(v) => json!({ "height": v.height, "nodes": v.nodes.len() }),
        },
        "trace": rendered.lines().collect::<Vec<_>>(),
    });
    let summary = format!(
        "{rendered}\nrounds {} committed {} txs {}/{} safety {}",
        trace.rounds.len(),
        trace.committed_rounds(),
        trace.committed.len(),
        trace.submitted.len(),
        if safety.is_ok() { "ok" } else { "VIOLATED" }
    );
    match safety {
        Ok(()) => Ok(Output::new(v, summary)),
        Err(violation) => Err(CliError::Verification(format!("{violation}"))),
    }
}
