//! Acceptance suite: one PASS/FAIL line per criterion. Runs without the
//! libtest harness so the lines are always printed; exits non-zero if any
//! criterion fails.

mod common;

#[path = "../../core/tests/common/keccak_ref.rs"]
mod keccak_ref;

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use aidchain_cli::client::NodeClient;
use aidchain_core::codec::Encode;
use aidchain_core::consensus::{check_safety, simulate, Behavior, Scenario, Workload};
use aidchain_core::contract::{account_digest, CallContext, ContractCall, ContractError, ContractState};
use aidchain_core::crypto::Keypair;
use aidchain_core::ledger::store::load;
use aidchain_core::ledger::ExecState;
use aidchain_core::sweep::{safety_sweep, Execution, SweepConfig};
use aidchain_core::{keccak256, Address, Amount, Digest};
use common::{cli, write_key, TestNode};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

const ORG: Address = Address([0xa1; 20]);

fn ctx(caller: Address, n: u64) -> CallContext {
    let mut h = [0u8; 32];
    h[..8].copy_from_slice(&n.to_be_bytes());
    CallContext::new(caller, Digest(h))
}

fn guard_matrix() -> Outcome {
    let r = Address([2; 20]);
    let mut rows = 0;
    for mask in 0u8..16 {
        let (by_org, listed, covered, positive) = (mask & 1 != 0, mask & 2 != 0, mask & 4 != 0, mask & 8 != 0);
        let funds = if covered || !positive { 50 } else { 10 };
        let amount = match (covered, positive) {
            (_, false) => 0,
            (true, true) => 50,
            (false, true) => 11,
        };
        let mut s = ContractState::new(ORG);
        s.add_funds(&ctx(ORG, 0), Amount(funds)).unwrap();
        if listed {
            s.add_recipient(&ORG, r).unwrap();
        }
        let before = s.encode();
        let caller = if by_org { ORG } else { r };
        let got = s.send_allowance(&ctx(caller, 1), r, Amount(amount));
        // Success iff every guard holds; otherwise the first failing guard in
        // the order caller, recipient, funds, amount names the error.
        let expected: Result<(), &str> = if !by_org {
            Err("Unauthorized")
        } else if !listed {
            Err("NotARecipient")
        } else if positive && !covered {
            Err("InsufficientFunds")
        } else if !positive {
            Err("ZeroAmount")
        } else {
            Ok(())
        };
        match (&got, expected) {
            (Ok(_), Ok(())) => {
                ensure!(s.balance_of(&r) == Amount(amount), "row {mask:04b}: recipient not credited");
                ensure!(s.balance_of(&ORG) == Amount(funds - amount), "row {mask:04b}: org not debited");
            }
            (Err(e), Err(code)) => {
                ensure!(e.code() == code, "row {mask:04b}: got {}, expected {code}", e.code());
                ensure!(s.encode() == before, "row {mask:04b}: state changed on error");
            }
            _ => return Err(format!("row {mask:04b}: got {got:?}, expected {expected:?}")),
        }
        rows += 1;
    }
    Ok(format!("{rows}/16 rows match"))
}

fn random_call(rng: &mut impl Rng, pool: &[Address]) -> (Address, ContractCall) {
    let caller = if rng.gen_bool(0.85) { ORG } else { pool[rng.gen_range(0..pool.len())] };
    let r = pool[rng.gen_range(0..pool.len())];
    let amount = Amount(match rng.gen_range(0..12) {
        0 => 0,
        1 => u64::MAX - rng.gen_range(0..4),
        _ => rng.gen_range(1..2_000),
    });
    let call = match rng.gen_range(0..7) {
        0 => ContractCall::add_recipient(r),
        1 => ContractCall::remove_recipient(r),
        2 | 3 => ContractCall::send_allowance(r, amount),
        4 => ContractCall::add_funds(amount),
        5 => ContractCall::register_bank_account(r, if rng.gen_bool(0.2) { String::new() } else { "ACCT".into() }),
        _ => ContractCall::get_balance(),
    };
    (caller, call)
}

fn conservation() -> Outcome {
    let pool: Vec<Address> = (1..=4).map(|i| Address([i; 20])).chain([ORG]).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(0xc045);
    let (mut calls, mut failures) = (0usize, 0usize);
    for seq in 0..10_000u64 {
        let mut s = ContractState::new(ORG);
        let mut funded: u128 = 0;
        for i in 0..rng.gen_range(5..40) {
            let (caller, call) = random_call(&mut rng, &pool);
            calls += 1;
            match s.apply(&ctx(caller, i), &call) {
                Ok(_) if call.kind == aidchain_core::CallKind::AddFunds => funded += call.amount.unwrap().0 as u128,
                Ok(_) => {}
                Err(_) => failures += 1,
            }
            let total: u128 = s.balances().map(|(_, a)| a.0 as u128).sum();
            ensure!(total == funded, "sequence {seq}, call {i}: balances {total} != funded {funded}");
        }
    }
    Ok(format!("10000 sequences, {calls} calls ({failures} rejected), 0 violations"))
}

fn access_control() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0xacc);
    let pool: Vec<Address> = (1..=4).map(|i| Address([i; 20])).collect();
    // A populated state so that every operation has something to touch.
    let mut s = ContractState::new(ORG);
    s.add_funds(&ctx(ORG, 0), Amount(10_000)).unwrap();
    for (i, r) in pool.iter().enumerate() {
        s.add_recipient(&ORG, *r).unwrap();
        s.send_allowance(&ctx(ORG, i as u64), *r, Amount(100)).unwrap();
    }
    let before = s.encode();
    let mut n = 0;
    while n < 10_000 {
        let mut outsider = Address(rng.gen());
        if outsider == ORG {
            outsider.0[0] ^= 1;
        }
        let r = pool[rng.gen_range(0..pool.len())];
        let amt = Amount(rng.gen_range(1..500));
        let call = match rng.gen_range(0..5) {
            0 => ContractCall::add_recipient(outsider),
            1 => ContractCall::remove_recipient(r),
            2 => ContractCall::send_allowance(r, amt),
            3 => ContractCall::add_funds(amt),
            _ => ContractCall::register_bank_account(r, "ACCT-X"),
        };
        let got = s.apply(&ctx(outsider, n), &call);
        ensure!(got == Err(ContractError::Unauthorized), "call {n} from {outsider}: {got:?}");
        ensure!(s.encode() == before, "call {n}: state bytes changed");
        n += 1;
    }
    Ok(format!("{n} calls from non-organization addresses, all Unauthorized, state unchanged"))
}

fn keccak_conformance() -> Outcome {
    let vectors = [
        ("", "c5d2460186f7233c927e7db2dcc703c0e500b653ca82273b7bfad8045d85a470"),
        ("abc", "4e03657aea45a94fc7d47ba826c8d667c0d1e6e33a64a036ec44f58fa12d6c45"),
    ];
    for (input, want) in vectors {
        ensure!(keccak256(input.as_bytes()).to_hex() == want, "keccak256({input:?}) mismatch");
    }
    let fixture = "IBAN-TEST-0001";
    let reference = Digest(keccak_ref::keccak256_ref(fixture.as_bytes())).to_hex();
    let ours = account_digest(fixture).to_hex();
    ensure!(ours == reference, "bank-account digest {ours} != reference {reference}");
    Ok(format!("standard vectors match; digest of {fixture:?} = {ours} matches the reference sponge"))
}

struct NodeWorkload {
    _dir: tempfile::TempDir,
    node: TestNode,
    accepted: usize,
}

/// 500 accepted organization transactions of mixed kinds against a dev node.
fn run_workload() -> Result<NodeWorkload, String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let org = Keypair::from_label("acceptance-org");
    let node = TestNode::start(&dir.path().join("data"), &org, 1);
    let client = NodeClient::new(&node.url).map_err(|e| e.to_string())?;
    let recipients: Vec<Address> = (0..5)
        .map(|i| Keypair::from_label(&format!("acceptance-r{i}")).address())
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(500);
    let mut accepted = 0;
    let mut attempts = 0;
    let mut last = None;
    while accepted < 500 {
        attempts += 1;
        ensure!(attempts < 5_000, "only {accepted} transactions accepted after {attempts} attempts");
        let r = recipients[rng.gen_range(0..recipients.len())];
        let call = match rng.gen_range(0..10) {
            0 | 1 => ContractCall::add_funds(Amount(rng.gen_range(1..5_000))),
            2 => ContractCall::add_recipient(r),
            3 => ContractCall::remove_recipient(r),
            4 => ContractCall::register_bank_account(r, format!("ACCT-{}", rng.gen::<u32>())),
            _ => ContractCall::send_allowance(r, Amount(rng.gen_range(1..800))),
        };
        match client.submit(&org, &call) {
            Ok(h) => {
                accepted += 1;
                last = Some(h);
            }
            Err(aidchain_cli::CliError::Api { code, .. }) if code == "ContractError" => {}
            Err(e) => return Err(format!("submit failed: {e}")),
        }
    }
    client
        .wait_for_commit(&last.expect("500 accepted"), Duration::from_secs(60))
        .map_err(|e| e.to_string())?;
    Ok(NodeWorkload {
        _dir: dir,
        node,
        accepted,
    })
}

fn replay_determinism(w: &NodeWorkload) -> Outcome {
    let (chain, truncation) = load(&w.node.store()).map_err(|e| e.to_string())?;
    ensure!(truncation.is_none(), "store has a torn tail");
    let txs: usize = chain.blocks().iter().map(|b| b.transactions.len()).sum();
    ensure!(txs == w.accepted, "store holds {txs} transactions, {} were accepted", w.accepted);

    let live = w.node.node().snapshot().chain.state().encode();
    let replayed = chain.replay().map_err(|e| e.to_string())?.encode();
    ensure!(live == replayed, "replayed state differs from the live node state");

    // Re-derive every state root by folding transactions block by block.
    let genesis = chain.genesis().clone();
    let mut exec = ExecState::new(genesis.initial_state());
    ensure!(chain.blocks()[0].state_root == exec.contract.root(), "genesis state root mismatch");
    for b in &chain.blocks()[1..] {
        for tx in &b.transactions {
            exec.apply_tx(tx).map_err(|e| format!("height {}: {e}", b.height))?;
        }
        ensure!(exec.contract.root() == b.state_root, "state root mismatch at height {}", b.height);
    }
    Ok(format!(
        "{txs} transactions in {} blocks; replay equals live state ({} bytes); all state roots re-verify",
        chain.height(),
        live.len()
    ))
}

fn record_heights(bytes: &[u8]) -> Vec<(usize, usize)> {
    let mut spans = Vec::new();
    let mut pos = 0;
    while pos < bytes.len() {
        let len = u32::from_be_bytes(bytes[pos..pos + 4].try_into().unwrap()) as usize;
        spans.push((pos, pos + 4 + len));
        pos += 4 + len;
    }
    spans
}

fn tamper_detection(w: &NodeWorkload) -> Outcome {
    let pristine = std::fs::read(w.node.store()).map_err(|e| e.to_string())?;
    let spans = record_heights(&pristine);
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let path = dir.path().join("tampered.dat");
    let path_s = path.display().to_string();

    let ok = cli("http://unused", &["chain-verify", "--store", &w.node.store().display().to_string()]);
    ensure!(ok.code == 0, "pristine store failed verification: {}", ok.stderr);

    let mut rng = ChaCha8Rng::seed_from_u64(0x7a3e);
    let mut missed = Vec::new();
    for _ in 0..100 {
        let pos = rng.gen_range(0..pristine.len());
        let mask: u8 = rng.gen_range(1..=255);
        let mut bytes = pristine.clone();
        bytes[pos] ^= mask;
        std::fs::write(&path, &bytes).map_err(|e| e.to_string())?;
        let height = spans.iter().position(|(s, e)| (*s..*e).contains(&pos)).unwrap();
        let run = cli("http://unused", &["--json", "chain-verify", "--store", &path_s]);
        let message = serde_json::from_str::<Value>(&run.stdout)
            .ok()
            .and_then(|v| v["message"].as_str().map(str::to_string))
            .unwrap_or_default();
        let prefix = format!("chain corrupt at height {height}");
        let located = message
            .strip_prefix(&prefix)
            .is_some_and(|rest| rest.starts_with([' ', ':']));
        if run.code != 3 || !located {
            missed.push(format!("byte {pos} (height {height}): exit {} {message:?}", run.code));
        }
    }
    ensure!(missed.is_empty(), "{} of 100 flips not detected or mislocated: {}", missed.len(), missed.join("; "));
    Ok(format!(
        "100 single-byte flips over {} bytes / {} records: all rejected with exit 3 at the flipped record's height",
        pristine.len(),
        spans.len()
    ))
}

fn safety_and_liveness() -> Outcome {
    let cfg = SweepConfig::default();
    ensure!(cfg.authorities == 4 && cfg.faulty == 1 && cfg.schedules == 100, "unexpected sweep configuration");
    let runs = safety_sweep(&cfg, Execution::default()).map_err(|e| e.to_string())?;
    let mut kinds: BTreeMap<String, usize> = BTreeMap::new();
    for run in &runs {
        if let Err(v) = &run.safety {
            return Err(format!("seed {}: {v}", run.seed));
        }
        ensure!(run.honest_converged, "seed {}: honest nodes diverged", run.seed);
        for f in run.faults.faults() {
            if f.behavior != Behavior::Honest {
                *kinds.entry(format!("{:?}", f.behavior)).or_default() += 1;
            }
        }
    }
    for k in ["Crashed", "Equivocating", "Partitioned"] {
        ensure!(kinds.contains_key(k), "no {k} fault in any schedule");
    }

    let mut latencies = 0;
    for seed in 0..5 {
        let trace = simulate(&Scenario {
            authorities: 4,
            seed,
            max_rounds: 40,
            workload: Workload {
                count: 60,
                per_round: 3,
            },
            ..Scenario::default()
        })
        .map_err(|e| e.to_string())?;
        check_safety(&trace).map_err(|v| format!("fault-free seed {seed}: {v}"))?;
        ensure!(trace.uncommitted().is_empty(), "seed {seed}: {} txs never committed", trace.uncommitted().len());
        for (tx, lat) in trace.commit_latencies() {
            ensure!(lat < 4, "seed {seed}: tx {tx} took {lat} rounds");
            latencies += 1;
        }
    }
    Ok(format!(
        "{} schedules safe and convergent (faults: {}); {latencies} fault-free txs all committed within 4 rounds",
        runs.len(),
        kinds.iter().map(|(k, v)| format!("{k} {v}")).collect::<Vec<_>>().join(", ")
    ))
}

fn end_to_end() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let org = Keypair::from_label("e2e-org");
    let recipient = Keypair::from_label("e2e-recipient");
    let node = TestNode::start(&dir.path().join("data"), &org, 1);
    let org_key = write_key(dir.path(), "org", &org).display().to_string();
    let r_key = write_key(dir.path(), "recipient", &recipient).display().to_string();
    let r = recipient.address().to_string();
    let url = &node.url;

    let step = |args: &[&str]| -> Result<Value, String> {
        let mut a = vec!["--json", "--key", org_key.as_str()];
        a.extend_from_slice(args);
        let run = cli(url, &a);
        ensure!(run.code == 0, "{args:?} exited {}: {}", run.code, run.stdout);
        Ok(run.json())
    };
    step(&["actor-register", "--key-file", &r_key, "--role", "recipient", "--name", "recipient"])?;
    step(&["recipient", "add", "--address", &r])?;
    step(&["funds", "add", "--amount", "1000"])?;
    let a30 = step(&["allowance", "send", "--to", &r, "--amount", "30"])?;
    let a20 = step(&["allowance", "send", "--to", &r, "--amount", "20"])?;
    step(&["bank-account", "register", "--recipient", &r, "--account", "IBAN-TEST-0001"])?;

    let s = step(&["settle-export", "--recipient", &r])?;
    ensure!(s["total"] == "50", "settlement total {}", s["total"]);
    let expected_hashes = Value::Array(vec![a30["tx_hash"].clone(), a20["tx_hash"].clone()]);
    ensure!(s["tx_hashes"] == expected_hashes, "settlement hashes {}", s["tx_hashes"]);

    let events = step(&["events"])?;
    let kinds: Vec<&str> = events.as_array().into_iter().flatten().filter_map(|e| e["kind"].as_str()).collect();
    let want = ["FundsAdded", "AllowanceSent", "AllowanceSent", "BankAccountRegistered"];
    ensure!(kinds == want, "events {kinds:?}");
    let heights: Vec<u64> = events.as_array().unwrap().iter().filter_map(|e| e["height"].as_u64()).collect();
    ensure!(heights.windows(2).all(|w| w[0] < w[1]), "events not in commit order: {heights:?}");

    let bal = cli(url, &["--json", "--key", &r_key, "balance"]);
    ensure!(bal.json()["balance"] == "50", "recipient balance {}", bal.stdout);
    Ok("settlement total 50 with 2 tx hashes; audit feed has 4 events in commit order".into())
}

fn main() -> ExitCode {
    let mut failed = 0;
    let mut report = |name: &str, budget: Option<Duration>, f: &mut dyn FnMut() -> Outcome| {
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let elapsed = start.elapsed();
        let result = match (result, budget) {
            (Ok(_), Some(b)) if elapsed > b => Err(format!("took {elapsed:.2?}, budget {b:?}")),
            (r, _) => r,
        };
        match result {
            Ok(detail) => println!("PASS  {name:<22} {detail} [{elapsed:.2?}]"),
            Err(reason) => {
                failed += 1;
                println!("FAIL  {name:<22} {reason} [{elapsed:.2?}]");
            }
        }
    };

    report("guard-matrix", Some(Duration::from_secs(1)), &mut guard_matrix);
    report("conservation-fuzz", Some(Duration::from_secs(30)), &mut conservation);
    report("access-control-fuzz", None, &mut access_control);
    report("keccak-conformance", None, &mut keccak_conformance);
    let workload = run_workload();
    match &workload {
        Ok(w) => {
            report("replay-determinism", None, &mut || replay_determinism(w));
            report("tamper-detection", None, &mut || tamper_detection(w));
        }
        Err(e) => {
            report("replay-determinism", None, &mut || Err(format!("workload: {e}")));
            report("tamper-detection", None, &mut || Err(format!("workload: {e}")));
        }
    }
    drop(workload);
    report("consensus-safety", Some(Duration::from_secs(60)), &mut safety_and_liveness);
    report("end-to-end", None, &mut end_to_end);

    if failed == 0 {
        println!("acceptance: all criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: {failed} criteria failed");
        ExitCode::FAILURE
    }
}
