//! Deterministic in-process network of authorities with scheduled faults.
//!
//! Time is a discrete tick counter. Every round lasts `round_duration` ticks
//! and every message is delivered after a seeded random delay of
//! `1..=round_duration/4` ticks, so proposal, vote and commit all fit inside
//! one round among reachable nodes. Nothing here reads a wall clock.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap};
use std::fmt::{self, Write as _};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::crypto::Keypair;
use crate::ledger::{Block, Chain, GenesisParams, LedgerError, Transaction};
use crate::types::Digest;

use super::config::{AuthorityConfig, AuthorityId, ConfigError};
use super::node::{short, AuthorityNode, Message, Target};

pub const DEFAULT_MAX_BATCH: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Behavior {
    Honest,
    Crashed,
    /// Signs two conflicting blocks: double proposals as proposer, double votes as voter.
    Equivocating,
    /// All messages to and from the node are dropped.
    Partitioned,
}

impl fmt::Display for Behavior {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Behavior::Honest => "honest",
            Behavior::Crashed => "crash",
            Behavior::Equivocating => "equivocate",
            Behavior::Partitioned => "partition",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Fault {
    pub node: usize,
    pub behavior: Behavior,
    /// Inclusive round range.
    pub from_round: u64,
    pub to_round: u64,
}

/// Per-node, per-round behaviors, fixed before the run.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FaultSchedule {
    faults: Vec<Fault>,
}

impl FaultSchedule {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn new(faults: Vec<Fault>) -> Self {
        FaultSchedule { faults }
    }

    pub fn push(&mut self, fault: Fault) {
        self.faults.push(fault);
    }

    pub fn faults(&self) -> &[Fault] {
        &self.faults
    }

    /// First matching entry wins; unscheduled nodes are honest.
    pub fn behavior(&self, node: usize, round: u64) -> Behavior {
        self.faults
            .iter()
            .find(|f| f.node == node && (f.from_round..=f.to_round).contains(&round))
            .map(|f| f.behavior)
            .unwrap_or(Behavior::Honest)
    }

    /// Nodes that are never scheduled to misbehave.
    pub fn is_honest(&self, node: usize) -> bool {
        !self.faults.iter().any(|f| f.node == node && f.behavior != Behavior::Honest)
    }

    pub fn faulty_nodes(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self
            .faults
            .iter()
            .filter(|f| f.behavior != Behavior::Honest)
            .map(|f| f.node)
            .collect();
        v.sort_unstable();
        v.dedup();
        v
    }

    /// A random schedule in which at most `f` nodes misbehave, each over one
    /// to three random round windows with a random fault kind.
    pub fn random(n: usize, f: usize, max_rounds: u64, rng: &mut impl Rng) -> Self {
        let mut nodes: Vec<usize> = (0..n).collect();
        let mut faults = Vec::new();
        for _ in 0..f.min(n) {
            let pick = rng.gen_range(0..nodes.len());
            let node = nodes.swap_remove(pick);
            for _ in 0..rng.gen_range(1..=3) {
                let behavior = match rng.gen_range(0..3) {
                    0 => Behavior::Crashed,
                    1 => Behavior::Equivocating,
                    _ => Behavior::Partitioned,
                };
                let from_round = rng.gen_range(0..max_rounds.max(1));
                let to_round = rng.gen_range(from_round..max_rounds.max(1));
                faults.push(Fault {
                    node,
                    behavior,
                    from_round,
                    to_round,
                });
            }
        }
        FaultSchedule { faults }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SkipReason {
    /// No pending transactions to propose.
    Idle,
    /// No valid proposal reached any live node.
    Timeout,
    /// A proposal circulated but no block gathered a quorum.
    InsufficientVotes,
}

impl fmt::Display for SkipReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SkipReason::Idle => "idle",
            SkipReason::Timeout => "timeout",
            SkipReason::InsufficientVotes => "insufficient-votes",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RoundOutcome {
    Committed(Block),
    Skipped(SkipReason),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RoundRecord {
    pub round: u64,
    pub proposer: AuthorityId,
    pub outcome: RoundOutcome,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeSummary {
    pub id: AuthorityId,
    pub honest: bool,
    /// Committed block hashes from genesis, indexed by height.
    pub block_hashes: Vec<Digest>,
}

impl NodeSummary {
    pub fn height(&self) -> u64 {
        self.block_hashes.len().saturating_sub(1) as u64
    }
}

#[derive(Debug, Clone)]
pub struct SimulationTrace {
    pub lines: Vec<String>,
    pub rounds: Vec<RoundRecord>,
    pub nodes: Vec<NodeSummary>,
    pub chains: Vec<Chain>,
    /// Round each workload transaction was submitted and first committed in.
    pub submitted: HashMap<Digest, u64>,
    pub committed: HashMap<Digest, u64>,
}

impl SimulationTrace {
    /// Line-oriented log followed by one `committed_height=` line per node.
    pub fn render(&self) -> String {
        let mut s = String::new();
        for l in &self.lines {
            s.push_str(l);
            s.push('\n');
        }
        for n in &self.nodes {
            let head = n.block_hashes.last().map(short).unwrap_or_default();
            let _ = writeln!(
                s,
                "node={} honest={} committed_height={} head={}",
                n.id,
                n.honest,
                n.height(),
                head
            );
        }
        s
    }

    /// Rounds between submission and commit, per committed transaction.
    pub fn commit_latencies(&self) -> Vec<(Digest, u64)> {
        let mut v: Vec<(Digest, u64)> = self
            .committed
            .iter()
            .map(|(h, c)| (*h, c - self.submitted.get(h).copied().unwrap_or(0)))
            .collect();
        v.sort();
        v
    }

    pub fn uncommitted(&self) -> Vec<Digest> {
        let mut v: Vec<Digest> = self
            .submitted
            .keys()
            .filter(|h| !self.committed.contains_key(h))
            .copied()
            .collect();
        v.sort();
        v
    }

    pub fn committed_rounds(&self) -> usize {
        self.rounds
            .iter()
            .filter(|r| matches!(r.outcome, RoundOutcome::Committed(_)))
            .count()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SafetyViolation {
    pub height: u64,
    pub nodes: Vec<AuthorityId>,
    pub hashes: Vec<Digest>,
}

impl fmt::Display for SafetyViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "conflicting blocks at height {} across nodes {:?}",
            self.height, self.nodes
        )
    }
}

/// No height may carry two different committed blocks among honest nodes.
pub fn check_safety(trace: &SimulationTrace) -> Result<(), SafetyViolation> {
    let honest: Vec<&NodeSummary> = trace.nodes.iter().filter(|n| n.honest).collect();
    let max = honest.iter().map(|n| n.block_hashes.len()).max().unwrap_or(0);
    for h in 0..max {
        let mut seen: Vec<(Digest, AuthorityId)> = honest
            .iter()
            .filter_map(|n| n.block_hashes.get(h).map(|d| (*d, n.id)))
            .collect();
        seen.sort();
        let first = seen.first().map(|(d, _)| *d);
        if seen.iter().any(|(d, _)| Some(*d) != first) {
            let mut hashes: Vec<Digest> = seen.iter().map(|(d, _)| *d).collect();
            hashes.dedup();
            return Err(SafetyViolation {
                height: h as u64,
                nodes: seen.iter().map(|(_, id)| *id).collect(),
                hashes,
            });
        }
    }
    Ok(())
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid configuration: {0}")]
    ConfigInvalid(String),
}

impl From<ConfigError> for SimError {
    fn from(e: ConfigError) -> Self {
        SimError::ConfigInvalid(e.to_string())
    }
}

impl From<LedgerError> for SimError {
    fn from(e: LedgerError) -> Self {
        SimError::ConfigInvalid(e.to_string())
    }
}

#[derive(Debug, PartialEq, Eq, PartialOrd, Ord)]
struct InFlight {
    tick: u64,
    seq: u64,
    from: usize,
    to: usize,
}

/// A network of authority nodes driven round by round.
pub struct Network {
    nodes: Vec<AuthorityNode>,
    faults: FaultSchedule,
    rng: ChaCha8Rng,
    now: u64,
    round: u64,
    seq: u64,
    queue: BinaryHeap<Reverse<InFlight>>,
    payloads: HashMap<u64, Message>,
    max_batch: usize,
    lines: Vec<String>,
    log: bool,
}

impl Network {
    /// One node per key, all starting from `chain`. Node `i` signs as authority `i`
    /// in the chain's config.
    pub fn new(chain: Chain, keys: Vec<Keypair>, faults: FaultSchedule, seed: u64) -> Result<Self, SimError> {
        let config = chain.config().clone();
        if keys.len() != config.len() {
            return Err(SimError::ConfigInvalid(format!(
                "{} keys for {} authorities",
                keys.len(),
                config.len()
            )));
        }
        for (i, (k, a)) in keys.iter().zip(config.authorities()).enumerate() {
            if k.public() != a.public_key {
                return Err(SimError::ConfigInvalid(format!(
                    "key {i} does not match authority {}",
                    a.id
                )));
            }
        }
        if let Some(bad) = faults.faults().iter().find(|f| f.node >= keys.len()) {
            return Err(SimError::ConfigInvalid(format!(
                "fault names node {} but there are {} authorities",
                bad.node,
                keys.len()
            )));
        }
        let round = chain.last_round().map_or(0, |r| r + 1);
        let nodes = keys
            .into_iter()
            .zip(config.authorities())
            .map(|(k, a)| AuthorityNode::new(a.id, k, chain.clone()))
            .collect();
        Ok(Network {
            nodes,
            faults,
            rng: ChaCha8Rng::seed_from_u64(seed),
            now: 0,
            round,
            seq: 0,
            queue: BinaryHeap::new(),
            payloads: HashMap::new(),
            max_batch: DEFAULT_MAX_BATCH,
            lines: Vec::new(),
            log: true,
        })
    }

    pub fn with_max_batch(mut self, max_batch: usize) -> Self {
        self.max_batch = max_batch.max(1);
        self
    }

    /// Disables trace lines (the node service does not need them).
    pub fn quiet(mut self) -> Self {
        self.log = false;
        self
    }

    pub fn round(&self) -> u64 {
        self.round
    }

    pub fn nodes(&self) -> &[AuthorityNode] {
        &self.nodes
    }

    pub fn config(&self) -> &AuthorityConfig {
        self.nodes[0].chain().config()
    }

    fn duration(&self) -> u64 {
        self.config().round_duration()
    }

    fn behavior(&self, node: usize) -> Behavior {
        self.faults.behavior(node, self.round)
    }

    fn trace(&mut self, node: usize, phase: &str, msg: impl FnOnce() -> String) {
        if self.log {
            let line = format!(
                "round={} tick={} phase={phase} node={node} msg={}",
                self.round,
                self.now,
                msg()
            );
            self.lines.push(line);
        }
    }

    fn index_of(&self, id: AuthorityId) -> Option<usize> {
        self.config().position(id)
    }

    fn send(&mut self, from: usize, target: Target, msg: Message) {
        let targets: Vec<usize> = match target {
            Target::All => (0..self.nodes.len()).filter(|&i| i != from).collect(),
            Target::One(id) => self.index_of(id).into_iter().collect(),
        };
        let max_delay = (self.duration() / 4).max(1);
        for to in targets {
            let label = msg.label();
            if self.behavior(from) == Behavior::Partitioned || self.behavior(to) == Behavior::Partitioned {
                self.trace(from, "drop", || format!("{label} to={to}"));
                continue;
            }
            let delay = self.rng.gen_range(1..=max_delay);
            self.seq += 1;
            let seq = self.seq;
            self.payloads.insert(seq, msg.clone());
            self.queue.push(Reverse(InFlight {
                tick: self.now + delay,
                seq,
                from,
                to,
            }));
            let at = self.now + delay;
            self.trace(from, "send", || format!("{label} to={to} at={at}"));
        }
    }

    fn dispatch(&mut self, from: usize, out: Vec<(Target, Message)>) {
        for (target, msg) in out {
            self.send(from, target, msg);
        }
    }

    fn deliver_until(&mut self, end: u64) {
        while let Some(Reverse(head)) = self.queue.peek() {
            if head.tick >= end {
                break;
            }
            let Reverse(item) = self.queue.pop().expect("peeked");
            let msg = self.payloads.remove(&item.seq).expect("payload for in-flight message");
            self.now = self.now.max(item.tick);
            match self.behavior(item.to) {
                Behavior::Crashed | Behavior::Partitioned => {
                    self.trace(item.to, "drop", || format!("{} from={}", msg.label(), item.from));
                    continue;
                }
                Behavior::Honest | Behavior::Equivocating => {}
            }
            let from_id = self.nodes[item.from].id();
            let out = self.nodes[item.to].handle(from_id, msg);
            self.dispatch(item.to, out);
        }
        self.now = self.now.max(end);
    }

    /// Runs one full round with `pending` as every node's mempool.
    pub fn run_round(&mut self, pending: &[Transaction]) -> RoundRecord {
        let round = self.round;
        let start = self.now;
        let end = start + self.duration();
        let proposer_id = self.config().select_proposer(round);
        let proposer = self.index_of(proposer_id).expect("proposer in config");
        let heights_before: Vec<u64> = self.nodes.iter().map(|n| n.chain().height()).collect();

        for i in 0..self.nodes.len() {
            let behavior = self.behavior(i);
            if behavior == Behavior::Crashed {
                continue;
            }
            self.nodes[i].equivocate = behavior == Behavior::Equivocating;
            let out = self.nodes[i].begin_round(round);
            self.dispatch(i, out);
        }

        let mut proposed = false;
        match self.behavior(proposer) {
            Behavior::Crashed => {
                self.trace(proposer, "propose", || "none crashed".into());
            }
            Behavior::Equivocating => {
                if let Some((a, b)) = self.nodes[proposer].propose_conflicting(pending, self.max_batch) {
                    proposed = true;
                    self.trace(proposer, "propose", || {
                        format!("equivocate a={} b={}", short(&a.hash()), short(&b.hash()))
                    });
                    let mut out = self.nodes[proposer].accept_own_proposal(&a);
                    out.extend(self.nodes[proposer].accept_own_proposal(&b));
                    for to in 0..self.nodes.len() {
                        if to == proposer {
                            continue;
                        }
                        let block = if to % 2 == 0 { a.clone() } else { b.clone() };
                        let id = self.nodes[to].id();
                        self.send(proposer, Target::One(id), Message::Proposal { round, block });
                    }
                    self.dispatch(proposer, out);
                }
            }
            Behavior::Honest | Behavior::Partitioned => {
                if let Some(block) = self.nodes[proposer].propose(pending, self.max_batch) {
                    proposed = true;
                    self.trace(proposer, "propose", || {
                        format!(
                            "block height={} txs={} block={}",
                            block.height,
                            block.transactions.len(),
                            short(&block.hash())
                        )
                    });
                    let out = self.nodes[proposer].accept_own_proposal(&block);
                    self.send(proposer, Target::All, Message::Proposal { round, block });
                    self.dispatch(proposer, out);
                }
            }
        }

        self.deliver_until(end);

        let committed = self
            .nodes
            .iter()
            .enumerate()
            .filter(|(i, _)| self.behavior(*i) != Behavior::Crashed)
            .flat_map(|(i, n)| {
                let from = heights_before[i] + 1;
                (from..=n.chain().height()).filter_map(move |h| n.chain().block(h))
            })
            .find(|b| b.round() == Some(round))
            .cloned();
        let outcome = match committed {
            Some(block) => RoundOutcome::Committed(block),
            None if !proposed && self.behavior(proposer) != Behavior::Crashed => {
                let idle = self.nodes[proposer].select_batch(pending, 1).is_empty();
                RoundOutcome::Skipped(if idle {
                    SkipReason::Idle
                } else {
                    SkipReason::Timeout
                })
            }
            None if !proposed || self.behavior(proposer) == Behavior::Partitioned => {
                RoundOutcome::Skipped(SkipReason::Timeout)
            }
            None => RoundOutcome::Skipped(SkipReason::InsufficientVotes),
        };
        let summary = match &outcome {
            RoundOutcome::Committed(b) => format!(
                "committed height={} txs={} votes={} block={}",
                b.height,
                b.transactions.len(),
                b.votes.len(),
                short(&b.hash())
            ),
            RoundOutcome::Skipped(r) => format!("skipped reason={r}"),
        };
        self.trace(proposer, "outcome", || summary);
        self.round += 1;
        RoundRecord {
            round,
            proposer: proposer_id,
            outcome,
        }
    }

    /// Delivers everything still in flight and lets nodes exchange status once
    /// more so that reachable nodes converge. No new proposals are made.
    pub fn settle(&mut self) {
        let end = self.now + self.duration();
        for i in 0..self.nodes.len() {
            if self.behavior(i) == Behavior::Crashed {
                continue;
            }
            let height = self.nodes[i].chain().height();
            self.dispatch(i, vec![(Target::All, Message::Status { height })]);
        }
        self.deliver_until(end);
        // Catch-up replies sent during the window.
        let end = self.now + self.duration();
        self.deliver_until(end);
    }

    pub fn into_parts(self) -> (Vec<AuthorityNode>, Vec<String>) {
        (self.nodes, self.lines)
    }
}

/// Inputs to a reproducible simulation run.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub authorities: usize,
    pub round_duration: u64,
    pub quorum: Option<u32>,
    pub faults: FaultSchedule,
    pub seed: u64,
    pub max_rounds: u64,
    pub max_batch: usize,
    pub workload: Workload,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Workload {
    pub count: usize,
    /// Transactions submitted per round; 0 submits the whole workload at round 0.
    pub per_round: usize,
}

impl Default for Scenario {
    fn default() -> Self {
        Scenario {
            authorities: 4,
            round_duration: super::config::DEFAULT_ROUND_DURATION,
            quorum: None,
            faults: FaultSchedule::none(),
            seed: 0,
            max_rounds: 20,
            max_batch: DEFAULT_MAX_BATCH,
            workload: Workload {
                count: 0,
                per_round: 0,
            },
        }
    }
}

/// Deterministic authority keys used by simulations.
pub fn authority_keys(n: usize) -> Vec<Keypair> {
    (0..n)
        .map(|i| Keypair::from_label(&format!("sim-authority-{i}")))
        .collect()
}

pub fn organization_key() -> Keypair {
    Keypair::from_label("sim-organization")
}

pub fn recipient_key(i: usize) -> Keypair {
    Keypair::from_label(&format!("sim-recipient-{i}"))
}

/// A valid organization-signed workload: fund, enrol three recipients, then
/// alternate allowances and bank-account registrations.
pub fn standard_workload(count: usize) -> Vec<Transaction> {
    use crate::contract::ContractCall;
    use crate::types::Amount;

    let org = organization_key();
    let recipients: Vec<_> = (0..3).map(|i| recipient_key(i).address()).collect();
    let mut calls = vec![ContractCall::add_funds(Amount(1_000_000))];
    calls.extend(recipients.iter().map(|r| ContractCall::add_recipient(*r)));
    let mut i = 0usize;
    while calls.len() < count {
        let r = recipients[i % recipients.len()];
        calls.push(match i % 4 {
            0 | 2 => ContractCall::send_allowance(r, Amount(10 + i as u64)),
            1 => ContractCall::register_bank_account(r, format!("ACCT-{i:06}")),
            _ => ContractCall::add_funds(Amount(500)),
        });
        i += 1;
    }
    calls.truncate(count);
    calls
        .into_iter()
        .enumerate()
        .map(|(nonce, call)| Transaction::sign(&org, nonce as u64, call))
        .collect()
}

/// Runs `scenario` to completion. A pure function of its input.
pub fn simulate(scenario: &Scenario) -> Result<SimulationTrace, SimError> {
    let keys = authority_keys(scenario.authorities);
    let base = AuthorityConfig::from_keys(&keys, scenario.round_duration)?;
    let config = match scenario.quorum {
        Some(q) => AuthorityConfig::with_quorum(base.authorities().to_vec(), q, scenario.round_duration)?,
        None => base,
    };
    let workload = standard_workload(scenario.workload.count);
    simulate_with(
        GenesisParams {
            organization: organization_key().address(),
            authorities: config,
        },
        keys,
        &workload,
        scenario.workload.per_round,
        &scenario.faults,
        scenario.seed,
        scenario.max_rounds,
        scenario.max_batch,
    )
}

/// Lower-level entry point with an explicit workload.
#[allow(clippy::too_many_arguments)]
pub fn simulate_with(
    genesis: GenesisParams,
    keys: Vec<Keypair>,
    workload: &[Transaction],
    per_round: usize,
    faults: &FaultSchedule,
    seed: u64,
    max_rounds: u64,
    max_batch: usize,
) -> Result<SimulationTrace, SimError> {
    let chain = Chain::new(genesis)?;
    let mut net = Network::new(chain, keys, faults.clone(), seed)?.with_max_batch(max_batch);
    let submit_round = |i: usize| -> u64 {
        if per_round == 0 {
            0
        } else {
            (i / per_round) as u64
        }
    };
    let mut submitted = HashMap::new();
    let mut committed = HashMap::new();
    let mut rounds = Vec::new();
    for round in 0..max_rounds {
        let visible: Vec<Transaction> = workload
            .iter()
            .enumerate()
            .filter(|(i, _)| submit_round(*i) <= round)
            .map(|(_, t)| t.clone())
            .collect();
        for (i, tx) in workload.iter().enumerate() {
            if submit_round(i) == round {
                submitted.insert(tx.hash(), round);
            }
        }
        let record = net.run_round(&visible);
        if let RoundOutcome::Committed(block) = &record.outcome {
            for tx in &block.transactions {
                committed.entry(tx.hash()).or_insert(round);
            }
        }
        rounds.push(record);
    }
    net.settle();
    let (nodes, lines) = net.into_parts();
    let summaries = nodes
        .iter()
        .enumerate()
        .map(|(i, n)| NodeSummary {
            id: n.id(),
            honest: faults.is_honest(i),
            block_hashes: n.chain().blocks().iter().map(Block::hash).collect(),
        })
        .collect();
    Ok(SimulationTrace {
        lines,
        rounds,
        nodes: summaries,
        chains: nodes.into_iter().map(AuthorityNode::into_chain).collect(),
        submitted,
        committed,
    })
}
