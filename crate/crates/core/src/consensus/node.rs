//! Per-authority protocol state machine: propose, vote, commit, catch up.
//!
//! The machine is transport-agnostic. It consumes messages and returns the
//! messages it wants sent; the caller decides how (and whether) they arrive.

use std::collections::{BTreeMap, HashMap, HashSet};

use crate::crypto::Keypair;
use crate::ledger::{Block, Chain, ExecState, LedgerError, Transaction};
use crate::types::Digest;

use super::config::{AuthorityId, Vote};

/// Largest batch a single catch-up response carries.
const SYNC_BATCH: u64 = 64;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Message {
    Proposal { round: u64, block: Block },
    Vote { block_hash: Digest, vote: Vote },
    /// A block together with its quorum certificate.
    Commit { block: Block },
    /// Sender's committed height, sent at every round start.
    Status { height: u64 },
}

impl Message {
    pub fn label(&self) -> String {
        match self {
            Message::Proposal { round, block } => format!(
                "proposal round={round} height={} txs={} block={}",
                block.height,
                block.transactions.len(),
                short(&block.hash())
            ),
            Message::Vote { block_hash, vote } => format!(
                "vote round={} voter={} block={}",
                vote.round,
                vote.voter,
                short(block_hash)
            ),
            Message::Commit { block } => format!(
                "commit height={} votes={} block={}",
                block.height,
                block.votes.len(),
                short(&block.hash())
            ),
            Message::Status { height } => format!("status height={height}"),
        }
    }
}

pub(crate) fn short(d: &Digest) -> String {
    d.to_hex()[..12].to_string()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Target {
    All,
    One(AuthorityId),
}

pub type Outbox = Vec<(Target, Message)>;

#[derive(Debug)]
pub struct AuthorityNode {
    id: AuthorityId,
    key: Keypair,
    chain: Chain,
    round: u64,
    voted: bool,
    committed_this_round: bool,
    proposals: HashMap<Digest, Block>,
    votes: HashMap<Digest, BTreeMap<AuthorityId, Vote>>,
    future: BTreeMap<u64, Block>,
    /// When set, votes for every valid proposal and forges a conflicting one.
    pub equivocate: bool,
}

impl AuthorityNode {
    pub fn new(id: AuthorityId, key: Keypair, chain: Chain) -> Self {
        AuthorityNode {
            id,
            key,
            chain,
            round: 0,
            voted: false,
            committed_this_round: false,
            proposals: HashMap::new(),
            votes: HashMap::new(),
            future: BTreeMap::new(),
            equivocate: false,
        }
    }

    pub fn id(&self) -> AuthorityId {
        self.id
    }

    pub fn chain(&self) -> &Chain {
        &self.chain
    }

    pub fn into_chain(self) -> Chain {
        self.chain
    }

    pub fn begin_round(&mut self, round: u64) -> Outbox {
        self.round = round;
        self.voted = false;
        self.committed_this_round = false;
        self.proposals.clear();
        self.votes.clear();
        vec![(
            Target::All,
            Message::Status {
                height: self.chain.height(),
            },
        )]
    }

    /// Picks the longest valid prefix-respecting batch from `pending`, skipping
    /// transactions that are already committed or not yet applicable.
    pub fn select_batch(&self, pending: &[Transaction], max_batch: usize) -> Vec<Transaction> {
        select_batch(self.chain.exec_state(), pending, max_batch)
    }

    /// Builds this round's proposal if this node is the proposer and there is work.
    pub fn propose(&self, pending: &[Transaction], max_batch: usize) -> Option<Block> {
        if self.chain.config().select_proposer(self.round) != self.id {
            return None;
        }
        let batch = self.select_batch(pending, max_batch);
        if batch.is_empty() {
            return None;
        }
        self.chain.build_block(batch, self.id).ok()
    }

    /// Two conflicting proposals for the same height; `None` without work.
    pub fn propose_conflicting(&self, pending: &[Transaction], max_batch: usize) -> Option<(Block, Block)> {
        let a = self.propose(pending, max_batch)?;
        let b = self.chain.build_block(Vec::new(), self.id).ok()?;
        Some((a, b))
    }

    fn cast_vote(&mut self, hash: Digest, out: &mut Outbox) {
        let vote = Vote::sign(&self.key, self.id, &hash, self.round);
        self.votes.entry(hash).or_default().insert(self.id, vote);
        out.push((
            Target::All,
            Message::Vote {
                block_hash: hash,
                vote,
            },
        ));
    }

    pub fn handle(&mut self, from: AuthorityId, msg: Message) -> Outbox {
        let mut out = Vec::new();
        match msg {
            Message::Proposal { round, block } => self.on_proposal(from, round, block, &mut out),
            Message::Vote { block_hash, vote } => {
                if vote.round == self.round
                    && vote.voter == from
                    && vote.verify(self.chain.config(), &block_hash).is_ok()
                {
                    self.votes
                        .entry(block_hash)
                        .or_default()
                        .insert(vote.voter, vote);
                    self.try_commit(block_hash, &mut out);
                }
            }
            Message::Commit { block } => self.on_commit(from, block, &mut out),
            Message::Status { height } => {
                let mine = self.chain.height();
                if mine > height {
                    let last = mine.min(height + SYNC_BATCH);
                    for h in height + 1..=last {
                        let block = self.chain.block(h).expect("height within chain").clone();
                        out.push((Target::One(from), Message::Commit { block }));
                    }
                }
            }
        }
        out
    }

    fn on_proposal(&mut self, from: AuthorityId, round: u64, block: Block, out: &mut Outbox) {
        let config = self.chain.config();
        if round != self.round || from != config.select_proposer(round) || block.proposer != from {
            return;
        }
        if self.chain.check_body(&block).is_err() {
            return;
        }
        let hash = block.hash();
        self.proposals.insert(hash, block.clone());
        if !self.voted || self.equivocate {
            self.voted = true;
            self.cast_vote(hash, out);
            if self.equivocate && !block.transactions.is_empty() {
                if let Ok(forged) = self.chain.build_block(Vec::new(), block.proposer) {
                    let forged_hash = forged.hash();
                    self.proposals.insert(forged_hash, forged.clone());
                    out.push((
                        Target::All,
                        Message::Proposal {
                            round,
                            block: forged,
                        },
                    ));
                    self.cast_vote(forged_hash, out);
                }
            }
        }
        self.try_commit(hash, out);
    }

    /// Records the proposer's own proposal and vote.
    pub fn accept_own_proposal(&mut self, block: &Block) -> Outbox {
        let mut out = Vec::new();
        let hash = block.hash();
        self.proposals.insert(hash, block.clone());
        if !self.voted || self.equivocate {
            self.voted = true;
            self.cast_vote(hash, &mut out);
        }
        self.try_commit(hash, &mut out);
        out
    }

    fn try_commit(&mut self, hash: Digest, out: &mut Outbox) {
        if self.committed_this_round {
            return;
        }
        let quorum = self.chain.config().quorum() as usize;
        let Some(votes) = self.votes.get(&hash) else {
            return;
        };
        if votes.len() < quorum {
            return;
        }
        let Some(proposal) = self.proposals.get(&hash) else {
            return;
        };
        let mut block = proposal.clone();
        block.votes = votes.values().copied().collect();
        if self.chain.append(block.clone()).is_ok() {
            self.committed_this_round = true;
            out.push((Target::All, Message::Commit { block }));
            self.drain_future();
        }
    }

    fn on_commit(&mut self, from: AuthorityId, block: Block, out: &mut Outbox) {
        let head = self.chain.height();
        if block.height <= head {
            return;
        }
        if block.height > head + 1 {
            self.future.insert(block.height, block);
            out.push((Target::One(from), Message::Status { height: head }));
            return;
        }
        if self.chain.append(block).is_ok() {
            self.drain_future();
        }
    }

    fn drain_future(&mut self) {
        loop {
            let next = self.chain.height() + 1;
            self.future.retain(|h, _| *h >= next);
            let Some(block) = self.future.remove(&next) else {
                break;
            };
            if self.chain.append(block).is_err() {
                break;
            }
        }
    }

    /// Appends an externally certified block (used when loading a node from disk).
    pub fn adopt(&mut self, block: Block) -> Result<(), LedgerError> {
        self.chain.append(block).map(|_| ())
    }
}

/// Greedy batch selection against `exec`: keeps pending order, drops
/// transactions that fail, and retries deferred nonces once earlier ones land.
pub fn select_batch(exec: &ExecState, pending: &[Transaction], max_batch: usize) -> Vec<Transaction> {
    let mut exec = exec.clone();
    let mut batch = Vec::new();
    let mut taken = HashSet::new();
    loop {
        let mut progressed = false;
        for (i, tx) in pending.iter().enumerate() {
            if batch.len() >= max_batch {
                return batch;
            }
            if taken.contains(&i) || tx.nonce < exec.next_nonce(&tx.sender) {
                continue;
            }
            if exec.apply_tx(tx).is_ok() {
                taken.insert(i);
                batch.push(tx.clone());
                progressed = true;
            }
        }
        if !progressed {
            return batch;
        }
    }
}
