//! Pending transactions, validated against the committed state plus every
//! transaction queued ahead of them.

use std::collections::{HashSet, VecDeque};

use aidchain_core::ledger::{ExecState, Transaction, TxRejection};
use aidchain_core::Digest;
use thiserror::Error;

pub const DEFAULT_CAPACITY: usize = 1024;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SubmitError {
    #[error(transparent)]
    Rejected(#[from] TxRejection),
    #[error("mempool is full ({0} transactions)")]
    Full(usize),
    #[error("transaction {0} is already pending")]
    Duplicate(Digest),
}

#[derive(Debug, Clone)]
pub struct Mempool {
    capacity: usize,
    /// Global arrival order, which is also FIFO per sender.
    queue: VecDeque<Transaction>,
    hashes: HashSet<Digest>,
    committed: ExecState,
    speculative: ExecState,
}

impl Mempool {
    pub fn new(committed: ExecState, capacity: usize) -> Self {
        Mempool {
            capacity,
            queue: VecDeque::new(),
            hashes: HashSet::new(),
            speculative: committed.clone(),
            committed,
        }
    }

    pub fn len(&self) -> usize {
        self.queue.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queue.is_empty()
    }

    pub fn contains(&self, hash: &Digest) -> bool {
        self.hashes.contains(hash)
    }

    pub fn get(&self, hash: &Digest) -> Option<&Transaction> {
        self.queue.iter().find(|tx| tx.hash() == *hash)
    }

    pub fn pending(&self) -> Vec<Transaction> {
        self.queue.iter().cloned().collect()
    }

    /// Next nonce `sender` should use, counting pending transactions.
    pub fn next_nonce(&self, sender: &aidchain_core::Address) -> u64 {
        self.speculative.next_nonce(sender)
    }

    pub fn speculative(&self) -> &ExecState {
        &self.speculative
    }

    pub fn submit(&mut self, tx: Transaction) -> Result<Digest, SubmitError> {
        let hash = tx.hash();
        if self.contains(&hash) {
            return Err(SubmitError::Duplicate(hash));
        }
        if self.queue.len() >= self.capacity {
            return Err(SubmitError::Full(self.capacity));
        }
        self.speculative.apply_tx(&tx)?;
        self.hashes.insert(hash);
        self.queue.push_back(tx);
        Ok(hash)
    }

    /// Moves the base to a newly committed state. Transactions it already
    /// contains are removed; the rest are re-validated in order and the
    /// ones that no longer apply are returned with the reason.
    pub fn rebase(&mut self, committed: ExecState) -> Vec<(Transaction, TxRejection)> {
        self.committed = committed;
        self.speculative = self.committed.clone();
        let old = std::mem::take(&mut self.queue);
        self.hashes.clear();
        let mut dropped = Vec::new();
        for tx in old {
            if tx.nonce < self.committed.next_nonce(&tx.sender) {
                continue;
            }
            match self.speculative.apply_tx(&tx) {
                Ok(_) => {
                    self.hashes.insert(tx.hash());
                    self.queue.push_back(tx);
                }
                Err(e) => dropped.push((tx, e)),
            }
        }
        dropped
    }
}
