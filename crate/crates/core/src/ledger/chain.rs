use std::collections::{BTreeSet, HashMap};

use thiserror::Error;

use crate::consensus::{AuthorityConfig, AuthorityId, ConfigError};
use crate::contract::{CallContext, ContractError, ContractState, EventRecord};
use crate::crypto::SignatureError;
use crate::types::{Address, Digest};

use super::block::{Block, GenesisParams, Transaction};

/// Why a single transaction cannot be included.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TxRejection {
    #[error("bad signature: {0}")]
    BadSignature(#[from] SignatureError),
    #[error("bad nonce: expected {expected}, got {got}")]
    BadNonce { expected: u64, got: u64 },
    #[error("contract error: {0}")]
    Contract(#[from] ContractError),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LedgerError {
    #[error("block {height}: parent hash does not match the chain head")]
    BadParent { height: u64 },
    #[error("expected height {expected}, got {got}")]
    BadHeight { expected: u64, got: u64 },
    #[error("block {height}: proposer {got} is not the round {round} proposer {expected}")]
    WrongProposer {
        height: u64,
        round: u64,
        expected: AuthorityId,
        got: AuthorityId,
    },
    #[error("block {height}: state root does not match the replayed state")]
    BadStateRoot { height: u64 },
    #[error("block {height}: {valid} valid votes, quorum is {quorum}")]
    InsufficientVotes { height: u64, valid: u32, quorum: u32 },
    #[error("block {height}: bad vote from {voter}: {reason}")]
    BadVote {
        height: u64,
        voter: AuthorityId,
        reason: String,
    },
    #[error("transaction {index}: {reason}")]
    InvalidTransaction { index: usize, reason: TxRejection },
    #[error("bad genesis: {0}")]
    BadGenesis(String),
    #[error("chain corrupt at height {height}: {reason}")]
    ChainCorrupt { height: u64, reason: String },
}

impl From<ConfigError> for LedgerError {
    fn from(e: ConfigError) -> Self {
        LedgerError::BadGenesis(e.to_string())
    }
}

/// Running state that every block is checked against.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExecState {
    pub contract: ContractState,
    /// Next expected nonce per sender.
    pub nonces: HashMap<Address, u64>,
}

impl ExecState {
    pub fn new(contract: ContractState) -> Self {
        ExecState {
            contract,
            nonces: HashMap::new(),
        }
    }

    pub fn next_nonce(&self, sender: &Address) -> u64 {
        self.nonces.get(sender).copied().unwrap_or(0)
    }

    /// Verifies and applies one transaction. On error nothing changes.
    pub fn apply_tx(&mut self, tx: &Transaction) -> Result<Vec<EventRecord>, TxRejection> {
        tx.verify_signature()?;
        let expected = self.next_nonce(&tx.sender);
        if tx.nonce != expected {
            return Err(TxRejection::BadNonce {
                expected,
                got: tx.nonce,
            });
        }
        let events = self
            .contract
            .apply(&CallContext::new(tx.sender, tx.hash()), &tx.call)?;
        self.nonces.insert(tx.sender, expected + 1);
        Ok(events)
    }

    /// Applies transactions in order; fails on the first invalid one.
    pub fn apply_all(&mut self, txs: &[Transaction]) -> Result<Vec<EventRecord>, LedgerError> {
        let mut events = Vec::new();
        for (index, tx) in txs.iter().enumerate() {
            events.extend(
                self.apply_tx(tx)
                    .map_err(|reason| LedgerError::InvalidTransaction { index, reason })?,
            );
        }
        Ok(events)
    }
}

/// A validated sequence of blocks from genesis, with the state it produces.
#[derive(Debug, Clone)]
pub struct Chain {
    genesis: GenesisParams,
    blocks: Vec<Block>,
    events: Vec<Vec<EventRecord>>,
    exec: ExecState,
    last_round: Option<u64>,
}

impl PartialEq for Chain {
    fn eq(&self, other: &Self) -> bool {
        self.blocks == other.blocks
    }
}

impl Chain {
    pub fn new(genesis: GenesisParams) -> Result<Self, LedgerError> {
        genesis.authorities.validate()?;
        let block = Block::genesis(genesis.clone());
        let exec = ExecState::new(genesis.initial_state());
        Ok(Chain {
            genesis,
            blocks: vec![block],
            events: vec![Vec::new()],
            exec,
            last_round: None,
        })
    }

    /// Starts a chain from a stored genesis block, checking that it is well formed.
    pub fn from_genesis_block(block: Block) -> Result<Self, LedgerError> {
        let params = match (&block.genesis, block.height) {
            (Some(p), 0) => p.clone(),
            _ => return Err(LedgerError::BadGenesis("first block is not a genesis block".into())),
        };
        let chain = Chain::new(params)?;
        if chain.blocks[0] != block {
            return Err(LedgerError::BadGenesis(
                "genesis block fields do not match its parameters".into(),
            ));
        }
        Ok(chain)
    }

    pub fn genesis(&self) -> &GenesisParams {
        &self.genesis
    }

    pub fn config(&self) -> &AuthorityConfig {
        &self.genesis.authorities
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn block(&self, height: u64) -> Option<&Block> {
        self.blocks.get(usize::try_from(height).ok()?)
    }

    pub fn head(&self) -> &Block {
        self.blocks.last().expect("chain always holds genesis")
    }

    pub fn height(&self) -> u64 {
        self.head().height
    }

    pub fn head_hash(&self) -> Digest {
        self.head().hash()
    }

    pub fn last_round(&self) -> Option<u64> {
        self.last_round
    }

    pub fn state(&self) -> &ContractState {
        &self.exec.contract
    }

    pub fn exec_state(&self) -> &ExecState {
        &self.exec
    }

    /// Events emitted by the transactions of `height`, in order.
    pub fn events_at(&self, height: u64) -> &[EventRecord] {
        usize::try_from(height)
            .ok()
            .and_then(|h| self.events.get(h))
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    pub fn next_nonce(&self, sender: &Address) -> u64 {
        self.exec.next_nonce(sender)
    }

    /// Builds an unvoted child of the head containing `txs`.
    pub fn build_block(&self, txs: Vec<Transaction>, proposer: AuthorityId) -> Result<Block, LedgerError> {
        let mut exec = self.exec.clone();
        exec.apply_all(&txs)?;
        Ok(Block {
            height: self.height() + 1,
            parent_hash: self.head_hash(),
            proposer,
            transactions: txs,
            state_root: exec.contract.root(),
            genesis: None,
            votes: Vec::new(),
        })
    }

    /// Checks everything about `block` except its votes, returning the post-block state.
    pub fn check_body(&self, block: &Block) -> Result<(ExecState, Vec<EventRecord>), LedgerError> {
        let expected = self.height() + 1;
        if block.height != expected {
            return Err(LedgerError::BadHeight {
                expected,
                got: block.height,
            });
        }
        if block.parent_hash != self.head_hash() {
            return Err(LedgerError::BadParent {
                height: block.height,
            });
        }
        if block.genesis.is_some() {
            return Err(LedgerError::BadGenesis(format!(
                "block {} carries genesis parameters",
                block.height
            )));
        }
        let mut exec = self.exec.clone();
        let events = exec.apply_all(&block.transactions)?;
        if exec.contract.root() != block.state_root {
            return Err(LedgerError::BadStateRoot {
                height: block.height,
            });
        }
        Ok((exec, events))
    }

    /// Checks that the votes form a quorum certificate for `block` and that the
    /// proposer matches the round they were cast in. Returns the round.
    pub fn check_votes(&self, block: &Block) -> Result<u64, LedgerError> {
        let config = self.config();
        let height = block.height;
        let round = block.round().ok_or(LedgerError::InsufficientVotes {
            height,
            valid: 0,
            quorum: config.quorum(),
        })?;
        if let Some(last) = self.last_round {
            if round <= last {
                return Err(LedgerError::BadVote {
                    height,
                    voter: block.votes[0].voter,
                    reason: format!("round {round} does not advance past {last}"),
                });
            }
        }
        let expected = config.select_proposer(round);
        if block.proposer != expected {
            return Err(LedgerError::WrongProposer {
                height,
                round,
                expected,
                got: block.proposer,
            });
        }
        let hash = block.hash();
        let mut voters = BTreeSet::new();
        for v in &block.votes {
            let bad = |reason: String| LedgerError::BadVote {
                height,
                voter: v.voter,
                reason,
            };
            if v.round != round {
                return Err(bad(format!("vote round {} differs from {round}", v.round)));
            }
            // Votes are stored sorted by voter, one per voter.
            if voters.last().is_some_and(|last| *last >= v.voter) {
                return Err(bad("votes not strictly ordered by voter".into()));
            }
            v.verify(config, &hash).map_err(|e| bad(e.to_string()))?;
            voters.insert(v.voter);
        }
        let valid = voters.len() as u32;
        if valid < config.quorum() {
            return Err(LedgerError::InsufficientVotes {
                height,
                valid,
                quorum: config.quorum(),
            });
        }
        Ok(round)
    }

    pub fn validate_block(&self, block: &Block) -> Result<(), LedgerError> {
        self.check_body(block)?;
        self.check_votes(block)?;
        Ok(())
    }

    /// Validates and appends. On error the chain is unchanged.
    pub fn append(&mut self, block: Block) -> Result<&[EventRecord], LedgerError> {
        let (exec, events) = self.check_body(&block)?;
        let round = self.check_votes(&block)?;
        self.exec = exec;
        self.last_round = Some(round);
        self.blocks.push(block);
        self.events.push(events);
        Ok(self.events.last().expect("just pushed"))
    }

    /// Rebuilds a chain from raw blocks, re-verifying every link, signature,
    /// vote and state root.
    pub fn replay_blocks(blocks: impl IntoIterator<Item = Block>) -> Result<Chain, LedgerError> {
        let mut iter = blocks.into_iter();
        let genesis = iter.next().ok_or(LedgerError::ChainCorrupt {
            height: 0,
            reason: "no genesis block".into(),
        })?;
        let mut chain = Chain::from_genesis_block(genesis).map_err(|e| LedgerError::ChainCorrupt {
            height: 0,
            reason: e.to_string(),
        })?;
        // Report the position in the sequence; the block's own height field
        // may be the corrupted byte.
        for (i, block) in iter.enumerate() {
            let height = i as u64 + 1;
            chain.append(block).map_err(|e| LedgerError::ChainCorrupt {
                height,
                reason: e.to_string(),
            })?;
        }
        Ok(chain)
    }

    /// Folds every transaction from genesis and returns the resulting contract state.
    pub fn replay(&self) -> Result<ContractState, LedgerError> {
        Ok(Chain::replay_blocks(self.blocks.iter().cloned())?.exec.contract)
    }

    pub fn into_blocks(self) -> Vec<Block> {
        self.blocks
    }
}

/// Replays raw blocks and returns the final contract state.
pub fn replay(blocks: &[Block]) -> Result<ContractState, LedgerError> {
    Ok(Chain::replay_blocks(blocks.iter().cloned())?.exec.contract)
}
