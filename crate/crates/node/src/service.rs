//! The node itself: intake, block production and committed-state queries.
//! Transport-independent; the HTTP layer in [`crate::api`] is a thin shell.
//!
//! Locking: `intake` (mempool + registry) is held only for short checks.
//! `producer` (store + consensus engine) is held while a block is built and
//! persisted. Reads take an `Arc` of the latest committed snapshot and never
//! wait on either.

use std::collections::HashMap;
use std::path::Path;
use std::sync::{Arc, Mutex, RwLock};

use aidchain_core::consensus::{
    select_batch, AuthorityConfig, FaultSchedule, Network, RoundOutcome, Vote,
};
use aidchain_core::crypto::{Keypair, PublicKey};
use aidchain_core::ledger::{Block, Chain, ChainStore, GenesisParams, StoreError, Transaction, TxRejection};
use aidchain_core::{Address, Amount, CallKind, ContractError, Digest, EventKind, EventRecord};
use serde::Serialize;
use thiserror::Error;
use tracing::{info, warn};

use crate::auth::verify_request;
use crate::config::NodeConfig;
use crate::keyfile::{self, KeyFileError};
use crate::mempool::{Mempool, SubmitError};
use crate::registry::{ActorRecord, Registry, RegistryError, Role};
use crate::views::{BlockView, EventView, TxView};

#[derive(Debug, Error)]
pub enum NodeError {
    #[error("{0}")]
    BadRequest(String),
    #[error("{0}")]
    BadFilter(String),
    #[error("{0}")]
    Unauthorized(String),
    #[error("{0}")]
    Forbidden(String),
    #[error("{0}")]
    NotFound(String),
    #[error("transaction signature invalid: {0}")]
    BadSignature(String),
    #[error("bad nonce: expected {expected}, got {got}")]
    BadNonce { expected: u64, got: u64 },
    #[error("request nonce {got} is not above the last accepted nonce {last}")]
    StaleRequestNonce { last: u64, got: u64 },
    #[error("contract rejected the call: {0}")]
    Contract(ContractError),
    #[error("mempool is full ({0} transactions)")]
    MempoolFull(usize),
    #[error("transaction {0} is already pending")]
    DuplicateTransaction(Digest),
    #[error("public key is already registered to {0}")]
    DuplicateKey(Address),
    #[error("an organization is already registered")]
    SecondOrganization,
    #[error("{0} has no registered bank account")]
    NoRegisteredAccount(Address),
    #[error("{0} has received no allowances")]
    NoAllowances(Address),
    #[error("{0}")]
    Startup(String),
    #[error("{0}")]
    Internal(String),
}

impl NodeError {
    pub fn code(&self) -> &'static str {
        match self {
            NodeError::BadRequest(_) => "BadRequest",
            NodeError::BadFilter(_) => "BadFilter",
            NodeError::Unauthorized(_) => "Unauthorized",
            NodeError::Forbidden(_) => "Forbidden",
            NodeError::NotFound(_) => "NotFound",
            NodeError::BadSignature(_) => "BadSignature",
            NodeError::BadNonce { .. } => "BadNonce",
            NodeError::StaleRequestNonce { .. } => "StaleRequestNonce",
            NodeError::Contract(_) => "ContractError",
            NodeError::MempoolFull(_) => "MempoolFull",
            NodeError::DuplicateTransaction(_) => "DuplicateTransaction",
            NodeError::DuplicateKey(_) => "DuplicateKey",
            NodeError::SecondOrganization => "SecondOrganization",
            NodeError::NoRegisteredAccount(_) => "NoRegisteredAccount",
            NodeError::NoAllowances(_) => "NoAllowances",
            NodeError::Startup(_) => "Startup",
            NodeError::Internal(_) => "Internal",
        }
    }
}

impl From<RegistryError> for NodeError {
    fn from(e: RegistryError) -> Self {
        match e {
            RegistryError::DuplicateKey(a) => NodeError::DuplicateKey(a),
            RegistryError::SecondOrganization => NodeError::SecondOrganization,
            RegistryError::StaleNonce { last, got } => NodeError::StaleRequestNonce { last, got },
            RegistryError::Io(m) => NodeError::Internal(m),
        }
    }
}

impl From<SubmitError> for NodeError {
    fn from(e: SubmitError) -> Self {
        match e {
            SubmitError::Rejected(TxRejection::BadSignature(s)) => NodeError::BadSignature(s.to_string()),
            SubmitError::Rejected(TxRejection::BadNonce { expected, got }) => NodeError::BadNonce { expected, got },
            SubmitError::Rejected(TxRejection::Contract(c)) => NodeError::Contract(c),
            SubmitError::Full(n) => NodeError::MempoolFull(n),
            SubmitError::Duplicate(h) => NodeError::DuplicateTransaction(h),
        }
    }
}

impl From<KeyFileError> for NodeError {
    fn from(e: KeyFileError) -> Self {
        NodeError::Startup(e.to_string())
    }
}

impl From<StoreError> for NodeError {
    fn from(e: StoreError) -> Self {
        NodeError::Startup(e.to_string())
    }
}

/// Committed chain plus lookup indexes, replaced wholesale after each block.
#[derive(Debug, Clone)]
pub struct Snapshot {
    pub chain: Chain,
    tx_index: HashMap<Digest, (u64, usize)>,
}

impl Snapshot {
    fn new(chain: Chain) -> Self {
        let mut tx_index = HashMap::new();
        for b in chain.blocks() {
            for (i, tx) in b.transactions.iter().enumerate() {
                tx_index.insert(tx.hash(), (b.height, i));
            }
        }
        Snapshot { chain, tx_index }
    }

    fn extended(&self, chain: Chain) -> Self {
        let mut tx_index = self.tx_index.clone();
        for b in &chain.blocks()[self.chain.blocks().len()..] {
            for (i, tx) in b.transactions.iter().enumerate() {
                tx_index.insert(tx.hash(), (b.height, i));
            }
        }
        Snapshot { chain, tx_index }
    }
}

#[derive(Debug, Clone, Default)]
pub struct EventFilter {
    pub kind: Option<EventKind>,
    /// Matches either the acting or the affected address.
    pub address: Option<Address>,
    pub from: Option<u64>,
    pub to: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum TxStatus {
    Pending {
        transaction: TxView,
    },
    Committed {
        height: u64,
        index: usize,
        transaction: TxView,
    },
    Dropped {
        reason: String,
        transaction: TxView,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Settlement {
    pub recipient: Address,
    pub account_digest: Digest,
    pub total: Amount,
    pub tx_hashes: Vec<Digest>,
    /// Chain height the record was computed at.
    pub height: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Health {
    pub status: &'static str,
    pub height: u64,
    pub head: Digest,
    pub pending: usize,
    pub authorities: usize,
    pub quorum: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Balance {
    pub address: Address,
    pub balance: Amount,
    pub height: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Nonces {
    pub address: Address,
    /// Nonce the next transaction from this address must carry.
    pub next_tx_nonce: u64,
    /// Last accepted signed-request nonce; the next request must exceed it.
    pub last_request_nonce: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ActorView {
    #[serde(flatten)]
    pub record: ActorRecord,
    /// On-chain recipient authorization.
    pub authorized: bool,
    pub bank_account_registered: bool,
}

enum Engine {
    /// One authority signs its own blocks directly.
    Single { key: Keypair },
    /// The quorum protocol among in-process authorities.
    Local { network: Box<Network> },
}

struct Producer {
    store: ChainStore,
    engine: Engine,
    max_batch: usize,
}

struct Intake {
    mempool: Mempool,
    registry: Registry,
    dropped: HashMap<Digest, (Transaction, String)>,
}

pub struct Node {
    snapshot: RwLock<Arc<Snapshot>>,
    intake: Mutex<Intake>,
    producer: Mutex<Producer>,
}

fn lock<T>(m: &Mutex<T>) -> std::sync::MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|p| p.into_inner())
}

impl Node {
    /// Opens (or initializes) the data directory described by `config`.
    pub fn open(config: &NodeConfig) -> Result<Node, NodeError> {
        if config.authorities == 0 {
            return Err(NodeError::Startup("authorities must be at least 1".into()));
        }
        let org_key = PublicKey::from_hex(config.organization_public_key.trim_start_matches("0x"))
            .map_err(|e| NodeError::Startup(format!("organization_public_key: {e}")))?;
        std::fs::create_dir_all(&config.data_dir)
            .map_err(|e| NodeError::Startup(format!("{}: {e}", config.data_dir.display())))?;

        let keys = (0..config.authorities)
            .map(|i| keyfile::read_or_create(&config.data_dir.join(format!("authority-{i}.json"))))
            .collect::<Result<Vec<_>, _>>()?;
        let authorities = AuthorityConfig::from_keys(&keys, config.round_duration)
            .map_err(|e| NodeError::Startup(e.to_string()))?;
        let genesis = GenesisParams {
            organization: org_key.address(),
            authorities,
        };

        let store = open_store(&config.data_dir.join("chain.dat"), genesis)?;
        let registry = Registry::open(
            &config.data_dir.join("registry.json"),
            ActorRecord::new(&org_key, Role::Organization, &config.organization_name),
        )?;
        let engine = if keys.len() == 1 {
            Engine::Single {
                key: keys.into_iter().next().expect("one key"),
            }
        } else {
            let network = Network::new(store.chain().clone(), keys, FaultSchedule::none(), config.network_seed)
                .map_err(|e| NodeError::Startup(e.to_string()))?
                .quiet()
                .with_max_batch(config.max_batch);
            Engine::Local {
                network: Box::new(network),
            }
        };
        info!(
            height = store.chain().height(),
            authorities = config.authorities,
            "node ready"
        );
        Ok(Node {
            snapshot: RwLock::new(Arc::new(Snapshot::new(store.chain().clone()))),
            intake: Mutex::new(Intake {
                mempool: Mempool::new(store.chain().exec_state().clone(), config.mempool_capacity),
                registry,
                dropped: HashMap::new(),
            }),
            producer: Mutex::new(Producer {
                store,
                engine,
                max_batch: config.max_batch,
            }),
        })
    }

    pub fn snapshot(&self) -> Arc<Snapshot> {
        self.snapshot.read().unwrap_or_else(|p| p.into_inner()).clone()
    }

    /// Checks a signed request and consumes its nonce. Returns the caller's record.
    pub fn authenticate(
        &self,
        method: &str,
        path: &str,
        sender: &Address,
        nonce: u64,
        body: &[u8],
        signature: &[u8],
    ) -> Result<ActorRecord, NodeError> {
        let mut intake = lock(&self.intake);
        let actor = intake
            .registry
            .get(sender)
            .cloned()
            .ok_or_else(|| NodeError::Unauthorized(format!("{sender} is not a registered actor")))?;
        verify_request(method, path, sender, nonce, body, signature)
            .map_err(|e| NodeError::Unauthorized(format!("request signature: {e}")))?;
        intake.registry.accept_request_nonce(*sender, nonce)?;
        Ok(actor)
    }

    pub fn register_actor(
        &self,
        caller: &ActorRecord,
        public_key: &str,
        role: Role,
        display_name: &str,
    ) -> Result<ActorRecord, NodeError> {
        if caller.role != Role::Organization {
            return Err(NodeError::Unauthorized("only the organization registers actors".into()));
        }
        let key = PublicKey::from_hex(public_key.trim_start_matches("0x"))
            .map_err(|e| NodeError::BadRequest(format!("public_key: {e}")))?;
        let record = ActorRecord::new(&key, role, display_name);
        Ok(lock(&self.intake).registry.register(record)?)
    }

    pub fn actor(&self, address: &Address) -> Option<ActorView> {
        let record = lock(&self.intake).registry.get(address).cloned()?;
        Some(self.actor_view(record))
    }

    pub fn actors(&self) -> Vec<ActorView> {
        let records: Vec<_> = lock(&self.intake).registry.actors().cloned().collect();
        records.into_iter().map(|r| self.actor_view(r)).collect()
    }

    fn actor_view(&self, record: ActorRecord) -> ActorView {
        let snap = self.snapshot();
        let state = snap.chain.state();
        ActorView {
            authorized: state.is_recipient(&record.address),
            bank_account_registered: state.bank_account(&record.address).is_some(),
            record,
        }
    }

    pub fn submit_transaction(&self, caller: &ActorRecord, tx: Transaction) -> Result<Digest, NodeError> {
        if tx.sender != caller.address {
            return Err(NodeError::Unauthorized(
                "transaction sender differs from the request signer".into(),
            ));
        }
        if tx.call.kind == CallKind::GetBalance {
            return Err(NodeError::BadRequest(
                "GetBalance is a read; use GET /v1/balances/{address}".into(),
            ));
        }
        let hash = lock(&self.intake).mempool.submit(tx)?;
        Ok(hash)
    }

    pub fn nonces(&self, address: &Address) -> Nonces {
        let intake = lock(&self.intake);
        Nonces {
            address: *address,
            next_tx_nonce: intake.mempool.next_nonce(address),
            last_request_nonce: intake.registry.last_request_nonce(address),
        }
    }

    pub fn query_balance(&self, caller: &ActorRecord, subject: &Address) -> Result<Balance, NodeError> {
        if caller.address != *subject && caller.role != Role::Organization {
            return Err(NodeError::Forbidden("only the organization may read other balances".into()));
        }
        let snap = self.snapshot();
        Ok(Balance {
            address: *subject,
            balance: snap.chain.state().balance_of(subject),
            height: snap.chain.height(),
        })
    }

    pub fn query_events(&self, filter: &EventFilter) -> Result<Vec<EventView>, NodeError> {
        if let (Some(from), Some(to)) = (filter.from, filter.to) {
            if from > to {
                return Err(NodeError::BadFilter(format!("from {from} is above to {to}")));
            }
        }
        let snap = self.snapshot();
        let chain = &snap.chain;
        let from = filter.from.unwrap_or(0);
        let to = filter.to.unwrap_or(u64::MAX).min(chain.height());
        let mut out = Vec::new();
        for height in from..=to {
            if height > chain.height() {
                break;
            }
            for ev in chain.events_at(height) {
                if filter.kind.is_some_and(|k| k != ev.kind) {
                    continue;
                }
                if filter.address.is_some_and(|a| a != ev.actor && a != ev.subject) {
                    continue;
                }
                out.push(EventView::new(height, ev));
            }
        }
        Ok(out)
    }

    pub fn block(&self, height: u64) -> Result<BlockView, NodeError> {
        self.snapshot()
            .chain
            .block(height)
            .map(BlockView::from)
            .ok_or_else(|| NodeError::NotFound(format!("no block at height {height}")))
    }

    pub fn transaction(&self, hash: &Digest) -> Result<TxStatus, NodeError> {
        let snap = self.snapshot();
        if let Some(&(height, index)) = snap.tx_index.get(hash) {
            let tx = &snap.chain.block(height).expect("indexed block").transactions[index];
            return Ok(TxStatus::Committed {
                height,
                index,
                transaction: TxView::from(tx),
            });
        }
        let intake = lock(&self.intake);
        if let Some(tx) = intake.mempool.get(hash) {
            return Ok(TxStatus::Pending {
                transaction: TxView::from(tx),
            });
        }
        if let Some((tx, reason)) = intake.dropped.get(hash) {
            return Ok(TxStatus::Dropped {
                reason: reason.clone(),
                transaction: TxView::from(tx),
            });
        }
        Err(NodeError::NotFound(format!("unknown transaction {hash}")))
    }

    pub fn export_settlement(&self, caller: &ActorRecord, recipient: &Address) -> Result<Settlement, NodeError> {
        if caller.role != Role::Organization {
            return Err(NodeError::Unauthorized("only the organization exports settlements".into()));
        }
        let snap = self.snapshot();
        let chain = &snap.chain;
        let account_digest = chain
            .state()
            .bank_account(recipient)
            .ok_or(NodeError::NoRegisteredAccount(*recipient))?;
        let allowances: Vec<&EventRecord> = (0..=chain.height())
            .flat_map(|h| chain.events_at(h))
            .filter(|e| e.kind == EventKind::AllowanceSent && e.subject == *recipient)
            .collect();
        if allowances.is_empty() {
            return Err(NodeError::NoAllowances(*recipient));
        }
        let total: u128 = allowances.iter().map(|e| e.amount.0 as u128).sum();
        let total = u64::try_from(total).map_err(|_| NodeError::Internal("allowance total overflows".into()))?;
        Ok(Settlement {
            recipient: *recipient,
            account_digest,
            total: Amount(total),
            tx_hashes: allowances.iter().map(|e| e.tx_hash).collect(),
            height: chain.height(),
        })
    }

    pub fn health(&self) -> Health {
        let snap = self.snapshot();
        let pending = lock(&self.intake).mempool.len();
        Health {
            status: "ok",
            height: snap.chain.height(),
            head: snap.chain.head_hash(),
            pending,
            authorities: snap.chain.config().len(),
            quorum: snap.chain.config().quorum(),
        }
    }

    /// Runs one block-production step over the current mempool. Returns the
    /// committed block, or `None` when there was nothing to do or the round
    /// did not reach a quorum.
    pub fn produce_block(&self) -> Result<Option<Block>, NodeError> {
        let mut producer = lock(&self.producer);
        let pending = lock(&self.intake).mempool.pending();
        if pending.is_empty() {
            return Ok(None);
        }
        let Producer {
            store,
            engine,
            max_batch,
        } = &mut *producer;
        let block = match engine {
            Engine::Single { key } => {
                let chain = store.chain();
                let batch = select_batch(chain.exec_state(), &pending, *max_batch);
                if batch.is_empty() {
                    return Ok(None);
                }
                let authority = chain.config().authorities()[0].id;
                let mut block = chain
                    .build_block(batch, authority)
                    .map_err(|e| NodeError::Internal(e.to_string()))?;
                let round = chain.last_round().map_or(0, |r| r + 1);
                block.votes = vec![Vote::sign(key, authority, &block.hash(), round)];
                block
            }
            Engine::Local { network } => match network.run_round(&pending).outcome {
                RoundOutcome::Committed(block) => block,
                RoundOutcome::Skipped(reason) => {
                    warn!(%reason, "round skipped");
                    return Ok(None);
                }
            },
        };
        store
            .append(block.clone())
            .map_err(|e| NodeError::Internal(format!("persisting block {}: {e}", block.height)))?;

        let next = Arc::new(self.snapshot().extended(store.chain().clone()));
        *self.snapshot.write().unwrap_or_else(|p| p.into_inner()) = next;

        let mut intake = lock(&self.intake);
        for (tx, reason) in intake.mempool.rebase(store.chain().exec_state().clone()) {
            warn!(tx = %tx.hash(), %reason, "dropped pending transaction");
            intake.dropped.insert(tx.hash(), (tx, reason.to_string()));
        }
        info!(height = block.height, txs = block.transactions.len(), "committed block");
        Ok(Some(block))
    }

    /// Produces blocks until the mempool is empty or a round makes no progress.
    pub fn drain(&self) -> Result<u64, NodeError> {
        let mut blocks = 0;
        while self.produce_block()?.is_some() {
            blocks += 1;
        }
        Ok(blocks)
    }
}

fn open_store(path: &Path, genesis: GenesisParams) -> Result<ChainStore, NodeError> {
    if !path.exists() {
        return Ok(ChainStore::create(path, Chain::new(genesis).map_err(|e| NodeError::Startup(e.to_string()))?)?);
    }
    let (store, truncation) = ChainStore::open(path)?;
    if let Some(t) = truncation {
        warn!(
            offset = t.offset,
            dropped_bytes = t.dropped_bytes,
            "discarded a torn final record"
        );
    }
    if *store.chain().genesis() != genesis {
        return Err(NodeError::Startup(format!(
            "{} was created with a different organization or authority set",
            path.display()
        )));
    }
    Ok(store)
}
