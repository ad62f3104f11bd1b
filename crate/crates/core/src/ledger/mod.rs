//! Transactions, blocks, the hash-linked chain and its on-disk store.

mod block;
mod chain;
pub mod store;

pub use block::{Block, GenesisParams, Transaction};
pub use chain::{replay, Chain, ExecState, LedgerError, TxRejection};
pub use store::{ChainStore, StoreError, Truncation};
