//! Core of a permissioned aid-disbursement ledger.
//!
//! * [`contract`]: the disbursement contract as a pure state machine.
//! * [`ledger`]: canonical encoding, hash-linked blocks, replay and the chain file.
//! * [`consensus`]: quorum-vote authority consensus and its network simulator.
//! * [`sweep`]: batch runners that fan out over seeds, in parallel when the
//!   `parallel` feature is enabled.

pub mod codec;
pub mod consensus;
pub mod contract;
pub mod crypto;
pub mod hash;
pub mod ledger;
pub mod sweep;
pub mod types;

pub use contract::{CallContext, CallKind, ContractCall, ContractError, ContractState, EventKind, EventRecord};
pub use hash::keccak256;
pub use types::{Address, Amount, Digest};
