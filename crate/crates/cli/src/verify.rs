//! Offline audit of a chain file: every record decodes, no record is cut
//! short, and a full replay re-verifies links, signatures, votes and state
//! roots.

use std::path::Path;

use aidchain_core::ledger::store::{decode_records, read_bytes};
use aidchain_core::ledger::{Chain, LedgerError, StoreError};
use aidchain_core::Digest;
use serde::Serialize;

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct VerifyReport {
    pub height: u64,
    pub head: Digest,
    /// Root of the replayed contract state.
    pub state_digest: Digest,
    pub transactions: usize,
}

/// Where verification failed. Record `i` holds the block at height `i`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct VerifyFailure {
    pub height: u64,
    pub offset: Option<u64>,
    pub reason: String,
}

impl std::fmt::Display for VerifyFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "chain corrupt at height {}", self.height)?;
        if let Some(o) = self.offset {
            write!(f, " (byte offset {o})")?;
        }
        write!(f, ": {}", self.reason)
    }
}

pub fn verify_store(path: &Path) -> Result<Result<VerifyReport, VerifyFailure>, CliError> {
    let bytes = match read_bytes(path) {
        Ok(b) => b,
        Err(e) => return Err(CliError::Usage(e.to_string())),
    };
    Ok(verify_bytes(&bytes))
}

pub fn verify_bytes(bytes: &[u8]) -> Result<VerifyReport, VerifyFailure> {
    let raw = decode_records(bytes).map_err(|e| match e {
        StoreError::CorruptStore { record, offset, reason } => VerifyFailure {
            height: record as u64,
            offset: Some(offset),
            reason,
        },
        other => VerifyFailure {
            height: 0,
            offset: None,
            reason: other.to_string(),
        },
    })?;
    // A node discards a torn tail on startup; an auditor must not, since a
    // tampered length prefix looks the same.
    if let Some(t) = raw.truncation {
        return Err(VerifyFailure {
            height: t.complete_records as u64,
            offset: Some(t.offset),
            reason: format!("record is cut short ({} trailing bytes)", t.dropped_bytes),
        });
    }
    let transactions = raw.blocks.iter().map(|b| b.transactions.len()).sum();
    let chain = Chain::replay_blocks(raw.blocks).map_err(|e| match e {
        LedgerError::ChainCorrupt { height, reason } => VerifyFailure {
            height,
            offset: None,
            reason,
        },
        other => VerifyFailure {
            height: 0,
            offset: None,
            reason: other.to_string(),
        },
    })?;
    Ok(VerifyReport {
        height: chain.height(),
        head: chain.head_hash(),
        state_digest: chain.state().root(),
        transactions,
    })
}
