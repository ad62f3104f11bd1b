//! Append-only chain file: a sequence of `u32 big-endian length || canonical block` records.

use std::fs::{File, OpenOptions};
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::codec::{Decode, Encode};

use super::block::Block;
use super::chain::{Chain, LedgerError};

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("cannot access {path}: {source}")]
    UnreadableLocation {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("corrupt store at record {record} (byte offset {offset}): {reason}")]
    CorruptStore {
        record: usize,
        offset: u64,
        reason: String,
    },
    #[error(transparent)]
    Ledger(#[from] LedgerError),
    #[error("store already exists at {0}")]
    AlreadyExists(PathBuf),
}

/// A record at the end of the file that was cut short by a crash.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Truncation {
    /// Number of complete records that precede the torn one.
    pub complete_records: usize,
    /// Offset where the torn record starts; the file is valid up to here.
    pub offset: u64,
    pub dropped_bytes: u64,
}

/// Raw decoded records, before chain validation.
#[derive(Debug)]
pub struct RawStore {
    pub blocks: Vec<Block>,
    pub truncation: Option<Truncation>,
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> StoreError + '_ {
    move |source| StoreError::UnreadableLocation {
        path: path.to_path_buf(),
        source,
    }
}

/// Decodes the records in `bytes`. A trailing partial record is reported, not an error.
pub fn decode_records(bytes: &[u8]) -> Result<RawStore, StoreError> {
    if bytes.is_empty() {
        return Err(StoreError::CorruptStore {
            record: 0,
            offset: 0,
            reason: "empty store: a genesis record is required".into(),
        });
    }
    let mut blocks = Vec::new();
    let mut pos = 0usize;
    while pos < bytes.len() {
        let record = blocks.len();
        let rest = &bytes[pos..];
        let torn = || Truncation {
            complete_records: record,
            offset: pos as u64,
            dropped_bytes: rest.len() as u64,
        };
        if rest.len() < 4 {
            return Ok(RawStore {
                blocks,
                truncation: Some(torn()),
            });
        }
        let len = u32::from_be_bytes(rest[..4].try_into().expect("4 bytes")) as usize;
        if rest.len() - 4 < len {
            return Ok(RawStore {
                blocks,
                truncation: Some(torn()),
            });
        }
        let block = Block::decode(&rest[4..4 + len]).map_err(|e| StoreError::CorruptStore {
            record,
            offset: pos as u64,
            reason: e.to_string(),
        })?;
        blocks.push(block);
        pos += 4 + len;
    }
    Ok(RawStore {
        blocks,
        truncation: None,
    })
}

pub fn encode_record(block: &Block) -> Vec<u8> {
    let body = block.encode();
    let mut out = Vec::with_capacity(body.len() + 4);
    out.extend_from_slice(&(body.len() as u32).to_be_bytes());
    out.extend_from_slice(&body);
    out
}

/// Reads and fully validates a store without modifying it.
pub fn load(path: &Path) -> Result<(Chain, Option<Truncation>), StoreError> {
    let bytes = std::fs::read(path).map_err(io_err(path))?;
    let raw = decode_records(&bytes)?;
    if raw.blocks.is_empty() {
        return Err(StoreError::CorruptStore {
            record: 0,
            offset: 0,
            reason: "no complete genesis record".into(),
        });
    }
    let chain = Chain::replay_blocks(raw.blocks)?;
    Ok((chain, raw.truncation))
}

/// Writes a whole chain to a fresh file.
pub fn persist(chain: &Chain, path: &Path) -> Result<(), StoreError> {
    let mut f = File::create(path).map_err(io_err(path))?;
    for b in chain.blocks() {
        f.write_all(&encode_record(b)).map_err(io_err(path))?;
    }
    f.sync_all().map_err(io_err(path))
}

/// A chain bound to its backing file. Single writer; appends are durable on return.
#[derive(Debug)]
pub struct ChainStore {
    path: PathBuf,
    file: File,
    chain: Chain,
}

impl ChainStore {
    /// Creates a new store holding only the genesis block of `chain`.
    pub fn create(path: &Path, chain: Chain) -> Result<Self, StoreError> {
        if path.exists() {
            return Err(StoreError::AlreadyExists(path.to_path_buf()));
        }
        persist(&chain, path)?;
        let file = OpenOptions::new()
            .append(true)
            .open(path)
            .map_err(io_err(path))?;
        Ok(ChainStore {
            path: path.to_path_buf(),
            file,
            chain,
        })
    }

    /// Opens an existing store. A torn final record is cut off the file and
    /// logged; any other damage is an error.
    pub fn open(path: &Path) -> Result<(Self, Option<Truncation>), StoreError> {
        let (chain, truncation) = load(path)?;
        if let Some(t) = &truncation {
            tracing::warn!(
                path = %path.display(),
                offset = t.offset,
                dropped = t.dropped_bytes,
                "torn record at end of chain store; truncating"
            );
            let f = OpenOptions::new().write(true).open(path).map_err(io_err(path))?;
            f.set_len(t.offset).map_err(io_err(path))?;
            f.sync_all().map_err(io_err(path))?;
        }
        let file = OpenOptions::new()
            .append(true)
            .open(path)
            .map_err(io_err(path))?;
        Ok((
            ChainStore {
                path: path.to_path_buf(),
                file,
                chain,
            },
            truncation,
        ))
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn chain(&self) -> &Chain {
        &self.chain
    }

    /// Validates, writes and syncs `block`, then extends the in-memory chain.
    pub fn append(&mut self, block: Block) -> Result<(), StoreError> {
        self.chain.validate_block(&block)?;
        let record = encode_record(&block);
        let path = self.path.clone();
        self.file.write_all(&record).map_err(io_err(&path))?;
        self.file.sync_data().map_err(io_err(&path))?;
        self.chain
            .append(block)
            .expect("block validated before write");
        Ok(())
    }
}

/// Reads raw bytes of a store file; used by tooling that inspects damage.
pub fn read_bytes(path: &Path) -> Result<Vec<u8>, StoreError> {
    let mut f = File::open(path).map_err(io_err(path))?;
    let mut out = Vec::new();
    f.read_to_end(&mut out).map_err(io_err(path))?;
    Ok(out)
}
