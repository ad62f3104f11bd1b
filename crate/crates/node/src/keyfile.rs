//! Signing keys on disk: a small JSON document readable only by its owner.

use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use aidchain_core::crypto::Keypair;
use rand::RngCore;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const SCHEME: &str = "ed25519";

#[derive(Debug, Error)]
pub enum KeyFileError {
    #[error("cannot access key file {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("key file {path} is readable by group or others (mode {mode:o}); run chmod 600")]
    Permissions { path: PathBuf, mode: u32 },
    #[error("key file {path} is malformed: {reason}")]
    Malformed { path: PathBuf, reason: String },
}

#[derive(Debug, Serialize, Deserialize)]
struct KeyDocument {
    scheme: String,
    seed: String,
    public_key: String,
    address: String,
}

pub fn generate() -> Keypair {
    let mut seed = [0u8; 32];
    rand::rngs::OsRng.fill_bytes(&mut seed);
    Keypair::from_seed(&seed)
}

/// Writes `key` to `path` with mode 0600. Refuses to overwrite unless `force`.
pub fn write(path: &Path, key: &Keypair, force: bool) -> Result<(), KeyFileError> {
    let io = |source| KeyFileError::Io {
        path: path.to_path_buf(),
        source,
    };
    let doc = KeyDocument {
        scheme: SCHEME.into(),
        seed: hex::encode(key.seed()),
        public_key: key.public().to_hex(),
        address: key.address().to_string(),
    };
    let mut opts = OpenOptions::new();
    opts.write(true);
    if force {
        opts.create(true).truncate(true);
    } else {
        opts.create_new(true);
    }
    #[cfg(unix)]
    {
        use std::os::unix::fs::OpenOptionsExt;
        opts.mode(0o600);
    }
    let mut f = opts.open(path).map_err(io)?;
    #[cfg(unix)]
    {
        use std::os::unix::fs::PermissionsExt;
        f.set_permissions(fs::Permissions::from_mode(0o600)).map_err(io)?;
    }
    let body = serde_json::to_string_pretty(&doc).expect("key document serializes");
    f.write_all(body.as_bytes()).map_err(io)?;
    f.write_all(b"\n").map_err(io)?;
    f.sync_all().map_err(io)
}

pub fn read(path: &Path) -> Result<Keypair, KeyFileError> {
    let io = |source| KeyFileError::Io {
        path: path.to_path_buf(),
        source,
    };
    #[cfg(unix)]
    {
        use std::os::unix::fs::PermissionsExt;
        let mode = fs::metadata(path).map_err(io)?.permissions().mode() & 0o777;
        if mode & 0o077 != 0 {
            return Err(KeyFileError::Permissions {
                path: path.to_path_buf(),
                mode,
            });
        }
    }
    let malformed = |reason: String| KeyFileError::Malformed {
        path: path.to_path_buf(),
        reason,
    };
    let text = fs::read_to_string(path).map_err(io)?;
    let doc: KeyDocument = serde_json::from_str(&text).map_err(|e| malformed(e.to_string()))?;
    if doc.scheme != SCHEME {
        return Err(malformed(format!("unsupported scheme {:?}", doc.scheme)));
    }
    let seed: [u8; 32] = hex::decode(&doc.seed)
        .ok()
        .and_then(|b| b.try_into().ok())
        .ok_or_else(|| malformed("seed must be 32 hex-encoded bytes".into()))?;
    let key = Keypair::from_seed(&seed);
    if key.public().to_hex() != doc.public_key.trim_start_matches("0x") {
        return Err(malformed("public key does not match seed".into()));
    }
    Ok(key)
}

/// Reads `path`, or creates it with a fresh key when missing.
pub fn read_or_create(path: &Path) -> Result<Keypair, KeyFileError> {
    if path.exists() {
        return read(path);
    }
    let key = generate();
    write(path, &key, false)?;
    Ok(key)
}
