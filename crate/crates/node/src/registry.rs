//! Off-chain actor identities and the per-sender request nonces used by
//! signed API calls. Persisted as one JSON file, replaced atomically.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use aidchain_core::crypto::PublicKey;
use aidchain_core::Address;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::keyfile::SCHEME;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Role {
    Organization,
    Recipient,
    Observer,
}

impl std::str::FromStr for Role {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "organization" => Ok(Role::Organization),
            "recipient" => Ok(Role::Recipient),
            "observer" => Ok(Role::Observer),
            _ => Err(format!("unknown role {s:?}; expected organization, recipient or observer")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActorRecord {
    pub address: Address,
    pub public_key: String,
    pub scheme: String,
    pub role: Role,
    pub display_name: String,
}

impl ActorRecord {
    pub fn new(public_key: &PublicKey, role: Role, display_name: impl Into<String>) -> Self {
        ActorRecord {
            address: public_key.address(),
            public_key: public_key.to_hex(),
            scheme: SCHEME.into(),
            role,
            display_name: display_name.into(),
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RegistryError {
    #[error("public key is already registered to {0}")]
    DuplicateKey(Address),
    #[error("an organization is already registered")]
    SecondOrganization,
    #[error("request nonce {got} is not above the last accepted nonce {last}")]
    StaleNonce { last: u64, got: u64 },
    #[error("cannot persist registry: {0}")]
    Io(String),
}

#[derive(Debug, Default, Serialize, Deserialize)]
struct Persisted {
    actors: Vec<ActorRecord>,
    request_nonces: BTreeMap<Address, u64>,
}

#[derive(Debug)]
pub struct Registry {
    path: Option<PathBuf>,
    actors: BTreeMap<Address, ActorRecord>,
    request_nonces: BTreeMap<Address, u64>,
}

impl Registry {
    /// In-memory registry holding only the organization.
    pub fn new(organization: ActorRecord) -> Self {
        let mut actors = BTreeMap::new();
        actors.insert(organization.address, organization);
        Registry {
            path: None,
            actors,
            request_nonces: BTreeMap::new(),
        }
    }

    /// Loads the registry at `path`, or creates it with the organization record.
    /// An existing file must name the same organization.
    pub fn open(path: &Path, organization: ActorRecord) -> Result<Self, RegistryError> {
        let mut reg = if path.exists() {
            let text = fs::read_to_string(path).map_err(|e| RegistryError::Io(e.to_string()))?;
            let p: Persisted = serde_json::from_str(&text).map_err(|e| RegistryError::Io(e.to_string()))?;
            let reg = Registry {
                path: Some(path.to_path_buf()),
                actors: p.actors.into_iter().map(|a| (a.address, a)).collect(),
                request_nonces: p.request_nonces,
            };
            if reg.organization().map(|o| o.address) != Some(organization.address) {
                return Err(RegistryError::Io(format!(
                    "{} belongs to a different organization",
                    path.display()
                )));
            }
            reg
        } else {
            Registry {
                path: Some(path.to_path_buf()),
                ..Registry::new(organization)
            }
        };
        reg.save()?;
        Ok(reg)
    }

    fn save(&mut self) -> Result<(), RegistryError> {
        let Some(path) = &self.path else {
            return Ok(());
        };
        let doc = Persisted {
            actors: self.actors.values().cloned().collect(),
            request_nonces: self.request_nonces.clone(),
        };
        let tmp = path.with_extension("tmp");
        let body = serde_json::to_vec_pretty(&doc).expect("registry serializes");
        fs::write(&tmp, body)
            .and_then(|_| fs::rename(&tmp, path))
            .map_err(|e| RegistryError::Io(e.to_string()))
    }

    pub fn organization(&self) -> Option<&ActorRecord> {
        self.actors.values().find(|a| a.role == Role::Organization)
    }

    pub fn get(&self, address: &Address) -> Option<&ActorRecord> {
        self.actors.get(address)
    }

    pub fn actors(&self) -> impl Iterator<Item = &ActorRecord> {
        self.actors.values()
    }

    pub fn register(&mut self, record: ActorRecord) -> Result<ActorRecord, RegistryError> {
        if self.actors.contains_key(&record.address) {
            return Err(RegistryError::DuplicateKey(record.address));
        }
        if record.role == Role::Organization {
            return Err(RegistryError::SecondOrganization);
        }
        self.actors.insert(record.address, record.clone());
        self.save()?;
        Ok(record)
    }

    pub fn last_request_nonce(&self, sender: &Address) -> Option<u64> {
        self.request_nonces.get(sender).copied()
    }

    /// Accepts `nonce` only if it is strictly above the last one seen from `sender`.
    pub fn accept_request_nonce(&mut self, sender: Address, nonce: u64) -> Result<(), RegistryError> {
        if let Some(last) = self.last_request_nonce(&sender) {
            if nonce <= last {
                return Err(RegistryError::StaleNonce { last, got: nonce });
            }
        }
        self.request_nonces.insert(sender, nonce);
        self.save()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use aidchain_core::crypto::Keypair;

    fn record(label: &str, role: Role) -> ActorRecord {
        ActorRecord::new(&Keypair::from_label(label).public(), role, label)
    }

    #[test]
    fn uniqueness_rules() {
        let mut reg = Registry::new(record("org", Role::Organization));
        reg.register(record("r1", Role::Recipient)).unwrap();
        assert!(matches!(
            reg.register(record("r1", Role::Observer)),
            Err(RegistryError::DuplicateKey(_))
        ));
        assert_eq!(
            reg.register(record("org2", Role::Organization)),
            Err(RegistryError::SecondOrganization)
        );
        assert_eq!(reg.actors().count(), 2);
    }

    #[test]
    fn request_nonces_strictly_increase() {
        let mut reg = Registry::new(record("org", Role::Organization));
        let a = Address([1; 20]);
        reg.accept_request_nonce(a, 10).unwrap();
        assert!(reg.accept_request_nonce(a, 10).is_err());
        assert!(reg.accept_request_nonce(a, 3).is_err());
        reg.accept_request_nonce(a, 11).unwrap();
        reg.accept_request_nonce(Address([2; 20]), 0).unwrap();
    }

    #[test]
    fn persists_across_reopen() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("registry.json");
        let org = record("org", Role::Organization);
        {
            let mut reg = Registry::open(&path, org.clone()).unwrap();
            reg.register(record("r1", Role::Recipient)).unwrap();
            reg.accept_request_nonce(org.address, 42).unwrap();
        }
        let reg = Registry::open(&path, org.clone()).unwrap();
        assert_eq!(reg.actors().count(), 2);
        assert_eq!(reg.last_request_nonce(&org.address), Some(42));
        assert!(Registry::open(&path, record("org-b", Role::Organization)).is_err());
    }
}
