use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::{Decode, DecodeError, Encode, Reader, Writer};
use crate::crypto::{Keypair, PublicKey, SignatureError, SIGNATURE_LEN};
use crate::types::Digest;

/// Default simulated ticks per round.
pub const DEFAULT_ROUND_DURATION: u64 = 12;

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug, Serialize, Deserialize)]
pub struct AuthorityId(pub u32);

impl fmt::Display for AuthorityId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Authority {
    pub id: AuthorityId,
    pub public_key: PublicKey,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConfigError {
    #[error("authority set is empty")]
    Empty,
    #[error("duplicate authority id {0}")]
    DuplicateId(AuthorityId),
    #[error("duplicate authority key for id {0}")]
    DuplicateKey(AuthorityId),
    #[error("quorum {got} does not match floor(2n/3)+1 = {expected}")]
    Quorum { expected: u32, got: u32 },
    #[error("round duration must be at least 4 ticks, got {0}")]
    RoundDuration(u64),
}

/// Fixed consortium membership. List order is the proposer rotation order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AuthorityConfig {
    authorities: Vec<Authority>,
    quorum: u32,
    round_duration: u64,
}

/// Votes needed to commit with `n` authorities; tolerates f faults when n = 3f + 1.
pub fn quorum_for(n: usize) -> u32 {
    (2 * n as u32) / 3 + 1
}

impl AuthorityConfig {
    pub fn new(authorities: Vec<Authority>, round_duration: u64) -> Result<Self, ConfigError> {
        let quorum = quorum_for(authorities.len());
        Self::with_quorum(authorities, quorum, round_duration)
    }

    /// Builds a config with an explicit quorum, which must still equal the rule.
    pub fn with_quorum(authorities: Vec<Authority>, quorum: u32, round_duration: u64) -> Result<Self, ConfigError> {
        let cfg = AuthorityConfig {
            authorities,
            quorum,
            round_duration,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Config whose authority `i` has id `i` and the given keys.
    pub fn from_keys(keys: &[Keypair], round_duration: u64) -> Result<Self, ConfigError> {
        let authorities = keys
            .iter()
            .enumerate()
            .map(|(i, k)| Authority {
                id: AuthorityId(i as u32),
                public_key: k.public(),
            })
            .collect();
        Self::new(authorities, round_duration)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.authorities.is_empty() {
            return Err(ConfigError::Empty);
        }
        let mut ids = HashSet::new();
        let mut keys = HashSet::new();
        for a in &self.authorities {
            if !ids.insert(a.id) {
                return Err(ConfigError::DuplicateId(a.id));
            }
            if !keys.insert(a.public_key) {
                return Err(ConfigError::DuplicateKey(a.id));
            }
        }
        let expected = quorum_for(self.authorities.len());
        if self.quorum != expected {
            return Err(ConfigError::Quorum {
                expected,
                got: self.quorum,
            });
        }
        if self.round_duration < 4 {
            return Err(ConfigError::RoundDuration(self.round_duration));
        }
        Ok(())
    }

    pub fn authorities(&self) -> &[Authority] {
        &self.authorities
    }

    pub fn len(&self) -> usize {
        self.authorities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.authorities.is_empty()
    }

    pub fn quorum(&self) -> u32 {
        self.quorum
    }

    pub fn round_duration(&self) -> u64 {
        self.round_duration
    }

    pub fn position(&self, id: AuthorityId) -> Option<usize> {
        self.authorities.iter().position(|a| a.id == id)
    }

    pub fn key_of(&self, id: AuthorityId) -> Option<&PublicKey> {
        self.authorities
            .iter()
            .find(|a| a.id == id)
            .map(|a| &a.public_key)
    }

    /// Round-robin proposer: `authorities[round mod n]`.
    pub fn select_proposer(&self, round: u64) -> AuthorityId {
        let n = self.authorities.len() as u64;
        self.authorities[(round % n) as usize].id
    }
}

impl Encode for AuthorityConfig {
    fn encode_to(&self, w: &mut Writer) {
        w.count(self.authorities.len());
        for a in &self.authorities {
            w.u32(a.id.0).bytes(&a.public_key.0);
        }
        w.u32(self.quorum).u64(self.round_duration);
    }
}

impl Decode for AuthorityConfig {
    fn decode_from(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        let n = r.count(8)?;
        let mut authorities = Vec::with_capacity(n);
        for _ in 0..n {
            let id = AuthorityId(r.u32()?);
            let offset = r.position();
            let key: [u8; 32] = r.bytes()?.try_into().map_err(|_| DecodeError::Invalid {
                what: "authority public key",
                offset,
            })?;
            authorities.push(Authority {
                id,
                public_key: PublicKey(key),
            });
        }
        Ok(AuthorityConfig {
            authorities,
            quorum: r.u32()?,
            round_duration: r.u64()?,
        })
    }
}

/// An authority's signature over `(block_hash, round)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Vote {
    pub voter: AuthorityId,
    pub round: u64,
    pub signature: [u8; SIGNATURE_LEN],
}

/// Bytes an authority signs when voting.
pub fn vote_message(block_hash: &Digest, round: u64) -> [u8; 40] {
    let mut m = [0u8; 40];
    m[..32].copy_from_slice(&block_hash.0);
    m[32..].copy_from_slice(&round.to_be_bytes());
    m
}

impl Vote {
    pub fn sign(key: &Keypair, voter: AuthorityId, block_hash: &Digest, round: u64) -> Self {
        Vote {
            voter,
            round,
            signature: key.sign_raw(&vote_message(block_hash, round)),
        }
    }

    pub fn verify(&self, config: &AuthorityConfig, block_hash: &Digest) -> Result<(), SignatureError> {
        let key = config.key_of(self.voter).ok_or(SignatureError::SignerMismatch)?;
        key.verify(&vote_message(block_hash, self.round), &self.signature)
    }
}

impl Encode for Vote {
    fn encode_to(&self, w: &mut Writer) {
        w.u32(self.voter.0).u64(self.round).bytes(&self.signature);
    }
}

impl Decode for Vote {
    fn decode_from(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        let voter = AuthorityId(r.u32()?);
        let round = r.u64()?;
        let offset = r.position();
        let signature = r.bytes()?.try_into().map_err(|_| DecodeError::Invalid {
            what: "vote signature",
            offset,
        })?;
        Ok(Vote {
            voter,
            round,
            signature,
        })
    }
}
