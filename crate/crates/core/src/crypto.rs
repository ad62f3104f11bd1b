//! Signing identities.
//!
//! Every actor and authority holds an Ed25519 key derived from a 32-byte seed.
//! Addresses follow the Ethereum rule: the first 20 bytes of the Keccak-256 of
//! the public key bytes. Ed25519 signatures cannot recover the signer, so
//! detached signatures travel as a [`SignatureEnvelope`] that carries the
//! public key next to the signature bytes.

use ed25519_dalek::{Signer, Verifier};
use thiserror::Error;

use crate::hash::keccak256;
use crate::types::Address;

/// Scheme identifier stored in envelopes and actor records.
pub const SCHEME_ED25519: u8 = 0x01;

pub const PUBLIC_KEY_LEN: usize = 32;
pub const SIGNATURE_LEN: usize = 64;
pub const ENVELOPE_LEN: usize = 1 + PUBLIC_KEY_LEN + SIGNATURE_LEN;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SignatureError {
    #[error("envelope must be {ENVELOPE_LEN} bytes, got {0}")]
    Length(usize),
    #[error("unknown signature scheme {0:#04x}")]
    Scheme(u8),
    #[error("public key is not a valid curve point")]
    PublicKey,
    #[error("public key does not belong to the claimed signer")]
    SignerMismatch,
    #[error("signature does not verify")]
    Invalid,
}

#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
pub struct PublicKey(pub [u8; PUBLIC_KEY_LEN]);

impl PublicKey {
    pub fn address(&self) -> Address {
        address_of(&self.0)
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn from_hex(s: &str) -> Result<Self, SignatureError> {
        let bytes = hex::decode(s).map_err(|_| SignatureError::PublicKey)?;
        let arr: [u8; PUBLIC_KEY_LEN] = bytes
            .try_into()
            .map_err(|_| SignatureError::PublicKey)?;
        ed25519_dalek::VerifyingKey::from_bytes(&arr).map_err(|_| SignatureError::PublicKey)?;
        Ok(PublicKey(arr))
    }

    pub fn verify(&self, message: &[u8], signature: &[u8; SIGNATURE_LEN]) -> Result<(), SignatureError> {
        let key = ed25519_dalek::VerifyingKey::from_bytes(&self.0)
            .map_err(|_| SignatureError::PublicKey)?;
        let sig = ed25519_dalek::Signature::from_bytes(signature);
        key.verify(message, &sig).map_err(|_| SignatureError::Invalid)
    }
}

/// First 20 bytes of keccak256(public key bytes).
pub fn address_of(public_key: &[u8]) -> Address {
    let digest = keccak256(public_key);
    let mut out = [0u8; 20];
    out.copy_from_slice(&digest.0[..20]);
    Address(out)
}

#[derive(Clone)]
pub struct Keypair {
    inner: ed25519_dalek::SigningKey,
}

impl Keypair {
    pub fn from_seed(seed: &[u8; 32]) -> Self {
        Keypair {
            inner: ed25519_dalek::SigningKey::from_bytes(seed),
        }
    }

    /// Deterministic key for fixtures and simulated authorities.
    pub fn from_label(label: &str) -> Self {
        Self::from_seed(&keccak256(label.as_bytes()).0)
    }

    pub fn seed(&self) -> [u8; 32] {
        self.inner.to_bytes()
    }

    pub fn public(&self) -> PublicKey {
        PublicKey(self.inner.verifying_key().to_bytes())
    }

    pub fn address(&self) -> Address {
        self.public().address()
    }

    pub fn sign_raw(&self, message: &[u8]) -> [u8; SIGNATURE_LEN] {
        self.inner.sign(message).to_bytes()
    }

    pub fn sign(&self, message: &[u8]) -> SignatureEnvelope {
        SignatureEnvelope {
            public_key: self.public(),
            signature: self.sign_raw(message),
        }
    }
}

impl std::fmt::Debug for Keypair {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Keypair")
            .field("address", &self.address())
            .finish_non_exhaustive()
    }
}

/// `scheme || public key || signature`, the byte form stored in transactions
/// and sent in request headers.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct SignatureEnvelope {
    pub public_key: PublicKey,
    pub signature: [u8; SIGNATURE_LEN],
}

impl SignatureEnvelope {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(ENVELOPE_LEN);
        out.push(SCHEME_ED25519);
        out.extend_from_slice(&self.public_key.0);
        out.extend_from_slice(&self.signature);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, SignatureError> {
        if bytes.len() != ENVELOPE_LEN {
            return Err(SignatureError::Length(bytes.len()));
        }
        if bytes[0] != SCHEME_ED25519 {
            return Err(SignatureError::Scheme(bytes[0]));
        }
        let mut pk = [0u8; PUBLIC_KEY_LEN];
        pk.copy_from_slice(&bytes[1..1 + PUBLIC_KEY_LEN]);
        let mut sig = [0u8; SIGNATURE_LEN];
        sig.copy_from_slice(&bytes[1 + PUBLIC_KEY_LEN..]);
        Ok(SignatureEnvelope {
            public_key: PublicKey(pk),
            signature: sig,
        })
    }

    /// Checks that the envelope's key maps to `signer` and that the signature
    /// covers `message`.
    pub fn verify(&self, signer: &Address, message: &[u8]) -> Result<(), SignatureError> {
        if &self.public_key.address() != signer {
            return Err(SignatureError::SignerMismatch);
        }
        self.public_key.verify(message, &self.signature)
    }
}

/// Verifies raw envelope bytes in one step.
pub fn verify_envelope(bytes: &[u8], signer: &Address, message: &[u8]) -> Result<(), SignatureError> {
    SignatureEnvelope::from_bytes(bytes)?.verify(signer, message)
}
