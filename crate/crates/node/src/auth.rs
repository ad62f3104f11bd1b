//! Signed requests. The signature covers the canonical bytes of method,
//! path, sender, nonce and body, so a captured request cannot be replayed
//! against another endpoint or with a different body.

use aidchain_core::codec::Writer;
use aidchain_core::crypto::{verify_envelope, Keypair, SignatureError};
use aidchain_core::Address;

pub const SENDER_HEADER: &str = "x-an-sender";
pub const NONCE_HEADER: &str = "x-an-nonce";
pub const SIGNATURE_HEADER: &str = "x-an-signature";

const DOMAIN: &str = "aidchain-request-v1";

/// `path` excludes the query string.
pub fn request_bytes(method: &str, path: &str, sender: &Address, nonce: u64, body: &[u8]) -> Vec<u8> {
    let mut w = Writer::default();
    w.str(DOMAIN)
        .str(&method.to_ascii_uppercase())
        .str(path)
        .address(sender)
        .u64(nonce)
        .bytes(body);
    w.into_bytes()
}

/// The three header values for a request signed by `key`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SignedHeaders {
    pub sender: String,
    pub nonce: String,
    pub signature: String,
}

impl SignedHeaders {
    pub fn pairs(&self) -> [(&'static str, &str); 3] {
        [
            (SENDER_HEADER, &self.sender),
            (NONCE_HEADER, &self.nonce),
            (SIGNATURE_HEADER, &self.signature),
        ]
    }
}

pub fn sign_request(key: &Keypair, method: &str, path: &str, nonce: u64, body: &[u8]) -> SignedHeaders {
    let sender = key.address();
    let envelope = key.sign(&request_bytes(method, path, &sender, nonce, body));
    SignedHeaders {
        sender: sender.to_string(),
        nonce: nonce.to_string(),
        signature: hex::encode(envelope.to_bytes()),
    }
}

pub fn verify_request(
    method: &str,
    path: &str,
    sender: &Address,
    nonce: u64,
    body: &[u8],
    signature: &[u8],
) -> Result<(), SignatureError> {
    verify_envelope(signature, sender, &request_bytes(method, path, sender, nonce, body))
}
