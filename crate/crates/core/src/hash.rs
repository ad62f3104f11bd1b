//! Keccak-256 as used by Ethereum (original Keccak padding, not FIPS-202 SHA3-256).

use sha3::{Digest as _, Keccak256};

use crate::types::Digest;

pub fn keccak256(data: &[u8]) -> Digest {
    Digest(Keccak256::digest(data).into())
}

/// Incremental Keccak-256 over several slices.
#[derive(Default, Clone)]
pub struct Hasher(Keccak256);

impl Hasher {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn update(&mut self, data: &[u8]) -> &mut Self {
        self.0.update(data);
        self
    }

    pub fn finish(self) -> Digest {
        Digest(self.0.finalize().into())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standard_vectors() {
        assert_eq!(
            keccak256(b"").to_hex(),
            "c5d2460186f7233c927e7db2dcc703c0e500b653ca82273b7bfad8045d85a470"
        );
        assert_eq!(
            keccak256(b"abc").to_hex(),
            "4e03657aea45a94fc7d47ba826c8d667c0d1e6e33a64a036ec44f58fa12d6c45"
        );
    }

    #[test]
    fn not_sha3() {
        // FIPS SHA3-256("") starts with a7ffc6f8.
        assert!(!keccak256(b"").to_hex().starts_with("a7ffc6f8"));
    }

    #[test]
    fn distinct_inputs() {
        assert_ne!(keccak256(b"a"), keccak256(b"b"));
    }

    #[test]
    fn incremental_matches_one_shot() {
        let mut h = Hasher::new();
        h.update(b"IBAN-").update(b"TEST-0001");
        assert_eq!(h.finish(), keccak256(b"IBAN-TEST-0001"));
    }
}
