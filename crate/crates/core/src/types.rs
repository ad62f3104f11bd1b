//! Primitive value types shared by the contract, ledger and consensus layers.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("expected {expected} hex characters, got {got}")]
    Length { expected: usize, got: usize },
    #[error("missing 0x prefix")]
    MissingPrefix,
    #[error("invalid hex: {0}")]
    Hex(String),
    #[error("invalid amount: {0}")]
    Amount(String),
}

/// A 20-byte account identifier, rendered as `0x` + 40 lowercase hex digits.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Address(pub [u8; 20]);

impl Address {
    pub const LEN: usize = 20;

    pub fn as_bytes(&self) -> &[u8; 20] {
        &self.0
    }
}

impl fmt::Display for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "0x{}", hex::encode(self.0))
    }
}

impl fmt::Debug for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Address({self})")
    }
}

impl FromStr for Address {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let body = s
            .strip_prefix("0x")
            .or_else(|| s.strip_prefix("0X"))
            .ok_or(ParseError::MissingPrefix)?;
        if body.len() != 40 {
            return Err(ParseError::Length {
                expected: 40,
                got: body.len(),
            });
        }
        let mut out = [0u8; 20];
        hex::decode_to_slice(body, &mut out).map_err(|e| ParseError::Hex(e.to_string()))?;
        Ok(Address(out))
    }
}

/// A 32-byte Keccak-256 digest, rendered as 64 lowercase hex digits without prefix.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Digest(pub [u8; 32]);

impl Digest {
    pub const ZERO: Digest = Digest([0u8; 32]);

    pub fn as_bytes(&self) -> &[u8; 32] {
        &self.0
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }
}

impl fmt::Display for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl fmt::Debug for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Digest({})", &self.to_hex()[..16])
    }
}

impl FromStr for Digest {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.len() != 64 {
            return Err(ParseError::Length {
                expected: 64,
                got: s.len(),
            });
        }
        let mut out = [0u8; 32];
        hex::decode_to_slice(s, &mut out).map_err(|e| ParseError::Hex(e.to_string()))?;
        Ok(Digest(out))
    }
}

/// Money in indivisible minor units. Arithmetic is always checked.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Debug)]
pub struct Amount(pub u64);

impl Amount {
    pub const ZERO: Amount = Amount(0);

    pub fn value(self) -> u64 {
        self.0
    }

    pub fn is_zero(self) -> bool {
        self.0 == 0
    }

    pub fn checked_add(self, other: Amount) -> Option<Amount> {
        self.0.checked_add(other.0).map(Amount)
    }

    pub fn checked_sub(self, other: Amount) -> Option<Amount> {
        self.0.checked_sub(other.0).map(Amount)
    }
}

impl fmt::Display for Amount {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl FromStr for Amount {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.is_empty() || !s.bytes().all(|b| b.is_ascii_digit()) {
            return Err(ParseError::Amount(s.to_string()));
        }
        s.parse::<u64>()
            .map(Amount)
            .map_err(|_| ParseError::Amount(s.to_string()))
    }
}

impl From<u64> for Amount {
    fn from(v: u64) -> Self {
        Amount(v)
    }
}

macro_rules! string_serde {
    ($ty:ty) => {
        impl Serialize for $ty {
            fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
                s.collect_str(self)
            }
        }

        impl<'de> Deserialize<'de> for $ty {
            fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
                let s = String::deserialize(d)?;
                s.parse().map_err(serde::de::Error::custom)
            }
        }
    };
}

// Amounts travel as decimal strings in JSON so no client loses precision above 2^53.
string_serde!(Address);
string_serde!(Digest);
string_serde!(Amount);

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn address_text_form_is_42_chars() {
        let a = Address([0xab; 20]);
        let s = a.to_string();
        assert_eq!(s.len(), 42);
        assert!(s.starts_with("0x"));
        assert_eq!(s.parse::<Address>().unwrap(), a);
    }

    #[test]
    fn address_rejects_bad_input() {
        assert_eq!(
            "abab".parse::<Address>().unwrap_err(),
            ParseError::MissingPrefix
        );
        assert!(matches!(
            "0x1234".parse::<Address>(),
            Err(ParseError::Length { .. })
        ));
        assert!(matches!(
            format!("0x{}", "zz".repeat(20)).parse::<Address>(),
            Err(ParseError::Hex(_))
        ));
    }

    #[test]
    fn amount_json_is_decimal_string() {
        let json = serde_json::to_string(&Amount(u64::MAX)).unwrap();
        assert_eq!(json, "\"18446744073709551615\"");
        let back: Amount = serde_json::from_str(&json).unwrap();
        assert_eq!(back, Amount(u64::MAX));
        assert!(serde_json::from_str::<Amount>("\"-1\"").is_err());
        assert!(serde_json::from_str::<Amount>("\"18446744073709551616\"").is_err());
    }

    #[test]
    fn digest_hex_has_no_prefix() {
        let d = Digest([1; 32]);
        assert_eq!(d.to_string(), "01".repeat(32));
        assert_eq!(d.to_string().parse::<Digest>().unwrap(), d);
    }
}
