use serde::Serialize;

use crate::codec::{Decode, DecodeError, Encode, Reader, Writer};
use crate::consensus::{AuthorityConfig, AuthorityId, Vote};
use crate::contract::{ContractCall, ContractState};
use crate::crypto::{verify_envelope, Keypair, SignatureError};
use crate::hash::keccak256;
use crate::types::{Address, Digest};

/// A signed, replay-protected contract invocation.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, serde::Deserialize)]
pub struct Transaction {
    pub sender: Address,
    pub nonce: u64,
    pub call: ContractCall,
    /// Signature envelope (scheme, public key, signature) over [`Transaction::signing_bytes`].
    #[serde(with = "hex_bytes")]
    pub signature: Vec<u8>,
}

impl Transaction {
    pub fn signing_bytes(sender: &Address, nonce: u64, call: &ContractCall) -> Vec<u8> {
        let mut w = Writer::default();
        w.address(sender).u64(nonce);
        call.encode_to(&mut w);
        w.into_bytes()
    }

    pub fn sign(key: &Keypair, nonce: u64, call: ContractCall) -> Self {
        let sender = key.address();
        let signature = key
            .sign(&Self::signing_bytes(&sender, nonce, &call))
            .to_bytes();
        Transaction {
            sender,
            nonce,
            call,
            signature,
        }
    }

    pub fn hash(&self) -> Digest {
        self.digest()
    }

    pub fn verify_signature(&self) -> Result<(), SignatureError> {
        verify_envelope(
            &self.signature,
            &self.sender,
            &Self::signing_bytes(&self.sender, self.nonce, &self.call),
        )
    }
}

impl Encode for Transaction {
    fn encode_to(&self, w: &mut Writer) {
        w.address(&self.sender).u64(self.nonce);
        self.call.encode_to(w);
        w.bytes(&self.signature);
    }
}

impl Decode for Transaction {
    fn decode_from(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        Ok(Transaction {
            sender: r.address()?,
            nonce: r.u64()?,
            call: ContractCall::decode_from(r)?,
            signature: r.bytes()?.to_vec(),
        })
    }
}

/// Parameters fixed at chain creation and carried by block 0.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GenesisParams {
    pub organization: Address,
    pub authorities: AuthorityConfig,
}

impl GenesisParams {
    pub fn initial_state(&self) -> ContractState {
        ContractState::new(self.organization)
    }
}

impl Encode for GenesisParams {
    fn encode_to(&self, w: &mut Writer) {
        w.address(&self.organization);
        self.authorities.encode_to(w);
    }
}

impl Decode for GenesisParams {
    fn decode_from(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        Ok(GenesisParams {
            organization: r.address()?,
            authorities: AuthorityConfig::decode_from(r)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Block {
    pub height: u64,
    pub parent_hash: Digest,
    pub proposer: AuthorityId,
    pub transactions: Vec<Transaction>,
    pub state_root: Digest,
    /// Present exactly on the genesis block.
    pub genesis: Option<GenesisParams>,
    pub votes: Vec<Vote>,
}

impl Block {
    pub fn genesis(params: GenesisParams) -> Self {
        Block {
            height: 0,
            parent_hash: Digest::ZERO,
            proposer: params.authorities.authorities()[0].id,
            transactions: Vec::new(),
            state_root: params.initial_state().root(),
            genesis: Some(params),
            votes: Vec::new(),
        }
    }

    fn encode_header(&self, w: &mut Writer) {
        w.u64(self.height)
            .digest(&self.parent_hash)
            .u32(self.proposer.0)
            .count(self.transactions.len());
        for tx in &self.transactions {
            tx.encode_to(w);
        }
        w.digest(&self.state_root);
        if self.height == 0 {
            // Block 0 must carry genesis parameters; encode() of an ill-formed
            // genesis writes an absent marker that decode rejects.
            match &self.genesis {
                Some(g) => g.encode_to(w),
                None => {
                    w.u32(u32::MAX);
                }
            }
        }
    }

    /// Keccak-256 over every field except the votes.
    pub fn hash(&self) -> Digest {
        let mut w = Writer::default();
        self.encode_header(&mut w);
        keccak256(&w.into_bytes())
    }

    /// The round this block was committed in, taken from its votes.
    pub fn round(&self) -> Option<u64> {
        self.votes.first().map(|v| v.round)
    }

    pub fn is_genesis(&self) -> bool {
        self.height == 0
    }
}

impl Encode for Block {
    fn encode_to(&self, w: &mut Writer) {
        self.encode_header(w);
        w.count(self.votes.len());
        for v in &self.votes {
            v.encode_to(w);
        }
    }
}

impl Decode for Block {
    fn decode_from(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        let height = r.u64()?;
        let parent_hash = r.digest()?;
        let proposer = AuthorityId(r.u32()?);
        let n = r.count(29)?;
        let mut transactions = Vec::with_capacity(n);
        for _ in 0..n {
            transactions.push(Transaction::decode_from(r)?);
        }
        let state_root = r.digest()?;
        let genesis = if height == 0 {
            Some(GenesisParams::decode_from(r)?)
        } else {
            None
        };
        let n = r.count(16)?;
        let mut votes = Vec::with_capacity(n);
        for _ in 0..n {
            votes.push(Vote::decode_from(r)?);
        }
        Ok(Block {
            height,
            parent_hash,
            proposer,
            transactions,
            state_root,
            genesis,
            votes,
        })
    }
}

mod hex_bytes {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &[u8], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(v))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
        let s = String::deserialize(d)?;
        hex::decode(s).map_err(serde::de::Error::custom)
    }
}
