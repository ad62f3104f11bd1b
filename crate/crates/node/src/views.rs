//! JSON shapes of committed data, as served by the API.

use aidchain_core::ledger::{Block, Transaction};
use aidchain_core::{Address, Amount, ContractCall, Digest, EventKind, EventRecord};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TxView {
    pub hash: Digest,
    pub sender: Address,
    pub nonce: u64,
    pub call: ContractCall,
    pub signature: String,
}

impl From<&Transaction> for TxView {
    fn from(tx: &Transaction) -> Self {
        TxView {
            hash: tx.hash(),
            sender: tx.sender,
            nonce: tx.nonce,
            call: tx.call.clone(),
            signature: hex::encode(&tx.signature),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VoteView {
    pub voter: u32,
    pub round: u64,
    pub signature: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuthorityView {
    pub id: u32,
    pub public_key: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenesisView {
    pub organization: Address,
    pub authorities: Vec<AuthorityView>,
    pub quorum: u32,
    pub round_duration: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockView {
    pub height: u64,
    pub hash: Digest,
    pub parent_hash: Digest,
    pub proposer: u32,
    pub round: Option<u64>,
    pub state_root: Digest,
    pub transactions: Vec<TxView>,
    pub votes: Vec<VoteView>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub genesis: Option<GenesisView>,
}

impl From<&Block> for BlockView {
    fn from(b: &Block) -> Self {
        BlockView {
            height: b.height,
            hash: b.hash(),
            parent_hash: b.parent_hash,
            proposer: b.proposer.0,
            round: b.round(),
            state_root: b.state_root,
            transactions: b.transactions.iter().map(TxView::from).collect(),
            votes: b
                .votes
                .iter()
                .map(|v| VoteView {
                    voter: v.voter.0,
                    round: v.round,
                    signature: hex::encode(v.signature),
                })
                .collect(),
            genesis: b.genesis.as_ref().map(|g| GenesisView {
                organization: g.organization,
                authorities: g
                    .authorities
                    .authorities()
                    .iter()
                    .map(|a| AuthorityView {
                        id: a.id.0,
                        public_key: a.public_key.to_hex(),
                    })
                    .collect(),
                quorum: g.authorities.quorum(),
                round_duration: g.authorities.round_duration(),
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventView {
    pub height: u64,
    pub kind: EventKind,
    pub actor: Address,
    pub subject: Address,
    pub amount: Amount,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub account_digest: Option<Digest>,
    pub tx_hash: Digest,
}

impl EventView {
    pub fn new(height: u64, ev: &EventRecord) -> Self {
        EventView {
            height,
            kind: ev.kind,
            actor: ev.actor,
            subject: ev.subject,
            amount: ev.amount,
            account_digest: ev.account_digest,
            tx_hash: ev.tx_hash,
        }
    }
}
