#![allow(dead_code)]

pub mod keccak_ref;
pub mod ref_encoder;

use aidchain_core::consensus::{AuthorityConfig, AuthorityId, Vote, DEFAULT_ROUND_DURATION};
use aidchain_core::crypto::Keypair;
use aidchain_core::ledger::{Block, Chain, GenesisParams, Transaction};
use aidchain_core::ContractCall;

pub fn org() -> Keypair {
    Keypair::from_label("fixture-organization")
}

pub fn authority() -> Keypair {
    Keypair::from_label("fixture-authority-0")
}

pub fn recipient(i: usize) -> Keypair {
    Keypair::from_label(&format!("fixture-recipient-{i}"))
}

/// Single-authority chain (quorum 1).
pub fn dev_chain() -> Chain {
    Chain::new(GenesisParams {
        organization: org().address(),
        authorities: AuthorityConfig::from_keys(&[authority()], DEFAULT_ROUND_DURATION).unwrap(),
    })
    .unwrap()
}

/// Builds, votes and appends a block in the next round.
pub fn commit(chain: &mut Chain, txs: Vec<Transaction>) -> Block {
    let round = chain.last_round().map_or(0, |r| r + 1);
    let mut block = chain.build_block(txs, AuthorityId(0)).unwrap();
    block.votes = vec![Vote::sign(&authority(), AuthorityId(0), &block.hash(), round)];
    chain.append(block.clone()).unwrap();
    block
}

pub fn org_tx(chain: &Chain, call: ContractCall) -> Transaction {
    let k = org();
    Transaction::sign(&k, chain.next_nonce(&k.address()), call)
}
