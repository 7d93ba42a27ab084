use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use sha3::{Digest, Sha3_256};

use super::{Address, Event};
use crate::crypto::{Hash32, Target};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Block {
    pub height: u64,
    #[serde(with = "crate::crypto::hex_bytes")]
    pub prev_hash: Hash32,
    pub events: Vec<Event>,
    pub nonce: u64,
    pub miner: Address,
    pub difficulty: Target,
    #[serde(with = "crate::crypto::hex_bytes")]
    pub hash: Hash32,
}

impl Block {
    /// `H(prev_hash ‖ event bytes ‖ nonce_le ‖ miner)`.
    pub fn compute_hash(prev_hash: &Hash32, events: &[Event], nonce: u64, miner: &Address) -> Hash32 {
        let mut hasher = Self::prefix_hasher(prev_hash, events);
        hasher.update(nonce.to_le_bytes());
        hasher.update(miner.as_bytes());
        hasher.finalize().into()
    }

    fn prefix_hasher(prev_hash: &Hash32, events: &[Event]) -> Sha3_256 {
        let mut hasher = Sha3_256::new();
        hasher.update(prev_hash);
        for event in events {
            hasher.update(event.to_bytes());
        }
        hasher
    }

    /// Assembles a block, searching nonces from 0 until the hash meets
    /// `difficulty`. Does not touch any ledger.
    pub fn mine(height: u64, prev_hash: Hash32, events: Vec<Event>, miner: Address, difficulty: Target) -> Block {
        let prefix = Self::prefix_hasher(&prev_hash, &events);
        let (nonce, hash) = (0u64..)
            .map(|nonce| {
                let mut hasher = prefix.clone();
                hasher.update(nonce.to_le_bytes());
                hasher.update(miner.as_bytes());
                let digest: Hash32 = hasher.finalize().into();
                (nonce, digest)
            })
            .find(|(_, digest)| difficulty.is_met_by(digest))
            .expect("nonce space exhausted");
        Block {
            height,
            prev_hash,
            events,
            nonce,
            miner,
            difficulty,
            hash,
        }
    }

    pub fn is_self_consistent(&self) -> bool {
        self.hash == Self::compute_hash(&self.prev_hash, &self.events, self.nonce, &self.miner)
            && self.difficulty.is_met_by(&self.hash)
    }
}

/// True iff every block's stored hash is its real hash, meets its
/// difficulty, and links to its predecessor.
pub fn verify_chain(chain: &[Block]) -> bool {
    chain.iter().enumerate().all(|(i, block)| {
        let linked = match i {
            0 => block.prev_hash == [0u8; 32],
            _ => block.prev_hash == chain[i - 1].hash,
        };
        linked && block.height == i as u64 && block.is_self_consistent()
    })
}

/// One line per block: `height,prev_hash_hex,hash_hex,miner_hex,event_count`.
pub fn dump_chain(chain: &[Block]) -> String {
    let mut out = String::new();
    for block in chain {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            block.height,
            hex::encode(block.prev_hash),
            hex::encode(block.hash),
            block.miner.to_hex(),
            block.events.len()
        );
    }
    out
}
