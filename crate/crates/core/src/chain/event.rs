use serde::{Deserialize, Serialize};

use super::{Account, Address, Money};
use crate::crypto::{hash_parts, Hash32};

/// Kind-specific event payloads.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EventKind {
    Transfer {
        to: Address,
        amount: Money,
    },
    Commit {
        round_id: u64,
        #[serde(with = "crate::crypto::hex_bytes")]
        commit_hash: Hash32,
        deposit: Money,
    },
    Reveal {
        round_id: u64,
        value: i64,
    },
    BuyShares {
        lottery_id: u64,
        guesses: Vec<u64>,
    },
    JoinRequest {
        lottery_id: u64,
        pow_nonce: u64,
    },
    Certify {
        lottery_id: u64,
        candidate: Address,
    },
    Draw {
        lottery_id: u64,
    },
}

impl EventKind {
    fn tag(&self) -> u8 {
        match self {
            EventKind::Transfer { .. } => 0,
            EventKind::Commit { .. } => 1,
            EventKind::Reveal { .. } => 2,
            EventKind::BuyShares { .. } => 3,
            EventKind::JoinRequest { .. } => 4,
            EventKind::Certify { .. } => 5,
            EventKind::Draw { .. } => 6,
        }
    }

    /// Canonical payload encoding: a kind byte followed by fixed-width
    /// little-endian fields. Variable-length lists are count-prefixed.
    pub fn canonical_bytes(&self) -> Vec<u8> {
        let mut out = vec![self.tag()];
        match self {
            EventKind::Transfer { to, amount } => {
                out.extend_from_slice(to.as_bytes());
                out.extend_from_slice(&amount.to_le_bytes());
            }
            EventKind::Commit {
                round_id,
                commit_hash,
                deposit,
            } => {
                out.extend_from_slice(&round_id.to_le_bytes());
                out.extend_from_slice(commit_hash);
                out.extend_from_slice(&deposit.to_le_bytes());
            }
            EventKind::Reveal { round_id, value } => {
                out.extend_from_slice(&round_id.to_le_bytes());
                out.extend_from_slice(&value.to_le_bytes());
            }
            EventKind::BuyShares {
                lottery_id,
                guesses,
            } => {
                out.extend_from_slice(&lottery_id.to_le_bytes());
                out.extend_from_slice(&(guesses.len() as u64).to_le_bytes());
                for guess in guesses {
                    out.extend_from_slice(&guess.to_le_bytes());
                }
            }
            EventKind::JoinRequest {
                lottery_id,
                pow_nonce,
            } => {
                out.extend_from_slice(&lottery_id.to_le_bytes());
                out.extend_from_slice(&pow_nonce.to_le_bytes());
            }
            EventKind::Certify {
                lottery_id,
                candidate,
            } => {
                out.extend_from_slice(&lottery_id.to_le_bytes());
                out.extend_from_slice(candidate.as_bytes());
            }
            EventKind::Draw { lottery_id } => {
                out.extend_from_slice(&lottery_id.to_le_bytes());
            }
        }
        out
    }
}

/// A signed protocol action.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Event {
    #[serde(flatten)]
    pub kind: EventKind,
    pub sender: Address,
    #[serde(with = "crate::crypto::hex_bytes")]
    pub auth_tag: Hash32,
    pub timestamp: u64,
}

impl Event {
    /// Tags `kind` on behalf of `signer` at `timestamp`.
    pub fn sign(signer: &Account, kind: EventKind, timestamp: u64) -> Self {
        let auth_tag = Self::tag_for(&signer.secret, &kind, timestamp);
        Event {
            kind,
            sender: signer.address,
            auth_tag,
            timestamp,
        }
    }

    fn tag_for(secret: &Hash32, kind: &EventKind, timestamp: u64) -> Hash32 {
        hash_parts(&[secret, &Self::payload_bytes(kind, timestamp)])
    }

    fn payload_bytes(kind: &EventKind, timestamp: u64) -> Vec<u8> {
        let mut bytes = kind.canonical_bytes();
        bytes.extend_from_slice(&timestamp.to_le_bytes());
        bytes
    }

    /// The bytes that get authenticated: canonical payload plus timestamp.
    pub fn signed_bytes(&self) -> Vec<u8> {
        Self::payload_bytes(&self.kind, self.timestamp)
    }

    /// Checks the tag against the sender's secret. The caller supplies the
    /// secret; in this simulation the ledger plays the role of the public
    /// verifier that knows it.
    pub fn verify_with(&self, sender_secret: &Hash32) -> bool {
        Address::from_secret(sender_secret) == self.sender
            && hash_parts(&[sender_secret, &self.signed_bytes()]) == self.auth_tag
    }

    /// Full encoding used when hashing blocks.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut bytes = self.signed_bytes();
        bytes.extend_from_slice(self.sender.as_bytes());
        bytes.extend_from_slice(&self.auth_tag);
        bytes
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_single_byte_flip_breaks_the_tag() {
        let alice = Account::derive(b"alice", 10, false);
        let bob = Account::derive(b"bob", 0, false);
        let event = Event::sign(
            &alice,
            EventKind::Transfer {
                to: bob.address,
                amount: 7,
            },
            3,
        );
        assert!(event.verify_with(&alice.secret));
        let payload = event.signed_bytes();
        for idx in 0..payload.len() {
            for bit in 0..8 {
                let mut tampered = payload.clone();
                tampered[idx] ^= 1 << bit;
                let tag = hash_parts(&[&alice.secret, &tampered]);
                assert_ne!(tag, event.auth_tag, "flip at byte {idx} bit {bit}");
            }
        }
    }

    #[test]
    fn tag_does_not_verify_under_another_secret() {
        let alice = Account::derive(b"alice", 10, false);
        let mallory = Account::derive(b"mallory", 10, false);
        let event = Event::sign(&alice, EventKind::Draw { lottery_id: 1 }, 0);
        assert!(!event.verify_with(&mallory.secret));
        let forged = Event {
            sender: alice.address,
            ..Event::sign(&mallory, EventKind::Draw { lottery_id: 1 }, 0)
        };
        assert!(!forged.verify_with(&alice.secret));
    }
}
