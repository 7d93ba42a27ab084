//! Simulation-grade blockchain substrate.
//!
//! Accounts hold integer money, events carry hash-based authentication tags,
//! and blocks are linked and mined with a toy proof of work. None of this is
//! production cryptography; it only has to be deterministic and make forgery
//! and tampering detectable inside a run.

mod block;
mod event;
mod ledger;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::crypto::{hash, Hash32};

pub use block::{dump_chain, verify_chain, Block};
pub use event::{Event, EventKind};
pub use ledger::{ChainError, Ledger};

/// Money in atomic units. Never floating point.
pub type Money = u128;

/// A 32-byte account identifier, `H(secret)`.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Address(pub Hash32);

impl Address {
    pub const ZERO: Address = Address([0u8; 32]);

    pub fn from_secret(secret: &Hash32) -> Self {
        Address(hash(secret))
    }

    pub fn as_bytes(&self) -> &Hash32 {
        &self.0
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }
}

impl fmt::Display for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl fmt::Debug for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Address({}..)", &self.to_hex()[..12])
    }
}

impl Serialize for Address {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for Address {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        crate::crypto::hex_bytes::deserialize(deserializer).map(Address)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Account {
    pub address: Address,
    pub secret: Hash32,
    pub balance: Money,
    pub is_transaction_node: bool,
}

impl Account {
    /// Derives the account deterministically: `secret = H(seed)`,
    /// `address = H(secret)`.
    pub fn derive(seed_material: &[u8], balance: Money, is_transaction_node: bool) -> Self {
        let secret = hash(seed_material);
        Account {
            address: Address::from_secret(&secret),
            secret,
            balance,
            is_transaction_node,
        }
    }
}
