//! Deterministic simulator of a decentralized, commit-reveal based lottery.
//!
//! The crate is layered bottom-up:
//!
//! - [`crypto`] and [`chain`]: hashing, proof of work, an integer ledger and
//!   a toy block chain.
//! - [`randao`]: commit-reveal randomness rounds with forfeitable deposits.
//! - [`lottery`]: the lottery state machine (admission, deposits, shares,
//!   draw, settlement).
//! - [`adversary`]: block-withholding and Sybil attacker models.
//! - [`registry`]: named, runtime-selectable strategies (randomness sources,
//!   certifier policies).
//! - [`harness`]: scenario files, seeded runs, statistics and reports.

pub mod crypto;
pub mod chain;
pub mod randao;
pub mod lottery;
pub mod registry;
pub mod adversary;
pub mod harness;
