//! The lottery state machine: deploy, enroll with proof of work and
//! unanimous certification, upload keys with deposits, buy shares, wait out
//! the buffer, draw and settle.

mod config;
mod deposit;
mod state;
mod winners;

use thiserror::Error;

use crate::chain::{Address, ChainError};
use crate::randao::RngError;

pub use config::{ConfigError, EvictionPolicy, LotteryConfig, PoolMode, FEE_RATIO_DENOMINATOR};
pub use deposit::{compute_deposit, price_multiplier};
pub use state::{prize_pool, DrawOutcome, LotteryState, Phase, PlayerRecord, Settlement};
pub use winners::{derive_winners, reduce_mod};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LotteryError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("operation requires phase {expected:?}, lottery is in {actual:?}")]
    WrongPhase { expected: Phase, actual: Phase },
    #[error("too early: tick {now}, opens at {opens}")]
    TooEarly { now: u64, opens: u64 },
    #[error("{0} is not a player")]
    NotAPlayer(Address),
    #[error("{0} is banned")]
    Banned(Address),
    #[error("{0} already joined")]
    DuplicatePlayer(Address),
    #[error("proof of work from {0} rejected")]
    PowRejected(Address),
    #[error("certifier {0} did not approve the candidate")]
    MissingCertification(Address),
    #[error("guess {guess} outside [0, {space})")]
    GuessOutOfRange { guess: u64, space: u64 },
    #[error("security factor {0} is not a positive finite number")]
    InvalidSecurityFactor(f64),
    #[error("deposit does not fit in the money type")]
    Overflow,
    #[error(transparent)]
    Rng(#[from] RngError),
    #[error(transparent)]
    Ledger(#[from] ChainError),
}
