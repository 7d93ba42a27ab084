use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chain::Money;
use crate::crypto::Target;

/// Transaction fee per share is `share_price / FEE_RATIO_DENOMINATOR`.
pub const FEE_RATIO_DENOMINATOR: Money = 1_000_000_000_000;

/// How the prize pool is assembled and what happens to deposits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PoolMode {
    /// Pool = forfeits + revealers' deposits; deposits are consumed and share
    /// payments stay frozen in the contract.
    #[serde(rename = "literal")]
    PaperLiteral,
    /// Pool = forfeits + share payments; revealers get their deposits back.
    #[default]
    #[serde(rename = "consistent")]
    ConservationConsistent,
}

impl PoolMode {
    pub fn name(&self) -> &'static str {
        match self {
            PoolMode::PaperLiteral => "literal",
            PoolMode::ConservationConsistent => "consistent",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "literal" => Some(PoolMode::PaperLiteral),
            "consistent" => Some(PoolMode::ConservationConsistent),
            _ => None,
        }
    }
}

/// Which certifier leaves the active set when it is full.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EvictionPolicy {
    /// Evict the member with the latest join time.
    #[default]
    MostRecent,
    /// Evict the member with the earliest join time.
    Oldest,
}

impl EvictionPolicy {
    pub fn name(&self) -> &'static str {
        match self {
            EvictionPolicy::MostRecent => "most-recent",
            EvictionPolicy::Oldest => "oldest",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "most-recent" | "literal" => Some(EvictionPolicy::MostRecent),
            "oldest" | "fifo" => Some(EvictionPolicy::Oldest),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid `{field}`: {reason}")]
pub struct ConfigError {
    pub field: &'static str,
    pub reason: String,
}

impl ConfigError {
    pub fn new(field: &'static str, reason: impl Into<String>) -> Self {
        ConfigError {
            field,
            reason: reason.into(),
        }
    }
}

/// Immutable per-event parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LotteryConfig {
    /// Price of one share (one guess), in atomic units.
    pub share_price: Money,
    /// The deposit security factor, strictly between 1 and 2.
    pub security_factor: f64,
    /// Maximum size of the active certifier set.
    pub cert_cap: usize,
    /// Length of the key-upload (commit) window in ticks.
    pub bet_duration: u64,
    /// Length of the buffer period, which doubles as the reveal window.
    pub buffer_duration: u64,
    pub guess_space_size: u64,
    pub winning_draws: u64,
    pub pool_mode: PoolMode,
    /// Admission proof-of-work target.
    pub pow_difficulty: Target,
    pub eviction: EvictionPolicy,
}

impl Default for LotteryConfig {
    fn default() -> Self {
        LotteryConfig {
            share_price: 1_000_000,
            security_factor: 1.5,
            cert_cap: 3,
            bet_duration: 3,
            buffer_duration: 3,
            guess_space_size: 10,
            winning_draws: 1,
            pool_mode: PoolMode::default(),
            pow_difficulty: Target::pow2(252).expect("valid exponent"),
            eviction: EvictionPolicy::default(),
        }
    }
}

impl LotteryConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let k = self.security_factor;
        if !(k > 1.0 && k < 2.0) {
            return Err(ConfigError::new(
                "security_factor",
                format!("{k} is outside the open interval (1, 2)"),
            ));
        }
        if self.cert_cap == 0 {
            return Err(ConfigError::new("cert_cap", "must be at least 1"));
        }
        if self.guess_space_size == 0 {
            return Err(ConfigError::new("guess_space_size", "must be at least 1"));
        }
        if self.winning_draws == 0 || self.winning_draws > self.guess_space_size {
            return Err(ConfigError::new(
                "winning_draws",
                format!("must be in [1, {}]", self.guess_space_size),
            ));
        }
        if self.bet_duration == 0 {
            return Err(ConfigError::new("bet_duration", "must be at least 1 tick"));
        }
        if self.buffer_duration == 0 {
            return Err(ConfigError::new("buffer_duration", "must be at least 1 tick"));
        }
        Ok(())
    }

    /// Transaction fee charged per share on top of the share price.
    pub fn fee_per_share(&self) -> Money {
        self.share_price / FEE_RATIO_DENOMINATOR
    }
}
