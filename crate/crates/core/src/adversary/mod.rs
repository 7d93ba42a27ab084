//! Attacker models and the mitigations they run into.
//!
//! [`node`] covers a block producer that withholds the draw event until the
//! resulting winners suit it. [`sybil`] covers one controller flooding
//! admission with derived fake identities.

pub mod node;
pub mod sybil;

use thiserror::Error;

use crate::chain::ChainError;
use crate::lottery::LotteryError;

pub use node::{
    include_draw_event, node_attack_filter, BlockProduction, run_commit_reveal_mode_round, run_naive_mode_round, InclusionPredicate,
    NodeAttacker, RoundOutcome, DEFAULT_WITHHOLD_LIMIT,
};
pub use sybil::{sybil_admission_trial, sybil_spawn, work_price, SybilAttacker, SybilIdentity, SybilTrial};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AdversaryError {
    #[error("requested {requested} fakes but the attacker controls only {available}")]
    TooManyFakes { requested: usize, available: usize },
    #[error("no block proposer available")]
    NoProposers,
    #[error(transparent)]
    Lottery(#[from] LotteryError),
    #[error(transparent)]
    Ledger(#[from] ChainError),
}
