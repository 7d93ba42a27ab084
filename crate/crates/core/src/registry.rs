//! Named, interchangeable strategies selected at runtime.
//!
//! Two families plug into the simulation through trait objects:
//!
//! - [`RandomnessSource`]: how the winning set is fixed when the draw event
//!   lands in a block (`naive` block-hash randomness or `commit-reveal`).
//! - [`CertifierPolicy`]: how the active certifiers vote on candidates
//!   (`honest-refuse` or `rubberstamp`).
//!
//! Scenario files and the CLI refer to strategies by name; [`Registry`] maps
//! those names to implementations.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::chain::{Address, Ledger};
use crate::crypto::Hash32;
use crate::lottery::{LotteryError, LotteryState};

/// Where the draw's randomness comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum RngMode {
    /// Winners derive from the hash of the block that includes the draw.
    #[serde(rename = "naive")]
    NaiveBlockHash,
    /// Winners derive from the finalized commit-reveal output.
    #[default]
    #[serde(rename = "commit-reveal")]
    CommitReveal,
}

impl RngMode {
    pub fn name(&self) -> &'static str {
        match self {
            RngMode::NaiveBlockHash => "naive",
            RngMode::CommitReveal => "commit-reveal",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "naive" => Some(RngMode::NaiveBlockHash),
            "commit-reveal" => Some(RngMode::CommitReveal),
            _ => None,
        }
    }
}

impl fmt::Display for RngMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

pub trait RandomnessSource: Send + Sync {
    fn name(&self) -> &'static str;

    fn mode(&self) -> RngMode;

    /// The seed the winners would derive from if the draw event were
    /// included in a block hashing to `block_hash`. A block proposer can
    /// evaluate this before publishing.
    fn seed_if_included(&self, state: &LotteryState, block_hash: &Hash32) -> Option<Hash32>;

    /// Runs the draw after the draw event was included in `block_hash`.
    fn draw(&self, state: &mut LotteryState, ledger: &mut Ledger, now: u64, block_hash: &Hash32) -> Result<(), LotteryError>;
}

#[derive(Debug, Default)]
pub struct NaiveBlockHash;

impl RandomnessSource for NaiveBlockHash {
    fn name(&self) -> &'static str {
        RngMode::NaiveBlockHash.name()
    }

    fn mode(&self) -> RngMode {
        RngMode::NaiveBlockHash
    }

    fn seed_if_included(&self, _state: &LotteryState, block_hash: &Hash32) -> Option<Hash32> {
        Some(*block_hash)
    }

    fn draw(&self, state: &mut LotteryState, ledger: &mut Ledger, now: u64, block_hash: &Hash32) -> Result<(), LotteryError> {
        state.draw_from_seed(ledger, now, *block_hash).map(|_| ())
    }
}

#[derive(Debug, Default)]
pub struct CommitReveal;

impl RandomnessSource for CommitReveal {
    fn name(&self) -> &'static str {
        RngMode::CommitReveal.name()
    }

    fn mode(&self) -> RngMode {
        RngMode::CommitReveal
    }

    fn seed_if_included(&self, state: &LotteryState, _block_hash: &Hash32) -> Option<Hash32> {
        state.preview_round_output()
    }

    fn draw(&self, state: &mut LotteryState, ledger: &mut Ledger, now: u64, _block_hash: &Hash32) -> Result<(), LotteryError> {
        state.draw(ledger, now).map(|_| ())
    }
}

/// How active certifiers respond to an admission request.
pub trait CertifierPolicy: Send + Sync {
    fn name(&self) -> &'static str;

    /// The set of certifiers approving `candidate`. `is_fake` tells the
    /// policy whether the candidate is a Sybil identity.
    fn votes(&self, state: &LotteryState, candidate: &Address, is_fake: bool) -> BTreeSet<Address>;
}

/// Certifiers approve genuine candidates and refuse fakes.
#[derive(Debug, Default)]
pub struct HonestRefuse;

impl CertifierPolicy for HonestRefuse {
    fn name(&self) -> &'static str {
        "honest-refuse"
    }

    fn votes(&self, state: &LotteryState, _candidate: &Address, is_fake: bool) -> BTreeSet<Address> {
        if is_fake {
            BTreeSet::new()
        } else {
            state.active_certifiers().iter().copied().collect()
        }
    }
}

/// Certifiers approve everyone.
#[derive(Debug, Default)]
pub struct Rubberstamp;

impl CertifierPolicy for Rubberstamp {
    fn name(&self) -> &'static str {
        "rubberstamp"
    }

    fn votes(&self, state: &LotteryState, _candidate: &Address, _is_fake: bool) -> BTreeSet<Address> {
        state.active_certifiers().iter().copied().collect()
    }
}

/// Name → implementation map for one strategy family.
pub struct Registry<T: ?Sized> {
    entries: BTreeMap<String, Arc<T>>,
}

impl<T: ?Sized> Default for Registry<T> {
    fn default() -> Self {
        Registry {
            entries: BTreeMap::new(),
        }
    }
}

impl<T: ?Sized> Registry<T> {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers `strategy` under `name`, replacing any previous entry.
    pub fn register(&mut self, name: impl Into<String>, strategy: Arc<T>) -> Option<Arc<T>> {
        self.entries.insert(name.into(), strategy)
    }

    pub fn get(&self, name: &str) -> Option<Arc<T>> {
        self.entries.get(name).cloned()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }
}

impl<T: ?Sized> fmt::Debug for Registry<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.entries.keys()).finish()
    }
}

/// The built-in randomness sources.
pub fn randomness_sources() -> Registry<dyn RandomnessSource> {
    let mut registry: Registry<dyn RandomnessSource> = Registry::new();
    for source in [
        Arc::new(NaiveBlockHash) as Arc<dyn RandomnessSource>,
        Arc::new(CommitReveal),
    ] {
        registry.register(source.name(), source);
    }
    registry
}

/// The built-in certifier policies.
pub fn certifier_policies() -> Registry<dyn CertifierPolicy> {
    let mut registry: Registry<dyn CertifierPolicy> = Registry::new();
    for policy in [
        Arc::new(HonestRefuse) as Arc<dyn CertifierPolicy>,
        Arc::new(Rubberstamp),
    ] {
        registry.register(policy.name(), policy);
    }
    registry
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtins_are_registered_under_their_names() {
        let sources = randomness_sources();
        assert_eq!(sources.names().collect::<Vec<_>>(), ["commit-reveal", "naive"]);
        for mode in [RngMode::NaiveBlockHash, RngMode::CommitReveal] {
            assert_eq!(sources.get(mode.name()).unwrap().mode(), mode);
            assert_eq!(RngMode::from_name(mode.name()), Some(mode));
        }
        let policies = certifier_policies();
        assert!(policies.get("honest-refuse").is_some());
        assert!(policies.get("rubberstamp").is_some());
        assert!(policies.get("bribed").is_none());
    }
}
