//! Block-withholding against the draw.
//!
//! A transaction node that gets to propose the block carrying the draw event
//! can compute the winners that block would produce. If its colluding
//! player would not win, it publishes the block without the draw event and
//! waits for another chance. Against block-hash randomness every retry is a
//! fresh draw; against commit-reveal the winners are already fixed, so
//! withholding only delays the result.

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use super::AdversaryError;
use crate::chain::{Address, Event, EventKind, Ledger};
use crate::crypto::Target;
use crate::lottery::LotteryState;
use crate::registry::{CommitReveal, NaiveBlockHash, RandomnessSource};

/// Consecutive withholdings after which the draw event is force-included.
pub const DEFAULT_WITHHOLD_LIMIT: u64 = 1_000;

/// The test an attacking proposer applies before including the draw.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InclusionPredicate {
    /// Include iff at least one attacker guess wins.
    #[default]
    Intersects,
    /// Include iff every attacker guess wins.
    Subset,
}

impl InclusionPredicate {
    pub fn holds(&self, guesses: &[u64], winners: &BTreeSet<u64>) -> bool {
        match self {
            InclusionPredicate::Intersects => guesses.iter().any(|g| winners.contains(g)),
            InclusionPredicate::Subset => guesses.iter().all(|g| winners.contains(g)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeAttacker {
    /// The attacker's transaction node.
    pub address: Address,
    /// Regular player account that holds the attacker's bets.
    pub colluder: Address,
    /// Probability that the attacker proposes any given block.
    pub mining_share: f64,
    #[serde(default)]
    pub predicate: InclusionPredicate,
}

/// Returns the events to publish: with the draw event iff the predicate
/// says the attacker's guesses win under `winners_if_included`.
pub fn node_attack_filter(
    mut pow_events: Vec<Event>,
    lottery_event: Event,
    attacker_guesses: &[u64],
    winners_if_included: &BTreeSet<u64>,
    predicate: InclusionPredicate,
) -> Vec<Event> {
    if predicate.holds(attacker_guesses, winners_if_included) {
        pow_events.push(lottery_event);
    }
    pow_events
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundOutcome {
    pub winners: BTreeSet<u64>,
    pub attacker_won: bool,
    /// Blocks the attacker published without the draw event.
    pub withheld: u64,
    /// Blocks mined until the draw landed, including that one.
    pub blocks: u64,
    pub aborted: bool,
}

/// Block production around the draw: who may propose, which randomness
/// source the lottery uses, and the attacker if any.
pub struct BlockProduction<'a> {
    pub source: &'a dyn RandomnessSource,
    pub honest_miners: &'a [Address],
    pub attacker: Option<&'a NodeAttacker>,
    pub block_difficulty: Target,
    pub withhold_limit: u64,
}

impl BlockProduction<'_> {
    fn pick_proposer<R: Rng>(&self, rng: &mut R) -> Result<(Address, bool), AdversaryError> {
        if let Some(attacker) = self.attacker {
            let share = attacker.mining_share.clamp(0.0, 1.0);
            if self.honest_miners.is_empty() || rng.gen_bool(share) {
                return Ok((attacker.address, true));
            }
        }
        if self.honest_miners.is_empty() {
            return Err(AdversaryError::NoProposers);
        }
        let idx = rng.gen_range(0..self.honest_miners.len());
        Ok((self.honest_miners[idx], false))
    }

    /// Mines one block per tick until `draw_event` is included, then runs
    /// the draw. `pending` goes into the first block mined.
    pub fn include_draw<R: Rng>(
        &self,
        ledger: &mut Ledger,
        state: &mut LotteryState,
        mut pending: Vec<Event>,
        draw_event: Event,
        rng: &mut R,
    ) -> Result<RoundOutcome, AdversaryError> {
        let mut withheld = 0;
        let mut blocks = 0;
        loop {
            ledger.advance_clock(1);
            blocks += 1;
            let (proposer, is_attacker) = self.pick_proposer(rng)?;
            let mut candidate_events = pending.clone();
            candidate_events.push(draw_event.clone());
            let candidate = ledger.prepare_block(&proposer, candidate_events, self.block_difficulty)?;

            if let (true, Some(attacker)) = (is_attacker && withheld < self.withhold_limit, self.attacker) {
                let winners = self
                    .source
                    .seed_if_included(state, &candidate.hash)
                    .map(|seed| state.winners_for_seed(&seed))
                    .unwrap_or_default();
                let guesses = colluder_guesses(state, &attacker.colluder);
                let published = node_attack_filter(
                    std::mem::take(&mut pending),
                    draw_event.clone(),
                    &guesses,
                    &winners,
                    attacker.predicate,
                );
                if published.last() != Some(&draw_event) {
                    ledger.mine_block(&proposer, published, self.block_difficulty)?;
                    withheld += 1;
                    continue;
                }
            }

            let block_hash = candidate.hash;
            ledger.commit_block(candidate)?;
            let now = ledger.clock();
            self.source.draw(state, ledger, now, &block_hash)?;
            let outcome = state.draw_outcome().expect("draw ran");
            let attacker_won = self.attacker.is_some_and(|a| {
                InclusionPredicate::Intersects.holds(&colluder_guesses(state, &a.colluder), &outcome.winners)
            });
            return Ok(RoundOutcome {
                winners: outcome.winners.clone(),
                attacker_won,
                withheld,
                blocks,
                aborted: outcome.aborted,
            });
        }
    }
}

fn colluder_guesses(state: &LotteryState, colluder: &Address) -> Vec<u64> {
    state
        .player(colluder)
        .filter(|r| !r.banned)
        .map(|r| r.guesses.clone())
        .unwrap_or_default()
}

/// Signs a draw event for `trigger` and runs [`BlockProduction::include_draw`].
#[allow(clippy::too_many_arguments)]
pub fn include_draw_event(
    ledger: &mut Ledger,
    state: &mut LotteryState,
    source: &dyn RandomnessSource,
    attacker: Option<&NodeAttacker>,
    honest_miners: &[Address],
    trigger: &Address,
    block_difficulty: Target,
    rng_seed: u64,
) -> Result<RoundOutcome, AdversaryError> {
    let draw_event = ledger.sign(
        trigger,
        EventKind::Draw {
            lottery_id: state.lottery_id(),
        },
    )?;
    let production = BlockProduction {
        source,
        honest_miners,
        attacker,
        block_difficulty,
        withhold_limit: DEFAULT_WITHHOLD_LIMIT,
    };
    let mut rng = ChaCha20Rng::seed_from_u64(rng_seed);
    production.include_draw(ledger, state, Vec::new(), draw_event, &mut rng)
}

/// One draw under block-hash randomness with a possibly withholding
/// proposer. `state` must be in the buffer phase with the reveal window
/// closed.
pub fn run_naive_mode_round(
    ledger: &mut Ledger,
    state: &mut LotteryState,
    attacker: &NodeAttacker,
    honest_miners: &[Address],
    trigger: &Address,
    rng_seed: u64,
) -> Result<RoundOutcome, AdversaryError> {
    include_draw_event(
        ledger,
        state,
        &NaiveBlockHash,
        Some(attacker),
        honest_miners,
        trigger,
        Target::MAX,
        rng_seed,
    )
}

/// Same as [`run_naive_mode_round`] but the winners come from the
/// commit-reveal output.
pub fn run_commit_reveal_mode_round(
    ledger: &mut Ledger,
    state: &mut LotteryState,
    attacker: &NodeAttacker,
    honest_miners: &[Address],
    trigger: &Address,
    rng_seed: u64,
) -> Result<RoundOutcome, AdversaryError> {
    include_draw_event(
        ledger,
        state,
        &CommitReveal,
        Some(attacker),
        honest_miners,
        trigger,
        Target::MAX,
        rng_seed,
    )
}
