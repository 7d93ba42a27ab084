//! Seeded end-to-end runs of a scenario.

use std::collections::{BTreeMap, BTreeSet};
use std::time::Instant;

use rand::{Rng, RngCore};
use rayon::prelude::*;

use super::prng::{stream, Purpose, Stream};
use super::report::{aggregate, histogram_chi_square, AggregateReport, NodeAttackMetrics, PlayerSummary, RoundRecord, RunReport, SybilMetrics};
use super::scenario::{AttackerSpec, GuessStrategy, Scenario};
use crate::adversary::{sybil_admission_trial, sybil_spawn, BlockProduction, NodeAttacker, SybilAttacker, SybilIdentity};
use crate::chain::{Address, Event, EventKind, Ledger};
use crate::crypto::solve_pow;
use crate::lottery::{LotteryState, Phase, PoolMode};
use crate::registry::{certifier_policies, randomness_sources, CertifierPolicy, HonestRefuse, RandomnessSource};

/// Everything a finished run leaves behind, for reports and dumps.
pub struct Simulation {
    pub report: RunReport,
    pub ledger: Ledger,
    /// The last lottery event, settled or stuck where it failed.
    pub last_lottery: Option<LotteryState>,
    pub players: Vec<Address>,
}

struct Actors {
    players: Vec<Address>,
    index: BTreeMap<Address, usize>,
    miners: Vec<Address>,
    node_attacker: Option<NodeAttacker>,
    withhold_limit: u64,
    sybil: Option<(SybilAttacker, Vec<SybilIdentity>, std::sync::Arc<dyn CertifierPolicy>)>,
}

fn setup(scenario: &Scenario, ledger: &mut Ledger) -> Actors {
    let players: Vec<Address> = scenario
        .players
        .iter()
        .map(|p| {
            ledger
                .create_account(p.seed.as_bytes(), p.balance)
                .expect("player seeds are distinct")
        })
        .collect();
    let index = players.iter().enumerate().map(|(i, a)| (*a, i)).collect();
    let miners = (0..scenario.miners)
        .map(|i| {
            ledger
                .create_transaction_node(format!("miner-{i}").as_bytes())
                .expect("miner seeds are distinct")
        })
        .collect();
    let mut actors = Actors {
        players,
        index,
        miners,
        node_attacker: None,
        withhold_limit: crate::adversary::DEFAULT_WITHHOLD_LIMIT,
        sybil: None,
    };
    match &scenario.attacker {
        Some(AttackerSpec::Node(spec)) => {
            let address = ledger
                .create_transaction_node(spec.seed.as_bytes())
                .expect("attacker seed is distinct");
            actors.node_attacker = Some(NodeAttacker {
                address,
                colluder: actors.players[spec.colluder],
                mining_share: spec.mining_share,
                predicate: spec.predicate,
            });
            actors.withhold_limit = spec.withhold_limit;
        }
        Some(AttackerSpec::Sybil(spec)) => {
            let controller = ledger
                .create_account(spec.seed.as_bytes(), 0)
                .expect("attacker seed is distinct");
            let attacker = SybilAttacker::new(ledger, controller, spec.fake_count, spec.budget).expect("just created");
            let fakes = sybil_spawn(&attacker, spec.fake_count).expect("within fake_count");
            let policy = certifier_policies()
                .get(&spec.policy)
                .expect("validated at load");
            actors.sybil = Some((attacker, fakes, policy));
        }
        None => {}
    }
    actors
}

struct RoundContext<'a> {
    scenario: &'a Scenario,
    actors: &'a Actors,
    source: &'a dyn RandomnessSource,
    proposers: Stream,
    record: RoundRecord,
}

impl RoundContext<'_> {
    fn reject(&mut self, what: impl std::fmt::Display, err: impl std::fmt::Display) {
        self.record.rejections.push(format!("{what}: {err}"));
    }

    /// Advances one tick and has a uniformly chosen honest miner publish
    /// `events`.
    fn publish(&mut self, ledger: &mut Ledger, events: Vec<Event>) {
        ledger.advance_clock(1);
        let miners = &self.actors.miners;
        let miner = miners[self.proposers.gen_range(0..miners.len())];
        if let Err(e) = ledger.mine_block(&miner, events, self.scenario.block_difficulty) {
            self.reject("block", e);
        }
    }

    fn sign(&mut self, ledger: &Ledger, sender: &Address, kind: EventKind, out: &mut Vec<Event>) {
        match ledger.sign(sender, kind) {
            Ok(event) => out.push(event),
            Err(e) => self.reject("sign", e),
        }
    }
}

fn play_round(
    scenario: &Scenario,
    actors: &Actors,
    source: &dyn RandomnessSource,
    ledger: &mut Ledger,
    seed: u64,
    round: u64,
) -> (RoundRecord, Option<LotteryState>) {
    let mut ctx = RoundContext {
        scenario,
        actors,
        source,
        proposers: stream(seed, round, Purpose::Proposers),
        record: RoundRecord {
            round,
            lottery_id: 0,
            winners: Vec::new(),
            winning_players: Vec::new(),
            aborted: false,
            pool: 0,
            deposits: BTreeMap::new(),
            forfeits: BTreeMap::new(),
            phi_before_draw: 0,
            phi_after_draw: 0,
            payouts: BTreeMap::new(),
            withheld: 0,
            attacker_won: false,
            sybil_admitted: 0,
            sybil_spend: 0,
            rejections: Vec::new(),
        },
    };
    let mut keys_rng = stream(seed, round, Purpose::Keys);
    let mut guess_rng = stream(seed, round, Purpose::Guesses);
    let players = &actors.players;
    let host = players[0];

    let mut state = match LotteryState::deploy(ledger, host, scenario.config.clone(), ledger.clock()) {
        Ok(s) => s,
        Err(e) => {
            ctx.reject("deploy", e);
            return (ctx.record, None);
        }
    };
    let lottery_id = state.lottery_id();
    ctx.record.lottery_id = lottery_id;

    // Enrollment.
    let mut events = Vec::new();
    for (i, player) in players.iter().enumerate().skip(1) {
        let pow = solve_pow(state.join_challenge(player), scenario.config.pow_difficulty);
        let votes = HonestRefuse.votes(&state, player, false);
        ctx.sign(ledger, player, EventKind::JoinRequest { lottery_id, pow_nonce: pow.nonce }, &mut events);
        for certifier in &votes {
            ctx.sign(ledger, certifier, EventKind::Certify { lottery_id, candidate: *player }, &mut events);
        }
        if let Err(e) = state.add_player(ledger, *player, &pow, &votes, ledger.clock()) {
            ctx.reject(format!("player {i} join"), e);
        }
    }
    if let Some((attacker, fakes, policy)) = &actors.sybil {
        match sybil_admission_trial(&mut state, ledger, attacker, fakes, policy.as_ref()) {
            Ok(trial) => {
                ctx.record.sybil_admitted = trial.admitted;
                ctx.record.sybil_spend = trial.spent;
            }
            Err(e) => ctx.reject("sybil admission", e),
        }
    }
    ctx.publish(ledger, std::mem::take(&mut events));

    // Key upload.
    let now = ledger.clock();
    if let Err(e) = state.begin_key_upload(ledger, now) {
        ctx.reject("begin key upload", e);
        return (ctx.record, Some(state));
    }
    let mut keys: BTreeMap<usize, i64> = BTreeMap::new();
    for (i, player) in players.iter().enumerate() {
        let key = keys_rng.next_u64() as i64;
        match state.upload_key(ledger, *player, key, now) {
            Ok(deposit) => {
                keys.insert(i, key);
                ctx.record.deposits.insert(i, deposit);
                let commit_hash = crate::randao::commitment_hash(key);
                let round_id = state.round().expect("open").round_id();
                ctx.sign(ledger, player, EventKind::Commit { round_id, commit_hash, deposit }, &mut events);
            }
            Err(e) => ctx.reject(format!("player {i} upload key"), e),
        }
    }
    ctx.publish(ledger, std::mem::take(&mut events));

    // Betting.
    let commit_deadline = state.round().expect("open").commit_deadline();
    if ledger.clock() <= commit_deadline {
        ledger.advance_clock(commit_deadline + 1 - ledger.clock());
    }
    let now = ledger.clock();
    if let Err(e) = state.begin_betting(now) {
        ctx.reject("begin betting", e);
        return (ctx.record, Some(state));
    }
    let space = scenario.config.guess_space_size;
    for (i, (player, spec)) in players.iter().zip(&scenario.players).enumerate() {
        let guesses: Vec<u64> = match &spec.guesses {
            GuessStrategy::Uniform => (0..spec.shares).map(|_| guess_rng.gen_range(0..space)).collect(),
            GuessStrategy::Fixed(list) => list.clone(),
        };
        match state.buy_shares(ledger, *player, &guesses, now) {
            Ok(()) => ctx.sign(ledger, player, EventKind::BuyShares { lottery_id, guesses }, &mut events),
            Err(e) => ctx.reject(format!("player {i} buy shares"), e),
        }
    }
    for (i, (player, spec)) in players.iter().zip(&scenario.players).enumerate() {
        if spec.banned {
            if let Err(e) = state.ban(ledger, *player) {
                ctx.reject(format!("player {i} ban"), e);
            }
        }
    }
    ctx.publish(ledger, std::mem::take(&mut events));

    // Buffer: reveals.
    let now = ledger.clock();
    if let Err(e) = state.enter_buffer(now) {
        ctx.reject("enter buffer", e);
        return (ctx.record, Some(state));
    }
    for (i, key) in &keys {
        if !scenario.players[*i].reveals {
            continue;
        }
        let player = players[*i];
        match state.reveal_key(player, *key, now) {
            Ok(()) => {
                let round_id = state.round().expect("open").round_id();
                ctx.sign(ledger, &player, EventKind::Reveal { round_id, value: *key }, &mut events);
            }
            Err(e) => ctx.reject(format!("player {i} reveal"), e),
        }
    }
    ctx.publish(ledger, std::mem::take(&mut events));

    // Draw.
    let reveal_deadline = state.round().expect("open").reveal_deadline();
    if ledger.clock() < reveal_deadline {
        ledger.advance_clock(reveal_deadline - ledger.clock());
    }
    ctx.record.phi_before_draw = state.phi();
    let draw_event = match ledger.sign(&host, EventKind::Draw { lottery_id }) {
        Ok(e) => e,
        Err(e) => {
            ctx.reject("sign draw", e);
            return (ctx.record, Some(state));
        }
    };
    let production = BlockProduction {
        source: ctx.source,
        honest_miners: &actors.miners,
        attacker: actors.node_attacker.as_ref(),
        block_difficulty: scenario.block_difficulty,
        withhold_limit: actors.withhold_limit,
    };
    match production.include_draw(ledger, &mut state, Vec::new(), draw_event, &mut ctx.proposers) {
        Ok(outcome) => {
            ctx.record.withheld = outcome.withheld;
            ctx.record.attacker_won = outcome.attacker_won;
        }
        Err(e) => {
            ctx.reject("draw", e);
            return (ctx.record, Some(state));
        }
    }
    ctx.record.phi_after_draw = state.phi();
    let outcome = state.draw_outcome().expect("drawn").clone();
    ctx.record.aborted = outcome.aborted;
    ctx.record.winners = outcome.winners.iter().copied().collect();
    for (address, amount) in &outcome.forfeits {
        if let Some(i) = actors.index.get(address) {
            ctx.record.forfeits.insert(*i, *amount);
        }
    }

    // Settlement.
    if state.phase() == Phase::Drawn {
        if let Err(e) = state.settle(ledger) {
            ctx.reject("settle", e);
            return (ctx.record, Some(state));
        }
    }
    if let Some(settlement) = state.settlement() {
        ctx.record.pool = settlement.pool;
        for (address, amount) in &settlement.payouts {
            if let Some(i) = actors.index.get(address) {
                ctx.record.payouts.insert(*i, *amount);
            }
        }
    }
    let winners: BTreeSet<u64> = outcome.winners;
    ctx.record.winning_players = state
        .players()
        .values()
        .filter(|r| !r.banned && r.winning_shares(&winners) > 0)
        .filter_map(|r| actors.index.get(&r.address).copied())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    (ctx.record, Some(state))
}

const FORFEIT_NOTE: &str = "Players who commit a key but do not reveal it forfeit their deposit into the \
forfeiture pot; their purchased guesses are still scored and they can still win.";

const LITERAL_NOTE: &str = "Pool mode literal: the prize pool is forfeitures plus retained deposits; \
share payments stay locked in the contract escrow.";

/// Runs every round of `scenario` on one ledger with PRNG streams derived
/// from `seed`, keeping the final ledger for inspection.
pub fn simulate(scenario: &Scenario, seed: u64) -> Simulation {
    let started = Instant::now();
    let mut ledger = Ledger::new();
    let actors = setup(scenario, &mut ledger);
    let source = randomness_sources()
        .get(scenario.rng_mode.name())
        .expect("every mode is registered");

    let mut rounds = Vec::with_capacity(scenario.rounds as usize);
    let mut last_lottery = None;
    let mut payouts: BTreeMap<usize, u128> = BTreeMap::new();
    for round in 0..scenario.rounds {
        let (record, state) = play_round(scenario, &actors, source.as_ref(), &mut ledger, seed, round);
        for (i, amount) in &record.payouts {
            *payouts.entry(*i).or_default() += amount;
        }
        rounds.push(record);
        last_lottery = state;
    }

    let mut winner_histogram: BTreeMap<usize, u64> = (0..actors.players.len()).map(|i| (i, 0)).collect();
    for record in &rounds {
        for i in &record.winning_players {
            *winner_histogram.entry(*i).or_default() += 1;
        }
    }
    let players = actors
        .players
        .iter()
        .enumerate()
        .map(|(i, address)| PlayerSummary {
            index: i,
            seed: scenario.players[i].seed.clone(),
            address: *address,
            wins: winner_histogram[&i],
            total_payout: payouts.get(&i).copied().unwrap_or(0),
            final_balance: ledger.balance(address).unwrap_or(0),
        })
        .collect();

    let node_attack = actors.node_attacker.as_ref().map(|a| NodeAttackMetrics {
        mode: scenario.rng_mode.name().to_string(),
        mining_share: a.mining_share,
        attacker_wins: rounds.iter().filter(|r| r.attacker_won).count() as u64,
        total_rounds: rounds.len() as u64,
        withhold_count: rounds.iter().map(|r| r.withheld).sum(),
    });
    let sybil = actors.sybil.as_ref().map(|_| SybilMetrics {
        sybil_admitted: rounds.iter().map(|r| r.sybil_admitted as u64).sum(),
        sybil_spend: rounds.iter().map(|r| r.sybil_spend).sum(),
    });

    let mut notes = Vec::new();
    if rounds.iter().any(|r| !r.forfeits.is_empty()) {
        notes.push(FORFEIT_NOTE.to_string());
    }
    if scenario.config.pool_mode == PoolMode::PaperLiteral {
        notes.push(LITERAL_NOTE.to_string());
    }

    let report = RunReport {
        scenario_name: scenario.name.clone(),
        seed,
        mode: scenario.rng_mode.name().to_string(),
        pool_mode: scenario.config.pool_mode.name().to_string(),
        chi_square: histogram_chi_square(&winner_histogram),
        rounds,
        players,
        winner_histogram,
        conservation_residual: ledger.conservation_residual(),
        fee_sink: ledger.fee_sink(),
        minted: ledger.minted(),
        node_attack,
        sybil,
        notes,
        elapsed: started.elapsed().as_secs_f64(),
    };
    Simulation {
        report,
        ledger,
        last_lottery,
        players: actors.players,
    }
}

pub fn run_once(scenario: &Scenario, seed: u64) -> RunReport {
    simulate(scenario, seed).report
}

/// Runs seeds `base_seed .. base_seed + n_seeds` in parallel and folds the
/// reports in seed order.
pub fn run_many(scenario: &Scenario, n_seeds: u64) -> AggregateReport {
    let runs: Vec<RunReport> = (0..n_seeds)
        .into_par_iter()
        .map(|i| run_once(scenario, scenario.base_seed.wrapping_add(i)))
        .collect();
    aggregate(runs)
}
