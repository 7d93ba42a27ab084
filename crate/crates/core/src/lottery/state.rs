use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::winners::derive_winners;
use super::{compute_deposit, LotteryConfig, LotteryError, PoolMode};
use crate::chain::{Address, Ledger, Money};
use crate::crypto::{hash_parts, Hash32, PowProof};
use crate::randao::{commitment_hash, Finalization, RefundRoute, RngRound};

/// Protocol phases in the only order they may be visited.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Deployed,
    Enrolling,
    KeyUpload,
    Betting,
    Buffer,
    Drawn,
    Settled,
}

impl Phase {
    pub const ORDER: [Phase; 7] = [
        Phase::Deployed,
        Phase::Enrolling,
        Phase::KeyUpload,
        Phase::Betting,
        Phase::Buffer,
        Phase::Drawn,
        Phase::Settled,
    ];
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlayerRecord {
    pub address: Address,
    /// Every share bought, one entry per share.
    pub guesses: Vec<u64>,
    pub deposit: Money,
    /// Member of the active certifier set.
    pub auth: bool,
    pub joined_at: u64,
    pub banned: bool,
    pub stake_paid: Money,
    pub fees_paid: Money,
    pub deposit_refunded: Money,
    pub payout: Money,
    pub stake_refunded: Money,
}

impl PlayerRecord {
    fn new(address: Address, joined_at: u64) -> Self {
        PlayerRecord {
            address,
            guesses: Vec::new(),
            deposit: 0,
            auth: true,
            joined_at,
            banned: false,
            stake_paid: 0,
            fees_paid: 0,
            deposit_refunded: 0,
            payout: 0,
            stake_refunded: 0,
        }
    }

    /// Number of this player's shares that hit `winners`, with multiplicity.
    pub fn winning_shares(&self, winners: &BTreeSet<u64>) -> u64 {
        self.guesses.iter().filter(|g| winners.contains(g)).count() as u64
    }
}

/// What the draw step produced.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DrawOutcome {
    /// Seed the winners were derived from; absent when the round aborted.
    #[serde(with = "opt_hex")]
    pub seed: Option<Hash32>,
    pub winners: BTreeSet<u64>,
    pub forfeits: BTreeMap<Address, Money>,
    /// The randomness round aborted for lack of reveals and everyone was
    /// refunded.
    pub aborted: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Settlement {
    pub winning_shares_total: u64,
    pub pool: Money,
    pub payouts: BTreeMap<Address, Money>,
    /// Integer-division remainder (or an unclaimed pool) sent to the fee sink.
    pub to_fee_sink: Money,
    pub stakes_refunded: Money,
    /// Share payments left locked in the contract (literal pool mode only).
    pub frozen: Money,
    pub aborted: bool,
}

/// One lottery event from deployment to settlement.
///
/// The deploying host is recorded for auditing but no operation consults it:
/// every call takes the acting address as a plain argument and applies the
/// same rules to all players.
#[derive(Debug, Clone)]
pub struct LotteryState {
    lottery_id: u64,
    config: LotteryConfig,
    phase: Phase,
    phase_log: Vec<Phase>,
    players: BTreeMap<Address, PlayerRecord>,
    active_certifiers: Vec<Address>,
    banned: BTreeSet<Address>,
    phi: Money,
    round: Option<RngRound>,
    draw: Option<DrawOutcome>,
    settlement: Option<Settlement>,
    deployed_at: u64,
    host: Address,
}

impl LotteryState {
    pub fn deploy(ledger: &mut Ledger, host: Address, config: LotteryConfig, now: u64) -> Result<Self, LotteryError> {
        config.validate()?;
        ledger.account(&host)?;
        let lottery_id = ledger.allocate_round_id();
        Ok(LotteryState {
            lottery_id,
            config,
            phase: Phase::Enrolling,
            phase_log: vec![Phase::Deployed, Phase::Enrolling],
            players: BTreeMap::from([(host, PlayerRecord::new(host, now))]),
            active_certifiers: vec![host],
            banned: BTreeSet::new(),
            phi: 0,
            round: None,
            draw: None,
            settlement: None,
            deployed_at: now,
            host,
        })
    }

    pub fn lottery_id(&self) -> u64 {
        self.lottery_id
    }

    pub fn config(&self) -> &LotteryConfig {
        &self.config
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn phase_log(&self) -> &[Phase] {
        &self.phase_log
    }

    pub fn players(&self) -> &BTreeMap<Address, PlayerRecord> {
        &self.players
    }

    pub fn player(&self, address: &Address) -> Option<&PlayerRecord> {
        self.players.get(address)
    }

    pub fn active_certifiers(&self) -> &[Address] {
        &self.active_certifiers
    }

    pub fn banned(&self) -> &BTreeSet<Address> {
        &self.banned
    }

    pub fn phi(&self) -> Money {
        self.phi
    }

    pub fn round(&self) -> Option<&RngRound> {
        self.round.as_ref()
    }

    pub fn winners(&self) -> Option<&BTreeSet<u64>> {
        self.draw.as_ref().filter(|d| !d.aborted).map(|d| &d.winners)
    }

    pub fn draw_outcome(&self) -> Option<&DrawOutcome> {
        self.draw.as_ref()
    }

    pub fn settlement(&self) -> Option<&Settlement> {
        self.settlement.as_ref()
    }

    pub fn deployed_at(&self) -> u64 {
        self.deployed_at
    }

    pub fn host(&self) -> Address {
        self.host
    }

    /// Money currently escrowed in the share-payment bucket.
    pub fn stake_pool(&self, ledger: &Ledger) -> Money {
        ledger.escrow(&self.stakes_bucket())
    }

    pub fn phi_bucket(&self) -> String {
        format!("lottery:{}:phi", self.lottery_id)
    }

    pub fn stakes_bucket(&self) -> String {
        format!("lottery:{}:stakes", self.lottery_id)
    }

    pub fn deposits_bucket(&self) -> String {
        format!("lottery:{}:deposits", self.lottery_id)
    }

    fn pool_bucket(&self) -> String {
        format!("lottery:{}:pool", self.lottery_id)
    }

    fn expect_phase(&self, expected: Phase) -> Result<(), LotteryError> {
        if self.phase == expected {
            Ok(())
        } else {
            Err(LotteryError::WrongPhase {
                expected,
                actual: self.phase,
            })
        }
    }

    fn enter(&mut self, next: Phase) {
        debug_assert!(next > self.phase);
        self.phase = next;
        self.phase_log.push(next);
    }

    fn active_player(&self, player: &Address) -> Result<&PlayerRecord, LotteryError> {
        let record = self
            .players
            .get(player)
            .ok_or(LotteryError::NotAPlayer(*player))?;
        if record.banned {
            return Err(LotteryError::Banned(*player));
        }
        Ok(record)
    }

    /// The puzzle a candidate must solve to join this event.
    pub fn join_challenge(&self, candidate: &Address) -> Hash32 {
        hash_parts(&[
            b"delottery-join",
            &self.lottery_id.to_le_bytes(),
            candidate.as_bytes(),
        ])
    }

    /// Admits `candidate` if its proof of work checks out and every current
    /// certifier voted for it. When the certifier set is full, one member is
    /// rotated out according to the configured eviction policy.
    pub fn add_player(
        &mut self,
        ledger: &Ledger,
        candidate: Address,
        pow: &PowProof,
        cert_votes: &BTreeSet<Address>,
        now: u64,
    ) -> Result<(), LotteryError> {
        self.expect_phase(Phase::Enrolling)?;
        ledger.account(&candidate)?;
        if self.players.contains_key(&candidate) {
            return Err(LotteryError::DuplicatePlayer(candidate));
        }
        let pow_ok = pow.challenge == self.join_challenge(&candidate)
            && pow.difficulty <= self.config.pow_difficulty
            && pow.verify();
        if !pow_ok {
            return Err(LotteryError::PowRejected(candidate));
        }
        if let Some(missing) = self
            .active_certifiers
            .iter()
            .find(|a| !cert_votes.contains(a))
        {
            return Err(LotteryError::MissingCertification(*missing));
        }

        self.players.insert(candidate, PlayerRecord::new(candidate, now));
        if self.active_certifiers.len() >= self.config.cert_cap {
            let evict_idx = self.eviction_index();
            let evicted = self.active_certifiers.remove(evict_idx);
            if let Some(record) = self.players.get_mut(&evicted) {
                record.auth = false;
            }
        }
        self.active_certifiers.push(candidate);
        Ok(())
    }

    fn eviction_index(&self) -> usize {
        let times = self
            .active_certifiers
            .iter()
            .map(|a| self.players[a].joined_at);
        let indexed = times.enumerate();
        match self.config.eviction {
            // Latest join time; the later position wins a tie.
            super::EvictionPolicy::MostRecent => indexed
                .max_by_key(|(i, t)| (*t, *i))
                .map(|(i, _)| i),
            super::EvictionPolicy::Oldest => indexed
                .min_by_key(|(i, t)| (*t, *i))
                .map(|(i, _)| i),
        }
        .expect("certifier set is non-empty when full")
    }

    /// Marks `player` as illegal. Their key is excluded from the draw, their
    /// deposit is forfeited at the draw, and any share payments they made are
    /// captured into φ.
    pub fn ban(&mut self, ledger: &mut Ledger, player: Address) -> Result<(), LotteryError> {
        if !(Phase::Enrolling..=Phase::Buffer).contains(&self.phase) {
            return Err(LotteryError::WrongPhase {
                expected: Phase::Buffer,
                actual: self.phase,
            });
        }
        let stakes_bucket = self.stakes_bucket();
        let phi_bucket = self.phi_bucket();
        let record = self
            .players
            .get_mut(&player)
            .ok_or(LotteryError::NotAPlayer(player))?;
        if record.banned {
            return Err(LotteryError::Banned(player));
        }
        ledger.move_escrow(&stakes_bucket, &phi_bucket, record.stake_paid)?;
        self.phi += record.stake_paid;
        record.banned = true;
        record.auth = false;
        record.guesses.clear();
        self.banned.insert(player);
        self.active_certifiers.retain(|a| *a != player);
        Ok(())
    }

    pub fn begin_key_upload(&mut self, ledger: &mut Ledger, now: u64) -> Result<(), LotteryError> {
        self.expect_phase(Phase::Enrolling)?;
        let round = RngRound::open(ledger, now, self.config.bet_duration, self.config.buffer_duration)?;
        self.round = Some(round);
        self.enter(Phase::KeyUpload);
        Ok(())
    }

    /// Commits `H(key)` and escrows the player's deposit.
    pub fn upload_key(&mut self, ledger: &mut Ledger, player: Address, key: i64, now: u64) -> Result<Money, LotteryError> {
        self.expect_phase(Phase::KeyUpload)?;
        self.active_player(&player)?;
        let balance = ledger.balance(&player)?;
        let deposit = compute_deposit(self.config.share_price, self.config.security_factor, balance)?;
        let round = self.round.as_mut().expect("round opened with key upload");
        round.commit(ledger, player, commitment_hash(key), deposit, now)?;
        self.players
            .get_mut(&player)
            .expect("checked above")
            .deposit = deposit;
        Ok(deposit)
    }

    /// Closes key upload once the commit window has elapsed.
    pub fn begin_betting(&mut self, now: u64) -> Result<(), LotteryError> {
        self.expect_phase(Phase::KeyUpload)?;
        let deadline = self.round.as_ref().expect("round open").commit_deadline();
        if now <= deadline {
            return Err(LotteryError::TooEarly { now, opens: deadline + 1 });
        }
        self.enter(Phase::Betting);
        Ok(())
    }

    /// Buys one share per entry of `guesses`. Each share costs the share
    /// price (into the stake pool) plus the per-share fee (into the fee sink).
    pub fn buy_shares(&mut self, ledger: &mut Ledger, player: Address, guesses: &[u64], _now: u64) -> Result<(), LotteryError> {
        self.expect_phase(Phase::Betting)?;
        self.active_player(&player)?;
        if let Some(bad) = guesses
            .iter()
            .find(|g| **g >= self.config.guess_space_size)
        {
            return Err(LotteryError::GuessOutOfRange {
                guess: *bad,
                space: self.config.guess_space_size,
            });
        }
        if guesses.is_empty() {
            return Ok(());
        }
        let shares = guesses.len() as Money;
        let fee = self.config.fee_per_share();
        let stake = shares * self.config.share_price;
        let fees = shares * fee;
        let balance = ledger.balance(&player)?;
        if balance < stake + fees {
            return Err(LotteryError::Ledger(crate::chain::ChainError::InsufficientBalance {
                account: player,
                needed: stake + fees,
                available: balance,
            }));
        }
        ledger.lock(&player, &self.stakes_bucket(), stake)?;
        ledger.charge_fee(&player, fees)?;
        let record = self.players.get_mut(&player).expect("checked above");
        record.guesses.extend_from_slice(guesses);
        record.stake_paid += stake;
        record.fees_paid += fees;
        Ok(())
    }

    pub fn enter_buffer(&mut self, now: u64) -> Result<(), LotteryError> {
        self.expect_phase(Phase::Betting)?;
        let opens = self.round.as_ref().expect("round open").commit_deadline() + 1;
        if now < opens {
            return Err(LotteryError::TooEarly { now, opens });
        }
        self.enter(Phase::Buffer);
        Ok(())
    }

    /// Discloses a previously committed key. Only accepted during the buffer.
    pub fn reveal_key(&mut self, player: Address, key: i64, now: u64) -> Result<(), LotteryError> {
        self.expect_phase(Phase::Buffer)?;
        self.players
            .get(&player)
            .ok_or(LotteryError::NotAPlayer(player))?;
        let round = self.round.as_mut().expect("round open");
        round.reveal(player, key, now)?;
        Ok(())
    }

    /// The seed the draw would use if it ran now: the randomness round's
    /// output over the keys of non-banned players.
    pub fn preview_round_output(&self) -> Option<Hash32> {
        self.round.as_ref()?.preview_output(&self.banned)
    }

    pub fn winners_for_seed(&self, seed: &Hash32) -> BTreeSet<u64> {
        derive_winners(seed, self.config.guess_space_size, self.config.winning_draws)
    }

    /// Finalizes the randomness round and fixes the winning set from its
    /// output. If nobody eligible revealed, the event aborts: deposits and
    /// share payments are refunded and the state goes straight to `Settled`.
    pub fn draw(&mut self, ledger: &mut Ledger, now: u64) -> Result<&DrawOutcome, LotteryError> {
        self.draw_inner(ledger, now, None)
    }

    /// Draw variant where the winners come from an externally supplied seed
    /// (a block hash) instead of the round output. The round is still
    /// finalized so deposits are refunded or forfeited as usual.
    pub fn draw_from_seed(&mut self, ledger: &mut Ledger, now: u64, seed: Hash32) -> Result<&DrawOutcome, LotteryError> {
        self.draw_inner(ledger, now, Some(seed))
    }

    fn draw_inner(&mut self, ledger: &mut Ledger, now: u64, external_seed: Option<Hash32>) -> Result<&DrawOutcome, LotteryError> {
        self.expect_phase(Phase::Buffer)?;
        let refund_route = match self.config.pool_mode {
            PoolMode::ConservationConsistent => RefundRoute::Committers,
            PoolMode::PaperLiteral => RefundRoute::Bucket(self.deposits_bucket()),
        };
        let phi_bucket = self.phi_bucket();
        let round = self.round.as_mut().expect("round open");
        let finalization = round.finalize_excluding(ledger, now, &self.banned, &phi_bucket, &refund_route)?;

        let (round_seed, forfeits) = match &finalization {
            Finalization::Drawn {
                output, forfeits, ..
            } => (Some(*output), forfeits.clone()),
            Finalization::NoEntropy { .. } => (None, BTreeMap::new()),
        };
        let deposits_returned = matches!(finalization, Finalization::NoEntropy { .. })
            || self.config.pool_mode == PoolMode::ConservationConsistent;
        if deposits_returned {
            for (address, amount) in finalization.refunds() {
                self.players
                    .get_mut(address)
                    .expect("committers are players")
                    .deposit_refunded = *amount;
            }
        }
        self.phi += forfeits.values().sum::<Money>();

        let seed = external_seed.or(round_seed);
        let outcome = DrawOutcome {
            seed,
            winners: seed
                .map(|s| self.winners_for_seed(&s))
                .unwrap_or_default(),
            forfeits,
            aborted: seed.is_none(),
        };
        self.draw = Some(outcome);
        self.enter(Phase::Drawn);
        if seed.is_none() {
            self.abort_refund(ledger)?;
        }
        Ok(self.draw.as_ref().expect("just set"))
    }

    /// Abort path: share payments go back to their payers and whatever φ
    /// was captured from banned players goes to the fee sink.
    fn abort_refund(&mut self, ledger: &mut Ledger) -> Result<(), LotteryError> {
        let stakes_bucket = self.stakes_bucket();
        let mut refunded = 0;
        for record in self.players.values_mut().filter(|r| !r.banned) {
            ledger.release(&stakes_bucket, &record.address, record.stake_paid)?;
            record.stake_refunded = record.stake_paid;
            refunded += record.stake_paid;
        }
        ledger.escrow_to_fee_sink(&self.phi_bucket(), self.phi)?;
        self.settlement = Some(Settlement {
            to_fee_sink: self.phi,
            stakes_refunded: refunded,
            aborted: true,
            ..Settlement::default()
        });
        self.enter(Phase::Settled);
        Ok(())
    }

    /// Size of the prize pool under the configured pool mode.
    pub fn compute_prize_pool(&self, ledger: &Ledger) -> Result<Money, LotteryError> {
        if self.phase != Phase::Drawn && self.phase != Phase::Settled {
            return Err(LotteryError::WrongPhase {
                expected: Phase::Drawn,
                actual: self.phase,
            });
        }
        if let Some(settlement) = &self.settlement {
            return Ok(settlement.pool);
        }
        Ok(prize_pool(
            self.config.pool_mode,
            self.phi,
            ledger.escrow(&self.deposits_bucket()),
            self.stake_pool(ledger),
        ))
    }

    pub fn winning_shares_total(&self) -> u64 {
        let Some(winners) = self.winners() else {
            return 0;
        };
        self.players
            .values()
            .filter(|r| !r.banned)
            .map(|r| r.winning_shares(winners))
            .sum()
    }

    /// Pays each winning share `pool / N_w`, rounding down; the remainder
    /// goes to the fee sink.
    pub fn settle(&mut self, ledger: &mut Ledger) -> Result<&Settlement, LotteryError> {
        self.expect_phase(Phase::Drawn)?;
        let winners = self.winners().cloned().unwrap_or_default();
        let pool = self.compute_prize_pool(ledger)?;
        let pool_bucket = self.pool_bucket();
        let stakes_bucket = self.stakes_bucket();

        ledger.move_escrow(&self.phi_bucket(), &pool_bucket, self.phi)?;
        let second_source = match self.config.pool_mode {
            PoolMode::ConservationConsistent => stakes_bucket.clone(),
            PoolMode::PaperLiteral => self.deposits_bucket(),
        };
        let second_amount = ledger.escrow(&second_source);
        ledger.move_escrow(&second_source, &pool_bucket, second_amount)?;
        debug_assert_eq!(ledger.escrow(&pool_bucket), pool);

        let n_w = self.winning_shares_total();
        let mut settlement = Settlement {
            winning_shares_total: n_w,
            pool,
            ..Settlement::default()
        };

        if n_w > 0 {
            let mut paid = 0;
            for record in self.players.values_mut().filter(|r| !r.banned) {
                let shares = record.winning_shares(&winners);
                if shares == 0 {
                    continue;
                }
                let payout = Money::from(shares) * pool / Money::from(n_w);
                ledger.release(&pool_bucket, &record.address, payout)?;
                record.payout = payout;
                settlement.payouts.insert(record.address, payout);
                paid += payout;
            }
            settlement.to_fee_sink = pool - paid;
            ledger.escrow_to_fee_sink(&pool_bucket, pool - paid)?;
        } else {
            match self.config.pool_mode {
                PoolMode::ConservationConsistent => {
                    for record in self.players.values_mut().filter(|r| !r.banned) {
                        ledger.release(&pool_bucket, &record.address, record.stake_paid)?;
                        record.stake_refunded = record.stake_paid;
                        settlement.stakes_refunded += record.stake_paid;
                    }
                    settlement.to_fee_sink = pool - settlement.stakes_refunded;
                }
                PoolMode::PaperLiteral => settlement.to_fee_sink = pool,
            }
            ledger.escrow_to_fee_sink(&pool_bucket, settlement.to_fee_sink)?;
        }
        settlement.frozen = ledger.escrow(&stakes_bucket);
        self.settlement = Some(settlement);
        self.enter(Phase::Settled);
        Ok(self.settlement.as_ref().expect("just set"))
    }

    /// One line per player in address order:
    /// `address_hex,shares,winning_shares,payout,deposit_refunded,final_balance`.
    pub fn settlement_report(&self, ledger: &Ledger) -> String {
        let winners = self.winners().cloned().unwrap_or_default();
        let mut out = String::new();
        for record in self.players.values() {
            let balance = ledger.balance(&record.address).unwrap_or(0);
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                record.address.to_hex(),
                record.guesses.len(),
                if record.banned { 0 } else { record.winning_shares(&winners) },
                record.payout,
                record.deposit_refunded,
                balance
            );
        }
        out
    }
}

/// Prize pool for a pool mode given the current pots.
pub fn prize_pool(mode: PoolMode, phi: Money, retained_deposits: Money, stake_pool: Money) -> Money {
    match mode {
        PoolMode::PaperLiteral => phi + retained_deposits,
        PoolMode::ConservationConsistent => phi + stake_pool,
    }
}

mod opt_hex {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(value: &Option<[u8; 32]>, serializer: S) -> Result<S::Ok, S::Error> {
        match value {
            Some(bytes) => serializer.serialize_some(&hex::encode(bytes)),
            None => serializer.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(deserializer: D) -> Result<Option<[u8; 32]>, D::Error> {
        let text: Option<String> = Option::deserialize(deserializer)?;
        text.map(|t| {
            hex::decode(&t)
                .map_err(serde::de::Error::custom)?
                .try_into()
                .map_err(|_| serde::de::Error::custom("expected 32 bytes"))
        })
        .transpose()
    }
}
