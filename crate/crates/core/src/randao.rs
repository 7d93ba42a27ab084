//! Commit-reveal randomness rounds with forfeitable deposits.
//!
//! A round runs in two clock-driven windows. During the commit window each
//! participant escrows a deposit together with `H(s)` for a secret 64-bit
//! value `s`. During the reveal window participants disclose `s`; the round
//! checks it against the stored hash. At finalization the revealed values are
//! XOR-folded in ascending committer-address order and hashed with the round
//! id to produce the output. Honest revealers get their deposit back, silent
//! committers lose theirs.
//!
//! Both deadlines are inclusive: a commit at exactly `commit_deadline` is
//! accepted, and the reveal window is `commit_deadline < now <= reveal_deadline`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chain::{Address, ChainError, Ledger, Money};
use crate::crypto::{hash, hash_parts, Hash32};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RngError {
    #[error("commit and reveal windows must each be at least one tick")]
    ZeroWindow,
    #[error("commit window closed at tick {deadline} (now {now})")]
    CommitClosed { now: u64, deadline: u64 },
    #[error("transaction node {0} may not contribute randomness")]
    TransactionNode(Address),
    #[error("{0} already committed this round")]
    DuplicateCommit(Address),
    #[error("deposit must be positive")]
    ZeroDeposit,
    #[error("reveal at tick {now} outside window ({opens}, {closes}]")]
    RevealOutsideWindow { now: u64, opens: u64, closes: u64 },
    #[error("{0} has no commitment in this round")]
    NoCommitment(Address),
    #[error("revealed value does not match the commitment of {0}")]
    BindingViolation(Address),
    #[error("{0} already revealed")]
    AlreadyRevealed(Address),
    #[error("round cannot finalize before tick {after} has passed (now {now})")]
    RevealWindowOpen { now: u64, after: u64 },
    #[error("round {0} is already finalized")]
    AlreadyFinalized(u64),
    #[error(transparent)]
    Ledger(#[from] ChainError),
}

/// Bit-exact encoding of a secret value: 8-byte little-endian two's complement.
pub fn encode_value(value: i64) -> [u8; 8] {
    value.to_le_bytes()
}

/// `H(encode(value))`, the hash a participant publishes at commit time.
pub fn commitment_hash(value: i64) -> Hash32 {
    hash(&encode_value(value))
}

/// The combiner: `H(xor_fold(values) ‖ round_id_le)`.
///
/// XOR is order-independent, so the caller's iteration order does not
/// matter; rounds iterate in address order anyway for transcript stability.
pub fn combine<I: IntoIterator<Item = i64>>(values: I, round_id: u64) -> Hash32 {
    let folded = values
        .into_iter()
        .fold([0u8; 8], |mut acc, v| {
            for (a, b) in acc.iter_mut().zip(encode_value(v)) {
                *a ^= b;
            }
            acc
        });
    hash_parts(&[&folded, &round_id.to_le_bytes()])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RoundState {
    Committing,
    Revealing,
    Finalized,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Commitment {
    pub committer: Address,
    #[serde(with = "crate::crypto::hex_bytes")]
    pub commit_hash: Hash32,
    pub deposit: Money,
    pub committed_at: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Reveal {
    pub committer: Address,
    pub value: i64,
}

/// Where the refundable deposits of valid revealers go at finalization.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RefundRoute {
    /// Back to each committer's balance.
    Committers,
    /// Retained in the named escrow bucket instead.
    Bucket(String),
}

/// Result of finalizing a round.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Finalization {
    Drawn {
        output: Hash32,
        /// Deposits of valid revealers, keyed by committer.
        refunds: BTreeMap<Address, Money>,
        /// Deposits of silent or excluded committers.
        forfeits: BTreeMap<Address, Money>,
    },
    /// No valid reveal: the round aborted and every deposit went back to
    /// its committer.
    NoEntropy { refunds: BTreeMap<Address, Money> },
}

impl Finalization {
    pub fn output(&self) -> Option<Hash32> {
        match self {
            Finalization::Drawn { output, .. } => Some(*output),
            Finalization::NoEntropy { .. } => None,
        }
    }

    pub fn refunds(&self) -> &BTreeMap<Address, Money> {
        match self {
            Finalization::Drawn { refunds, .. } | Finalization::NoEntropy { refunds } => refunds,
        }
    }

    pub fn forfeited(&self) -> Money {
        match self {
            Finalization::Drawn { forfeits, .. } => forfeits.values().sum(),
            Finalization::NoEntropy { .. } => 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RngRound {
    round_id: u64,
    commit_deadline: u64,
    reveal_deadline: u64,
    commitments: BTreeMap<Address, Commitment>,
    reveals: BTreeMap<Address, Reveal>,
    state: RoundState,
    output: Option<Hash32>,
    forfeited: Money,
}

impl RngRound {
    /// Opens a round with a fresh id drawn from the ledger.
    pub fn open(ledger: &mut Ledger, now: u64, commit_window: u64, reveal_window: u64) -> Result<Self, RngError> {
        if commit_window == 0 || reveal_window == 0 {
            return Err(RngError::ZeroWindow);
        }
        Self::with_id(ledger.allocate_round_id(), now, commit_window, reveal_window)
    }

    pub fn with_id(round_id: u64, now: u64, commit_window: u64, reveal_window: u64) -> Result<Self, RngError> {
        if commit_window == 0 || reveal_window == 0 {
            return Err(RngError::ZeroWindow);
        }
        let commit_deadline = now + commit_window;
        Ok(RngRound {
            round_id,
            commit_deadline,
            reveal_deadline: commit_deadline + reveal_window,
            commitments: BTreeMap::new(),
            reveals: BTreeMap::new(),
            state: RoundState::Committing,
            output: None,
            forfeited: 0,
        })
    }

    pub fn round_id(&self) -> u64 {
        self.round_id
    }

    pub fn commit_deadline(&self) -> u64 {
        self.commit_deadline
    }

    pub fn reveal_deadline(&self) -> u64 {
        self.reveal_deadline
    }

    pub fn state(&self) -> RoundState {
        self.state
    }

    pub fn output(&self) -> Option<Hash32> {
        self.output
    }

    pub fn forfeited(&self) -> Money {
        self.forfeited
    }

    pub fn commitments(&self) -> &BTreeMap<Address, Commitment> {
        &self.commitments
    }

    pub fn reveals(&self) -> &BTreeMap<Address, Reveal> {
        &self.reveals
    }

    /// Escrow bucket holding this round's deposits.
    pub fn escrow_bucket(&self) -> String {
        format!("round:{}", self.round_id)
    }

    fn sync(&mut self, now: u64) {
        if self.state == RoundState::Committing && now > self.commit_deadline {
            self.state = RoundState::Revealing;
        }
    }

    pub fn commit(
        &mut self,
        ledger: &mut Ledger,
        player: Address,
        commit_hash: Hash32,
        deposit: Money,
        now: u64,
    ) -> Result<(), RngError> {
        self.sync(now);
        if self.state != RoundState::Committing {
            return Err(RngError::CommitClosed {
                now,
                deadline: self.commit_deadline,
            });
        }
        if ledger.account(&player)?.is_transaction_node {
            return Err(RngError::TransactionNode(player));
        }
        if self.commitments.contains_key(&player) {
            return Err(RngError::DuplicateCommit(player));
        }
        if deposit == 0 {
            return Err(RngError::ZeroDeposit);
        }
        ledger.lock(&player, &self.escrow_bucket(), deposit)?;
        self.commitments.insert(
            player,
            Commitment {
                committer: player,
                commit_hash,
                deposit,
                committed_at: now,
            },
        );
        Ok(())
    }

    pub fn reveal(&mut self, player: Address, value: i64, now: u64) -> Result<(), RngError> {
        self.sync(now);
        if self.state == RoundState::Finalized {
            return Err(RngError::AlreadyFinalized(self.round_id));
        }
        if now <= self.commit_deadline || now > self.reveal_deadline {
            return Err(RngError::RevealOutsideWindow {
                now,
                opens: self.commit_deadline,
                closes: self.reveal_deadline,
            });
        }
        let commitment = self
            .commitments
            .get(&player)
            .ok_or(RngError::NoCommitment(player))?;
        if self.reveals.contains_key(&player) {
            return Err(RngError::AlreadyRevealed(player));
        }
        if commitment_hash(value) != commitment.commit_hash {
            return Err(RngError::BindingViolation(player));
        }
        self.reveals.insert(
            player,
            Reveal {
                committer: player,
                value,
            },
        );
        Ok(())
    }

    fn counted_reveals<'a>(&'a self, excluded: &'a BTreeSet<Address>) -> impl Iterator<Item = &'a Reveal> + 'a {
        self.reveals
            .values()
            .filter(move |r| !excluded.contains(&r.committer))
    }

    /// The output the round would produce if finalized now, ignoring
    /// `excluded` committers. `None` if nothing counted has been revealed.
    pub fn preview_output(&self, excluded: &BTreeSet<Address>) -> Option<Hash32> {
        let mut values = self.counted_reveals(excluded).map(|r| r.value).peekable();
        values.peek()?;
        Some(combine(values, self.round_id))
    }

    /// Finalizes with every committer eligible, refunding revealers and
    /// moving forfeits into `forfeit_bucket`.
    pub fn finalize(&mut self, ledger: &mut Ledger, now: u64, forfeit_bucket: &str) -> Result<Finalization, RngError> {
        self.finalize_excluding(ledger, now, &BTreeSet::new(), forfeit_bucket, &RefundRoute::Committers)
    }

    /// Finalizes treating `excluded` committers as if they had never revealed.
    pub fn finalize_excluding(
        &mut self,
        ledger: &mut Ledger,
        now: u64,
        excluded: &BTreeSet<Address>,
        forfeit_bucket: &str,
        refund_route: &RefundRoute,
    ) -> Result<Finalization, RngError> {
        if self.state == RoundState::Finalized {
            return Err(RngError::AlreadyFinalized(self.round_id));
        }
        if now <= self.reveal_deadline {
            return Err(RngError::RevealWindowOpen {
                now,
                after: self.reveal_deadline,
            });
        }
        let bucket = self.escrow_bucket();
        let output = self.preview_output(excluded);

        let Some(output) = output else {
            let mut refunds = BTreeMap::new();
            for c in self.commitments.values() {
                ledger.release(&bucket, &c.committer, c.deposit)?;
                refunds.insert(c.committer, c.deposit);
            }
            self.state = RoundState::Finalized;
            return Ok(Finalization::NoEntropy { refunds });
        };

        let mut refunds = BTreeMap::new();
        let mut forfeits = BTreeMap::new();
        for c in self.commitments.values() {
            let valid = self.reveals.contains_key(&c.committer) && !excluded.contains(&c.committer);
            if valid {
                match refund_route {
                    RefundRoute::Committers => ledger.release(&bucket, &c.committer, c.deposit)?,
                    RefundRoute::Bucket(to) => ledger.move_escrow(&bucket, to, c.deposit)?,
                }
                refunds.insert(c.committer, c.deposit);
            } else {
                ledger.move_escrow(&bucket, forfeit_bucket, c.deposit)?;
                forfeits.insert(c.committer, c.deposit);
            }
        }
        self.forfeited = forfeits.values().sum();
        self.output = Some(output);
        self.state = RoundState::Finalized;
        Ok(Finalization::Drawn {
            output,
            refunds,
            forfeits,
        })
    }

    /// One line per commitment, in committer-address order:
    /// `round_id,committer_hex,commit_hash_hex,revealed(0/1),value_or_dash,deposit`.
    pub fn transcript(&self) -> String {
        let mut out = String::new();
        for c in self.commitments.values() {
            let reveal = self.reveals.get(&c.committer);
            let value = reveal.map_or_else(|| "-".to_string(), |r| r.value.to_string());
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                self.round_id,
                c.committer.to_hex(),
                hex::encode(c.commit_hash),
                u8::from(reveal.is_some()),
                value,
                c.deposit
            );
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Fixture {
        ledger: Ledger,
        players: Vec<Address>,
    }

    fn fixture(n: usize) -> Fixture {
        let mut ledger = Ledger::new();
        let players = (0..n)
            .map(|i| ledger.create_account(format!("player-{i}").as_bytes(), 1_000).unwrap())
            .collect();
        Fixture { ledger, players }
    }

    #[test]
    fn open_round_deadlines() {
        let mut ledger = Ledger::new();
        let round = RngRound::open(&mut ledger, 0, 5, 5).unwrap();
        assert_eq!((round.commit_deadline(), round.reveal_deadline()), (5, 10));
        assert_eq!(RngRound::open(&mut ledger, 0, 0, 5), Err(RngError::ZeroWindow));
        assert_eq!(RngRound::open(&mut ledger, 0, 5, 0), Err(RngError::ZeroWindow));
        let other = RngRound::open(&mut ledger, 0, 5, 5).unwrap();
        assert_ne!(round.round_id(), other.round_id());
    }

    #[test]
    fn commit_window_is_inclusive() {
        let Fixture { mut ledger, players } = fixture(2);
        let mut round = RngRound::open(&mut ledger, 0, 5, 5).unwrap();
        round
            .commit(&mut ledger, players[0], commitment_hash(1), 10, 5)
            .unwrap();
        assert_eq!(ledger.balance(&players[0]).unwrap(), 990);
        assert_eq!(
            round.commit(&mut ledger, players[1], commitment_hash(1), 10, 6),
            Err(RngError::CommitClosed { now: 6, deadline: 5 })
        );
    }

    #[test]
    fn commit_rejections() {
        let Fixture { mut ledger, players } = fixture(1);
        let node = ledger.create_transaction_node(b"node").unwrap();
        let mut round = RngRound::open(&mut ledger, 0, 5, 5).unwrap();
        assert_eq!(
            round.commit(&mut ledger, node, commitment_hash(1), 10, 0),
            Err(RngError::TransactionNode(node))
        );
        assert_eq!(
            round.commit(&mut ledger, players[0], commitment_hash(1), 0, 0),
            Err(RngError::ZeroDeposit)
        );
        assert!(matches!(
            round.commit(&mut ledger, players[0], commitment_hash(1), 5_000, 0),
            Err(RngError::Ledger(ChainError::InsufficientBalance { .. }))
        ));
        round
            .commit(&mut ledger, players[0], commitment_hash(1), 10, 0)
            .unwrap();
        assert_eq!(
            round.commit(&mut ledger, players[0], commitment_hash(2), 10, 1),
            Err(RngError::DuplicateCommit(players[0]))
        );
    }

    #[test]
    fn reveal_binding_and_windows() {
        let Fixture { mut ledger, players } = fixture(2);
        let mut round = RngRound::open(&mut ledger, 0, 5, 5).unwrap();
        round.commit(&mut ledger, players[0], commitment_hash(42), 10, 1).unwrap();
        assert!(matches!(
            round.reveal(players[0], 42, 5),
            Err(RngError::RevealOutsideWindow { .. })
        ));
        assert_eq!(round.reveal(players[0], 43, 6), Err(RngError::BindingViolation(players[0])));
        assert_eq!(round.reveal(players[1], 42, 6), Err(RngError::NoCommitment(players[1])));
        round.reveal(players[0], 42, 6).unwrap();
        assert_eq!(round.reveal(players[0], 42, 7), Err(RngError::AlreadyRevealed(players[0])));
        assert!(matches!(
            round.reveal(players[0], 42, 11),
            Err(RngError::RevealOutsideWindow { .. })
        ));
    }

    #[test]
    fn single_zero_reveal_output_matches_direct_hash() {
        let Fixture { mut ledger, players } = fixture(1);
        let mut round = RngRound::open(&mut ledger, 0, 1, 1).unwrap();
        let id = round.round_id();
        round.commit(&mut ledger, players[0], commitment_hash(0), 10, 0).unwrap();
        round.reveal(players[0], 0, 2).unwrap();
        let fin = round.finalize(&mut ledger, 3, "phi").unwrap();
        let mut expected_input = vec![0u8; 8];
        expected_input.extend_from_slice(&id.to_le_bytes());
        assert_eq!(fin.output(), Some(hash(&expected_input)));
        assert_eq!(round.state(), RoundState::Finalized);
    }

    #[test]
    fn equal_values_cancel_under_xor() {
        let Fixture { mut ledger, players } = fixture(2);
        let mut pair = RngRound::with_id(77, 0, 1, 1).unwrap();
        for p in &players {
            pair.commit(&mut ledger, *p, commitment_hash(5), 10, 0).unwrap();
        }
        for p in &players {
            pair.reveal(*p, 5, 2).unwrap();
        }
        let mut single = RngRound::with_id(77, 0, 1, 1).unwrap();
        single.commit(&mut ledger, players[0], commitment_hash(0), 10, 0).unwrap();
        single.reveal(players[0], 0, 2).unwrap();
        let a = pair.finalize(&mut ledger, 3, "phi").unwrap().output();
        let b = single.finalize(&mut ledger, 3, "phi").unwrap().output();
        assert_eq!(a, b);
    }

    #[test]
    fn silent_committer_forfeits() {
        let Fixture { mut ledger, players } = fixture(3);
        let mut round = RngRound::open(&mut ledger, 0, 2, 2).unwrap();
        for (i, p) in players.iter().enumerate() {
            round
                .commit(&mut ledger, *p, commitment_hash(i as i64), 10 + i as Money, 1)
                .unwrap();
        }
        round.reveal(players[0], 0, 3).unwrap();
        round.reveal(players[1], 1, 4).unwrap();
        assert!(matches!(
            round.finalize(&mut ledger, 4, "phi"),
            Err(RngError::RevealWindowOpen { .. })
        ));
        let fin = round.finalize(&mut ledger, 5, "phi").unwrap();
        assert_eq!(fin.forfeited(), 12);
        assert_eq!(ledger.escrow("phi"), 12);
        assert_eq!(
            fin.refunds().clone(),
            BTreeMap::from([(players[0], 10), (players[1], 11)])
        );
        assert_eq!(ledger.balance(&players[0]).unwrap(), 1_000);
        assert_eq!(ledger.balance(&players[2]).unwrap(), 988);
        assert_eq!(ledger.escrow(&round.escrow_bucket()), 0);
        assert_eq!(ledger.conservation_residual(), 0);
        assert_eq!(
            round.finalize(&mut ledger, 6, "phi"),
            Err(RngError::AlreadyFinalized(round.round_id()))
        );
    }

    #[test]
    fn zero_reveals_abort_and_refund_everyone() {
        let Fixture { mut ledger, players } = fixture(2);
        let mut round = RngRound::open(&mut ledger, 0, 1, 1).unwrap();
        for p in &players {
            round.commit(&mut ledger, *p, commitment_hash(9), 10, 0).unwrap();
        }
        let fin = round.finalize(&mut ledger, 3, "phi").unwrap();
        assert!(matches!(fin, Finalization::NoEntropy { .. }));
        assert_eq!(fin.refunds().values().sum::<Money>(), 20);
        assert!(players.iter().all(|p| ledger.balance(p).unwrap() == 1_000));
    }

    #[test]
    fn excluded_committer_is_ignored_and_forfeits() {
        let Fixture { mut ledger, players } = fixture(2);
        let mut round = RngRound::open(&mut ledger, 0, 1, 1).unwrap();
        round.commit(&mut ledger, players[0], commitment_hash(3), 10, 0).unwrap();
        round.commit(&mut ledger, players[1], commitment_hash(8), 10, 0).unwrap();
        round.reveal(players[0], 3, 2).unwrap();
        round.reveal(players[1], 8, 2).unwrap();
        let excluded = BTreeSet::from([players[1]]);
        let fin = round
            .finalize_excluding(&mut ledger, 3, &excluded, "phi", &RefundRoute::Committers)
            .unwrap();
        assert_eq!(fin.output(), Some(combine([3], round.round_id())));
        assert_eq!(ledger.escrow("phi"), 10);
    }

    #[test]
    fn retained_refunds_stay_in_escrow() {
        let Fixture { mut ledger, players } = fixture(1);
        let mut round = RngRound::open(&mut ledger, 0, 1, 1).unwrap();
        round.commit(&mut ledger, players[0], commitment_hash(3), 10, 0).unwrap();
        round.reveal(players[0], 3, 2).unwrap();
        round
            .finalize_excluding(&mut ledger, 3, &BTreeSet::new(), "phi", &RefundRoute::Bucket("pool".into()))
            .unwrap();
        assert_eq!(ledger.escrow("pool"), 10);
        assert_eq!(ledger.balance(&players[0]).unwrap(), 990);
    }

    #[test]
    fn transcript_lines() {
        let Fixture { mut ledger, players } = fixture(2);
        let mut round = RngRound::with_id(4, 0, 1, 1).unwrap();
        round.commit(&mut ledger, players[0], commitment_hash(-7), 10, 0).unwrap();
        round.commit(&mut ledger, players[1], commitment_hash(2), 20, 0).unwrap();
        round.reveal(players[0], -7, 2).unwrap();
        let text = round.transcript();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 2);
        let first = if players[0] < players[1] { 0 } else { 1 };
        let line_for_p0 = lines[first];
        assert_eq!(
            line_for_p0,
            format!("4,{},{},1,-7,10", players[0].to_hex(), hex::encode(commitment_hash(-7)))
        );
        assert!(lines[1 - first].ends_with(",0,-,20"));
    }
}
