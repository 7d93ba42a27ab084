//! One controller trying to admit many derived identities.
//!
//! Every identity must solve the join puzzle for its own address, so the
//! work grows linearly with the number of fakes and inversely with the
//! puzzle target. Certifiers that refuse fakes stop them regardless of work.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::AdversaryError;
use crate::chain::{Account, Address, ChainError, Ledger};
use crate::crypto::{solve_pow_bounded, Hash32, Target};
use crate::lottery::LotteryState;
use crate::registry::CertifierPolicy;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SybilIdentity {
    pub address: Address,
    pub controller: Address,
    pub salt: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SybilAttacker {
    pub controller: Address,
    #[serde(with = "crate::crypto::hex_bytes")]
    controller_secret: Hash32,
    /// Number of identities the attacker may derive.
    pub fake_count: usize,
    /// Hash attempts available across all identities.
    pub budget: u64,
}

impl SybilAttacker {
    pub fn new(ledger: &Ledger, controller: Address, fake_count: usize, budget: u64) -> Result<Self, AdversaryError> {
        let secret = ledger.account(&controller)?.secret;
        Ok(SybilAttacker {
            controller,
            controller_secret: secret,
            fake_count,
            budget,
        })
    }

    fn identity_seed(&self, salt: u64) -> Vec<u8> {
        let mut seed = self.controller_secret.to_vec();
        seed.extend_from_slice(b"sybil");
        seed.extend_from_slice(&salt.to_le_bytes());
        seed
    }

    /// Creates a zero-balance ledger account for `identity` unless one exists.
    pub fn register(&self, ledger: &mut Ledger, identity: &SybilIdentity) -> Result<(), AdversaryError> {
        match ledger.create_account(&self.identity_seed(identity.salt), 0) {
            Ok(_) | Err(ChainError::DuplicateAccount(_)) => Ok(()),
            Err(e) => Err(e.into()),
        }
    }
}

/// Derives the first `n` identities of `attacker`. Pure: the same attacker
/// always yields the same identities.
pub fn sybil_spawn(attacker: &SybilAttacker, n: usize) -> Result<Vec<SybilIdentity>, AdversaryError> {
    if n > attacker.fake_count {
        return Err(AdversaryError::TooManyFakes {
            requested: n,
            available: attacker.fake_count,
        });
    }
    Ok((0..n as u64)
        .map(|salt| SybilIdentity {
            address: Account::derive(&attacker.identity_seed(salt), 0, false).address,
            controller: attacker.controller,
            salt,
        })
        .collect())
}

/// Expected hash attempts to meet `target`, rounded up.
pub fn work_price(target: Target) -> u64 {
    let expected = target.expected_attempts();
    if expected >= u64::MAX as f64 {
        u64::MAX
    } else {
        expected.ceil() as u64
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SybilTrial {
    pub admitted: usize,
    /// Hash attempts spent, including failed and refused identities.
    pub spent: u64,
    pub admitted_identities: Vec<Address>,
}

/// Tries to admit `fakes` one after another. An identity is attempted only
/// while the remaining budget covers [`work_price`]; its search stops when
/// the budget runs out.
pub fn sybil_admission_trial(
    state: &mut LotteryState,
    ledger: &mut Ledger,
    attacker: &SybilAttacker,
    fakes: &[SybilIdentity],
    policy: &dyn CertifierPolicy,
) -> Result<SybilTrial, AdversaryError> {
    let target = state.config().pow_difficulty;
    let price = work_price(target);
    let mut remaining = attacker.budget;
    let mut trial = SybilTrial {
        admitted: 0,
        spent: 0,
        admitted_identities: Vec::new(),
    };
    for fake in fakes {
        if remaining < price {
            break;
        }
        attacker.register(ledger, fake)?;
        let challenge = state.join_challenge(&fake.address);
        let Some(proof) = solve_pow_bounded(challenge, target, remaining) else {
            trial.spent += remaining;
            break;
        };
        remaining -= proof.attempts();
        trial.spent += proof.attempts();
        let votes: BTreeSet<Address> = policy.votes(state, &fake.address, true);
        let now = ledger.clock();
        match state.add_player(ledger, fake.address, &proof, &votes, now) {
            Ok(()) => {
                trial.admitted += 1;
                trial.admitted_identities.push(fake.address);
            }
            Err(crate::lottery::LotteryError::MissingCertification(_)) => {}
            Err(e) => return Err(e.into()),
        }
    }
    Ok(trial)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lottery::LotteryConfig;
    use crate::registry::{HonestRefuse, Rubberstamp};

    fn setup(tag: &str, target: Target, fakes: usize, budget: u64) -> (Ledger, LotteryState, SybilAttacker) {
        let mut ledger = Ledger::new();
        let host = ledger.create_account(format!("{tag}-host").as_bytes(), 0).unwrap();
        let controller = ledger.create_account(format!("{tag}-ctl").as_bytes(), 0).unwrap();
        let cfg = LotteryConfig {
            pow_difficulty: target,
            cert_cap: 3,
            ..Default::default()
        };
        let state = LotteryState::deploy(&mut ledger, host, cfg, 0).unwrap();
        let attacker = SybilAttacker::new(&ledger, controller, fakes, budget).unwrap();
        (ledger, state, attacker)
    }

    #[test]
    fn spawn_is_pure_and_distinct() {
        let (_, _, attacker) = setup("spawn", Target::MAX, 50, 0);
        let a = sybil_spawn(&attacker, 50).unwrap();
        assert_eq!(a, sybil_spawn(&attacker, 50).unwrap());
        assert_eq!(a.iter().map(|i| i.address).collect::<BTreeSet<_>>().len(), 50);
        assert!(matches!(
            sybil_spawn(&attacker, 51),
            Err(AdversaryError::TooManyFakes { requested: 51, available: 50 })
        ));
    }

    #[test]
    fn work_price_examples() {
        assert_eq!(work_price(Target::MAX), 1);
        assert_eq!(work_price(Target::pow2(248).unwrap()), 256);
        assert_eq!(work_price(Target::pow2(248).unwrap().div_floor(3).unwrap()), 768);
    }

    #[test]
    fn rubberstamp_admits_everyone_with_easy_puzzle() {
        let (mut ledger, mut state, attacker) = setup("rubber", Target::MAX, 10, 1_000);
        let fakes = sybil_spawn(&attacker, 10).unwrap();
        let trial = sybil_admission_trial(&mut state, &mut ledger, &attacker, &fakes, &Rubberstamp).unwrap();
        assert_eq!(trial.admitted, 10);
        assert_eq!(trial.spent, 10);
        assert_eq!(state.players().len(), 11);
        assert_eq!(ledger.conservation_residual(), 0);
    }

    #[test]
    fn honest_refusal_admits_nobody() {
        let (mut ledger, mut state, attacker) = setup("honest", Target::pow2(250).unwrap(), 20, 100_000);
        let fakes = sybil_spawn(&attacker, 20).unwrap();
        let trial = sybil_admission_trial(&mut state, &mut ledger, &attacker, &fakes, &HonestRefuse).unwrap();
        assert_eq!(trial.admitted, 0);
        assert!(trial.spent > 0);
        assert_eq!(state.players().len(), 1);
    }

    #[test]
    fn budget_below_price_spends_nothing() {
        let (mut ledger, mut state, attacker) = setup("poor", Target::pow2(248).unwrap(), 5, 255);
        let fakes = sybil_spawn(&attacker, 5).unwrap();
        let trial = sybil_admission_trial(&mut state, &mut ledger, &attacker, &fakes, &Rubberstamp).unwrap();
        assert_eq!(trial, SybilTrial { admitted: 0, spent: 0, admitted_identities: vec![] });
    }

    #[test]
    fn spend_never_exceeds_budget() {
        for i in 0..30 {
            let (mut ledger, mut state, attacker) = setup(&format!("cap-{i}"), Target::pow2(250).unwrap(), 40, 500);
            let fakes = sybil_spawn(&attacker, 40).unwrap();
            let trial = sybil_admission_trial(&mut state, &mut ledger, &attacker, &fakes, &Rubberstamp).unwrap();
            assert!(trial.spent <= 500);
        }
    }
}
