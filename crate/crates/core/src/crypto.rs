//! The single hash primitive used everywhere in the simulator, plus the
//! proof-of-work target arithmetic built on it.
//!
//! Every digest (addresses, event tags, block links, commitments, PoW puzzles
//! and the randomness combiner) is SHA3-256 over a plain concatenation of the
//! input parts. There is no length prefixing; callers are responsible for
//! feeding fixed-width fields.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha3::{Digest, Sha3_256};
use thiserror::Error;

/// A 256-bit digest.
pub type Hash32 = [u8; 32];

/// SHA3-256 over the concatenation of `parts`.
pub fn hash_parts(parts: &[&[u8]]) -> Hash32 {
    let mut hasher = Sha3_256::new();
    for part in parts {
        hasher.update(part);
    }
    hasher.finalize().into()
}

pub fn hash(bytes: &[u8]) -> Hash32 {
    hash_parts(&[bytes])
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TargetError {
    #[error("target must be positive")]
    Zero,
    #[error("target exponent {0} exceeds 256")]
    ExponentTooLarge(u32),
    #[error("target exceeds 2^256")]
    TooLarge,
    #[error("cannot parse target `{0}` (expected `2^N`, `2^N/D` or `0x<hex>`)")]
    Syntax(String),
}

/// A proof-of-work difficulty target: a hash meets it when the hash, read as
/// a big-endian integer, is strictly below the target.
///
/// Targets range over `1..=2^256`, so the value is held as 33 big-endian
/// bytes. `2^256` accepts every hash.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Target([u8; 33]);

impl Target {
    pub const MAX: Target = {
        let mut bytes = [0u8; 33];
        bytes[0] = 1;
        Target(bytes)
    };

    /// The target `2^bits`.
    pub fn pow2(bits: u32) -> Result<Self, TargetError> {
        if bits > 256 {
            return Err(TargetError::ExponentTooLarge(bits));
        }
        let mut bytes = [0u8; 33];
        let byte_from_right = (bits / 8) as usize;
        bytes[32 - byte_from_right] = 1 << (bits % 8);
        Ok(Target(bytes))
    }

    pub fn from_be_bytes(bytes: [u8; 33]) -> Result<Self, TargetError> {
        if bytes.iter().all(|b| *b == 0) {
            return Err(TargetError::Zero);
        }
        if bytes[0] > 1 || (bytes[0] == 1 && bytes[1..].iter().any(|b| *b != 0)) {
            return Err(TargetError::TooLarge);
        }
        Ok(Target(bytes))
    }

    pub fn to_be_bytes(&self) -> [u8; 33] {
        self.0
    }

    /// `floor(self / divisor)`; errors if the quotient is zero.
    pub fn div_floor(&self, divisor: u64) -> Result<Self, TargetError> {
        if divisor == 0 {
            return Err(TargetError::Zero);
        }
        let mut out = [0u8; 33];
        let mut rem: u128 = 0;
        for (i, byte) in self.0.iter().enumerate() {
            let cur = (rem << 8) | u128::from(*byte);
            out[i] = (cur / u128::from(divisor)) as u8;
            rem = cur % u128::from(divisor);
        }
        Target::from_be_bytes(out)
    }

    pub fn is_met_by(&self, digest: &Hash32) -> bool {
        if self.0[0] == 1 {
            return true;
        }
        digest[..] < self.0[1..]
    }

    /// The target as a float, `target / 2^256`, i.e. the per-attempt
    /// success probability of a uniformly random hash.
    pub fn success_probability(&self) -> f64 {
        self.0
            .iter()
            .enumerate()
            .map(|(i, b)| f64::from(*b) * 2f64.powi(-8 * i as i32))
            .sum()
    }

    /// Mean number of hash attempts to meet this target.
    pub fn expected_attempts(&self) -> f64 {
        1.0 / self.success_probability()
    }
}

impl fmt::Display for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        // Exact powers of two print in the same form the parser accepts.
        let set: Vec<(usize, u8)> = self
            .0
            .iter()
            .enumerate()
            .filter(|(_, b)| **b != 0)
            .map(|(i, b)| (i, *b))
            .collect();
        if let [(idx, byte)] = set[..] {
            if byte.is_power_of_two() {
                let bits = (32 - idx) * 8 + byte.trailing_zeros() as usize;
                return write!(f, "2^{bits}");
            }
        }
        let hex = hex::encode(self.0);
        write!(f, "0x{}", hex.trim_start_matches('0'))
    }
}

impl fmt::Debug for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Target({self})")
    }
}

impl FromStr for Target {
    type Err = TargetError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let text = s.trim();
        let syntax = || TargetError::Syntax(text.to_string());
        if let Some(hex_digits) = text.strip_prefix("0x") {
            if hex_digits.is_empty() || hex_digits.len() > 66 {
                return Err(syntax());
            }
            let padded = format!("{hex_digits:0>66}");
            let raw = hex::decode(padded).map_err(|_| syntax())?;
            let mut bytes = [0u8; 33];
            bytes.copy_from_slice(&raw);
            return Target::from_be_bytes(bytes);
        }
        let rest = text.strip_prefix("2^").ok_or_else(syntax)?;
        let (exp, divisor) = match rest.split_once('/') {
            Some((e, d)) => (e.trim(), Some(d.trim())),
            None => (rest.trim(), None),
        };
        let bits: u32 = exp.parse().map_err(|_| syntax())?;
        let base = Target::pow2(bits)?;
        match divisor {
            None => Ok(base),
            Some(d) => base.div_floor(d.parse().map_err(|_| syntax())?),
        }
    }
}

impl Serialize for Target {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Target {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let text = String::deserialize(deserializer)?;
        text.parse().map_err(serde::de::Error::custom)
    }
}

/// A solved proof-of-work puzzle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PowProof {
    #[serde(with = "hex_bytes")]
    pub challenge: Hash32,
    pub nonce: u64,
    pub difficulty: Target,
}

impl PowProof {
    pub fn verify(&self) -> bool {
        self.difficulty
            .is_met_by(&pow_digest(&self.challenge, self.nonce))
    }

    /// Hash attempts spent to find this proof when searching from nonce 0.
    pub fn attempts(&self) -> u64 {
        self.nonce + 1
    }
}

pub fn pow_digest(challenge: &Hash32, nonce: u64) -> Hash32 {
    hash_parts(&[challenge, &nonce.to_le_bytes()])
}

/// Searches nonces upward from 0 until `H(challenge ‖ nonce_le) < difficulty`.
pub fn solve_pow(challenge: Hash32, difficulty: Target) -> PowProof {
    solve_pow_bounded(challenge, difficulty, u64::MAX)
        .expect("nonce space exhausted before meeting target")
}

/// Like [`solve_pow`] but gives up after `max_attempts` hashes.
pub fn solve_pow_bounded(challenge: Hash32, difficulty: Target, max_attempts: u64) -> Option<PowProof> {
    (0..max_attempts)
        .find(|nonce| difficulty.is_met_by(&pow_digest(&challenge, *nonce)))
        .map(|nonce| PowProof {
            challenge,
            nonce,
            difficulty,
        })
}

pub(crate) mod hex_bytes {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(bytes: &[u8; 32], serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&hex::encode(bytes))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(deserializer: D) -> Result<[u8; 32], D::Error> {
        let text = String::deserialize(deserializer)?;
        let raw = hex::decode(&text).map_err(serde::de::Error::custom)?;
        raw.try_into()
            .map_err(|_| serde::de::Error::custom("expected 32 bytes"))
    }
}
