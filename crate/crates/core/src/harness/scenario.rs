//! Scenario files.
//!
//! A scenario is plain text, one `key = value` per line. Blank lines and
//! lines starting with `#` are ignored. Top-level keys come first; each
//! `[player]` line starts a player section and an optional `[attacker]`
//! line starts the attacker section. See the README for the full grammar.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adversary::InclusionPredicate;
use crate::chain::Money;
use crate::crypto::Target;
use crate::lottery::{EvictionPolicy, LotteryConfig, PoolMode};
use crate::registry::RngMode;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ScenarioError {
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("invalid {field}: {reason}")]
    Invalid { field: String, reason: String },
}

impl ScenarioError {
    fn parse(line: usize, message: impl Into<String>) -> Self {
        ScenarioError::Parse {
            line,
            message: message.into(),
        }
    }

    fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        ScenarioError::Invalid {
            field: field.into(),
            reason: reason.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum GuessStrategy {
    /// Each share names an outcome drawn uniformly from the guess space.
    #[default]
    Uniform,
    /// The same outcomes every round, one share each.
    Fixed(Vec<u64>),
}

impl fmt::Display for GuessStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GuessStrategy::Uniform => f.write_str("uniform"),
            GuessStrategy::Fixed(list) => {
                let parts: Vec<String> = list.iter().map(u64::to_string).collect();
                f.write_str(&parts.join(","))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlayerSpec {
    pub seed: String,
    pub balance: Money,
    pub shares: usize,
    pub guesses: GuessStrategy,
    pub reveals: bool,
    /// Banned once betting closes, every round.
    pub banned: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeAttackSpec {
    pub seed: String,
    pub mining_share: f64,
    /// Index of the player whose bets the attacker protects.
    pub colluder: usize,
    pub predicate: InclusionPredicate,
    pub withhold_limit: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SybilAttackSpec {
    pub seed: String,
    pub fake_count: usize,
    /// Hash attempts available per round.
    pub budget: u64,
    /// Certifier policy name, resolved through the policy registry.
    pub policy: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum AttackerSpec {
    Node(NodeAttackSpec),
    Sybil(SybilAttackSpec),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub config: LotteryConfig,
    pub players: Vec<PlayerSpec>,
    pub attacker: Option<AttackerSpec>,
    pub rng_mode: RngMode,
    pub rounds: u64,
    pub base_seed: u64,
    /// Honest transaction nodes producing blocks.
    pub miners: usize,
    pub block_difficulty: Target,
}

impl Scenario {
    pub fn validate(&self) -> Result<(), ScenarioError> {
        self.config
            .validate()
            .map_err(|e| ScenarioError::invalid(e.field, e.reason))?;
        if self.rounds == 0 {
            return Err(ScenarioError::invalid("rounds", "must be at least 1"));
        }
        if self.players.is_empty() {
            return Err(ScenarioError::invalid("player", "at least one [player] section is required"));
        }
        if self.miners == 0 {
            return Err(ScenarioError::invalid("miners", "must be at least 1"));
        }
        for (i, p) in self.players.iter().enumerate() {
            if let GuessStrategy::Fixed(list) = &p.guesses {
                if let Some(g) = list.iter().find(|g| **g >= self.config.guess_space_size) {
                    return Err(ScenarioError::invalid(
                        format!("player[{i}].guesses"),
                        format!("{g} is outside the guess space of size {}", self.config.guess_space_size),
                    ));
                }
            }
        }
        match &self.attacker {
            Some(AttackerSpec::Node(n)) => {
                if !(0.0..=1.0).contains(&n.mining_share) {
                    return Err(ScenarioError::invalid("mining_share", "must lie in [0, 1]"));
                }
                if n.colluder >= self.players.len() {
                    return Err(ScenarioError::invalid(
                        "colluder",
                        format!("player index {} out of range", n.colluder),
                    ));
                }
            }
            Some(AttackerSpec::Sybil(s)) if crate::registry::certifier_policies().get(&s.policy).is_none() => {
                return Err(ScenarioError::invalid("policy", format!("unknown certifier policy {:?}", s.policy)));
            }
            _ => {}
        }
        Ok(())
    }
}

pub fn load_scenario(path: impl AsRef<Path>) -> Result<Scenario, ScenarioError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| ScenarioError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    parse_scenario(&text)
}

#[derive(Default)]
struct PlayerDraft {
    seed: Option<String>,
    balance: Option<Money>,
    shares: Option<usize>,
    guesses: Option<GuessStrategy>,
    reveals: Option<bool>,
    banned: Option<bool>,
    count: Option<usize>,
    line: usize,
}

#[derive(Default)]
struct AttackerDraft {
    kind: Option<String>,
    seed: Option<String>,
    mining_share: Option<f64>,
    colluder: Option<usize>,
    predicate: Option<InclusionPredicate>,
    withhold_limit: Option<u64>,
    fake_count: Option<usize>,
    budget: Option<u64>,
    policy: Option<String>,
    line: usize,
}

enum Section {
    Top,
    Player(PlayerDraft),
    Attacker(AttackerDraft),
}

fn value<T: FromStr>(line: usize, key: &str, raw: &str) -> Result<T, ScenarioError> {
    raw.parse()
        .map_err(|_| ScenarioError::parse(line, format!("cannot parse {key} = {raw:?}")))
}

fn flag(line: usize, key: &str, raw: &str) -> Result<bool, ScenarioError> {
    match raw {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(ScenarioError::parse(line, format!("{key} expects true or false, got {raw:?}"))),
    }
}

fn set<T>(slot: &mut Option<T>, line: usize, key: &str, v: T) -> Result<(), ScenarioError> {
    if slot.replace(v).is_some() {
        return Err(ScenarioError::parse(line, format!("duplicate key {key}")));
    }
    Ok(())
}

/// Parses scenario text and fills in defaults.
pub fn parse_scenario(text: &str) -> Result<Scenario, ScenarioError> {
    let mut scenario = Scenario {
        name: "unnamed".to_string(),
        config: LotteryConfig::default(),
        players: Vec::new(),
        attacker: None,
        rng_mode: RngMode::default(),
        rounds: 1,
        base_seed: 0,
        miners: 3,
        block_difficulty: Target::MAX,
    };
    let mut seen_top: Vec<String> = Vec::new();
    let mut players: Vec<PlayerDraft> = Vec::new();
    let mut attacker: Option<AttackerDraft> = None;
    let mut section = Section::Top;

    let flush = |section: Section, players: &mut Vec<PlayerDraft>, attacker: &mut Option<AttackerDraft>| {
        match section {
            Section::Top => {}
            Section::Player(p) => players.push(p),
            Section::Attacker(a) => *attacker = Some(a),
        }
    };

    for (idx, raw_line) in text.lines().enumerate() {
        let line = idx + 1;
        let trimmed = raw_line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        if trimmed.starts_with('[') {
            let next = match trimmed {
                "[player]" => Section::Player(PlayerDraft {
                    line,
                    ..Default::default()
                }),
                "[attacker]" => {
                    if attacker.is_some() || matches!(section, Section::Attacker(_)) {
                        return Err(ScenarioError::parse(line, "only one [attacker] section is allowed"));
                    }
                    Section::Attacker(AttackerDraft {
                        line,
                        ..Default::default()
                    })
                }
                other => return Err(ScenarioError::parse(line, format!("unknown section {other}"))),
            };
            flush(std::mem::replace(&mut section, next), &mut players, &mut attacker);
            continue;
        }
        let Some((key, raw)) = trimmed.split_once('=') else {
            return Err(ScenarioError::parse(line, "expected `key = value`"));
        };
        let key = key.trim();
        let raw = raw.trim();
        match &mut section {
            Section::Top => {
                if seen_top.iter().any(|k| k == key) {
                    return Err(ScenarioError::parse(line, format!("duplicate key {key}")));
                }
                seen_top.push(key.to_string());
                let cfg = &mut scenario.config;
                match key {
                    "name" => scenario.name = raw.to_string(),
                    "rounds" => scenario.rounds = value(line, key, raw)?,
                    "base_seed" => scenario.base_seed = value(line, key, raw)?,
                    "mode" => {
                        scenario.rng_mode = RngMode::from_name(raw)
                            .ok_or_else(|| ScenarioError::parse(line, format!("unknown mode {raw:?}")))?
                    }
                    "miners" => scenario.miners = value(line, key, raw)?,
                    "block_difficulty" => scenario.block_difficulty = value(line, key, raw)?,
                    "share_price" => cfg.share_price = value(line, key, raw)?,
                    "security_factor" => cfg.security_factor = value(line, key, raw)?,
                    "cert_cap" => cfg.cert_cap = value(line, key, raw)?,
                    "bet_duration" => cfg.bet_duration = value(line, key, raw)?,
                    "buffer_duration" => cfg.buffer_duration = value(line, key, raw)?,
                    "guess_space_size" => cfg.guess_space_size = value(line, key, raw)?,
                    "winning_draws" => cfg.winning_draws = value(line, key, raw)?,
                    "pool_mode" => {
                        cfg.pool_mode = PoolMode::from_name(raw)
                            .ok_or_else(|| ScenarioError::parse(line, format!("unknown pool_mode {raw:?}")))?
                    }
                    "pow_difficulty" => cfg.pow_difficulty = value(line, key, raw)?,
                    "eviction" => {
                        cfg.eviction = EvictionPolicy::from_name(raw)
                            .ok_or_else(|| ScenarioError::parse(line, format!("unknown eviction {raw:?}")))?
                    }
                    _ => return Err(ScenarioError::parse(line, format!("unknown key {key}"))),
                }
            }
            Section::Player(p) => match key {
                "seed" => set(&mut p.seed, line, key, raw.to_string())?,
                "balance" => set(&mut p.balance, line, key, value(line, key, raw)?)?,
                "shares" => set(&mut p.shares, line, key, value(line, key, raw)?)?,
                "reveals" => set(&mut p.reveals, line, key, flag(line, key, raw)?)?,
                "banned" => set(&mut p.banned, line, key, flag(line, key, raw)?)?,
                "count" => set(&mut p.count, line, key, value(line, key, raw)?)?,
                "guesses" => {
                    let strategy = if raw == "uniform" {
                        GuessStrategy::Uniform
                    } else {
                        let list = raw
                            .split(',')
                            .map(|g| value::<u64>(line, key, g.trim()))
                            .collect::<Result<Vec<_>, _>>()?;
                        GuessStrategy::Fixed(list)
                    };
                    set(&mut p.guesses, line, key, strategy)?
                }
                _ => return Err(ScenarioError::parse(line, format!("unknown player key {key}"))),
            },
            Section::Attacker(a) => match key {
                "kind" => set(&mut a.kind, line, key, raw.to_string())?,
                "seed" => set(&mut a.seed, line, key, raw.to_string())?,
                "mining_share" => set(&mut a.mining_share, line, key, value(line, key, raw)?)?,
                "colluder" => set(&mut a.colluder, line, key, value(line, key, raw)?)?,
                "withhold_limit" => set(&mut a.withhold_limit, line, key, value(line, key, raw)?)?,
                "fake_count" => set(&mut a.fake_count, line, key, value(line, key, raw)?)?,
                "budget" => set(&mut a.budget, line, key, value(line, key, raw)?)?,
                "policy" => set(&mut a.policy, line, key, raw.to_string())?,
                "predicate" => {
                    let predicate = match raw {
                        "intersects" => InclusionPredicate::Intersects,
                        "subset" => InclusionPredicate::Subset,
                        _ => return Err(ScenarioError::parse(line, format!("unknown predicate {raw:?}"))),
                    };
                    set(&mut a.predicate, line, key, predicate)?
                }
                _ => return Err(ScenarioError::parse(line, format!("unknown attacker key {key}"))),
            },
        }
    }
    flush(section, &mut players, &mut attacker);

    for draft in players {
        let seed = draft
            .seed
            .ok_or_else(|| ScenarioError::parse(draft.line, "[player] needs a seed"))?;
        let guesses = draft.guesses.unwrap_or_default();
        let shares = match (&guesses, draft.shares) {
            (GuessStrategy::Fixed(list), Some(n)) if n != list.len() => {
                return Err(ScenarioError::parse(
                    draft.line,
                    format!("shares = {n} but {} fixed guesses given", list.len()),
                ))
            }
            (GuessStrategy::Fixed(list), _) => list.len(),
            (GuessStrategy::Uniform, n) => n.unwrap_or(1),
        };
        let count = draft.count.unwrap_or(1);
        if count == 0 {
            return Err(ScenarioError::parse(draft.line, "count must be at least 1"));
        }
        for i in 0..count {
            scenario.players.push(PlayerSpec {
                seed: if count == 1 { seed.clone() } else { format!("{seed}#{i}") },
                balance: draft.balance.unwrap_or(1_000_000_000_000),
                shares,
                guesses: guesses.clone(),
                reveals: draft.reveals.unwrap_or(true),
                banned: draft.banned.unwrap_or(false),
            });
        }
    }

    if let Some(a) = attacker {
        let kind = a
            .kind
            .ok_or_else(|| ScenarioError::parse(a.line, "[attacker] needs a kind (node or sybil)"))?;
        scenario.attacker = Some(match kind.as_str() {
            "node" => AttackerSpec::Node(NodeAttackSpec {
                seed: a.seed.unwrap_or_else(|| "attacker-node".to_string()),
                mining_share: a.mining_share.unwrap_or(0.0),
                colluder: a.colluder.unwrap_or(0),
                predicate: a.predicate.unwrap_or_default(),
                withhold_limit: a.withhold_limit.unwrap_or(crate::adversary::DEFAULT_WITHHOLD_LIMIT),
            }),
            "sybil" => AttackerSpec::Sybil(SybilAttackSpec {
                seed: a.seed.unwrap_or_else(|| "attacker-sybil".to_string()),
                fake_count: a.fake_count.unwrap_or(0),
                budget: a.budget.unwrap_or(0),
                policy: a.policy.unwrap_or_else(|| "honest-refuse".to_string()),
            }),
            other => return Err(ScenarioError::parse(a.line, format!("unknown attacker kind {other:?}"))),
        });
    }

    scenario.validate()?;
    Ok(scenario)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_file_gets_defaults() {
        let s = parse_scenario("[player]\nseed = alice\n").unwrap();
        assert_eq!(s.name, "unnamed");
        assert_eq!(s.rounds, 1);
        assert_eq!(s.config, LotteryConfig::default());
        assert_eq!(s.rng_mode, RngMode::CommitReveal);
        assert_eq!(s.players.len(), 1);
        assert_eq!(s.players[0].shares, 1);
        assert!(s.players[0].reveals);
        assert!(s.attacker.is_none());
    }

    #[test]
    fn bad_security_factor_names_field() {
        let err = parse_scenario("security_factor = 2.5\n[player]\nseed = a\n").unwrap_err();
        assert!(matches!(&err, ScenarioError::Invalid { field, .. } if field == "security_factor"), "{err}");
    }

    #[test]
    fn missing_players_is_rejected() {
        let err = parse_scenario("name = empty\nrounds = 3\n").unwrap_err();
        assert!(matches!(&err, ScenarioError::Invalid { field, .. } if field == "player"));
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let err = parse_scenario("name = x\n\n# c\nrounds = many\n").unwrap_err();
        assert_eq!(
            err,
            ScenarioError::Parse {
                line: 4,
                message: "cannot parse rounds = \"many\"".into()
            }
        );
        let err = parse_scenario("[player]\nseed = a\nflavour = mint\n").unwrap_err();
        assert!(matches!(err, ScenarioError::Parse { line: 3, .. }));
        let err = parse_scenario("rounds = 1\nrounds = 2\n").unwrap_err();
        assert!(matches!(err, ScenarioError::Parse { line: 2, .. }));
    }

    #[test]
    fn full_file() {
        let text = "\
name = demo
rounds = 5
base_seed = 42
mode = naive
pool_mode = literal
pow_difficulty = 2^250
block_difficulty = 2^255
guess_space_size = 16

[player]
seed = p
count = 3
balance = 5000000000

[player]
seed = colluder
guesses = 3, 4
reveals = false

[attacker]
kind = node
mining_share = 0.3
colluder = 3
predicate = subset
";
        let s = parse_scenario(text).unwrap();
        assert_eq!(s.rng_mode, RngMode::NaiveBlockHash);
        assert_eq!(s.config.pool_mode, PoolMode::PaperLiteral);
        assert_eq!(s.config.pow_difficulty, Target::pow2(250).unwrap());
        assert_eq!(s.players.len(), 4);
        assert_eq!(s.players[1].seed, "p#1");
        assert_eq!(s.players[3].guesses, GuessStrategy::Fixed(vec![3, 4]));
        assert_eq!(s.players[3].shares, 2);
        assert!(!s.players[3].reveals);
        match s.attacker.unwrap() {
            AttackerSpec::Node(n) => {
                assert_eq!(n.colluder, 3);
                assert_eq!(n.predicate, InclusionPredicate::Subset);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn semantic_checks() {
        let err = parse_scenario("[player]\nseed = a\nguesses = 10\n").unwrap_err();
        assert!(matches!(&err, ScenarioError::Invalid { field, .. } if field == "player[0].guesses"));
        let err = parse_scenario("[player]\nseed = a\n[attacker]\nkind = node\ncolluder = 1\n").unwrap_err();
        assert!(matches!(&err, ScenarioError::Invalid { field, .. } if field == "colluder"));
        let err = parse_scenario("[player]\nseed = a\n[attacker]\nkind = sybil\npolicy = bribed\n").unwrap_err();
        assert!(matches!(&err, ScenarioError::Invalid { field, .. } if field == "policy"));
        let err = parse_scenario("rounds = 0\n[player]\nseed = a\n").unwrap_err();
        assert!(matches!(&err, ScenarioError::Invalid { field, .. } if field == "rounds"));
    }
}
