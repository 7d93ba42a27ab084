//! Run and aggregate reports, their JSON/CSV forms, and re-verification.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize, Serializer};
use thiserror::Error;

use super::stats::{chi_square_uniform, proportion_se, ChiSquare};
use crate::chain::{Address, Money};

/// Serializes a float with 17 significant digits, the shortest width that
/// round-trips every `f64`. Non-finite values become `null`.
pub(crate) fn float17<S: Serializer>(value: &f64, serializer: S) -> Result<S::Ok, S::Error> {
    if !value.is_finite() {
        return serializer.serialize_none();
    }
    let raw = serde_json::value::RawValue::from_string(format!("{value:.16e}")).map_err(serde::ser::Error::custom)?;
    raw.serialize(serializer)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoundRecord {
    pub round: u64,
    pub lottery_id: u64,
    pub winners: Vec<u64>,
    /// Indices of players holding at least one winning share.
    pub winning_players: Vec<usize>,
    pub aborted: bool,
    pub pool: Money,
    /// Deposits escrowed at key upload, by player index.
    pub deposits: BTreeMap<usize, Money>,
    /// Deposits forfeited at the draw, by player index.
    pub forfeits: BTreeMap<usize, Money>,
    pub phi_before_draw: Money,
    pub phi_after_draw: Money,
    pub payouts: BTreeMap<usize, Money>,
    pub withheld: u64,
    pub attacker_won: bool,
    pub sybil_admitted: usize,
    pub sybil_spend: u64,
    /// Protocol-level rejections, in the order they happened.
    pub rejections: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlayerSummary {
    pub index: usize,
    pub seed: String,
    pub address: Address,
    /// Rounds in which the player held a winning share.
    pub wins: u64,
    pub total_payout: Money,
    pub final_balance: Money,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeAttackMetrics {
    pub mode: String,
    #[serde(serialize_with = "float17")]
    pub mining_share: f64,
    pub attacker_wins: u64,
    pub total_rounds: u64,
    pub withhold_count: u64,
}

impl NodeAttackMetrics {
    pub fn win_rate(&self) -> f64 {
        if self.total_rounds == 0 {
            return 0.0;
        }
        self.attacker_wins as f64 / self.total_rounds as f64
    }

    /// `mode,mining_share,attacker_wins,total_rounds,withhold_count`
    pub fn record(&self) -> String {
        format!(
            "{},{},{},{},{}",
            self.mode, self.mining_share, self.attacker_wins, self.total_rounds, self.withhold_count
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SybilMetrics {
    pub sybil_admitted: u64,
    pub sybil_spend: u64,
}

impl SybilMetrics {
    /// `sybil_admitted,sybil_spend`
    pub fn record(&self) -> String {
        format!("{},{}", self.sybil_admitted, self.sybil_spend)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunReport {
    pub scenario_name: String,
    pub seed: u64,
    pub mode: String,
    pub pool_mode: String,
    pub rounds: Vec<RoundRecord>,
    pub players: Vec<PlayerSummary>,
    pub winner_histogram: BTreeMap<usize, u64>,
    pub conservation_residual: i128,
    pub fee_sink: Money,
    pub minted: Money,
    /// Uniformity of the winner histogram; absent when nobody won.
    pub chi_square: Option<ChiSquare>,
    pub node_attack: Option<NodeAttackMetrics>,
    pub sybil: Option<SybilMetrics>,
    pub notes: Vec<String>,
    /// Wall time of the run. Kept out of the serialized form so reports
    /// stay byte-identical across invocations.
    #[serde(skip)]
    pub elapsed: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AggregateNodeAttack {
    pub mode: String,
    #[serde(serialize_with = "float17")]
    pub mining_share: f64,
    pub attacker_wins: u64,
    pub total_rounds: u64,
    pub withhold_count: u64,
    #[serde(serialize_with = "float17")]
    pub win_rate: f64,
    /// Binomial standard error of `win_rate` over all pooled rounds.
    #[serde(serialize_with = "float17")]
    pub pooled_se: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AggregateReport {
    pub scenario_name: String,
    pub base_seed: u64,
    pub n_seeds: u64,
    pub mode: String,
    pub pool_mode: String,
    pub residuals: Vec<i128>,
    pub all_conserved: bool,
    pub winner_histogram: BTreeMap<usize, u64>,
    pub chi_square: Option<ChiSquare>,
    pub chi_square_passes: u64,
    pub node_attack: Option<AggregateNodeAttack>,
    pub sybil: Option<SybilMetrics>,
    pub pass: bool,
    pub runs: Vec<RunReport>,
}

/// Win counts in player order.
pub(crate) fn dense_counts(histogram: &BTreeMap<usize, u64>) -> Vec<u64> {
    histogram.values().copied().collect()
}

pub(crate) fn histogram_chi_square(histogram: &BTreeMap<usize, u64>) -> Option<ChiSquare> {
    chi_square_uniform(&dense_counts(histogram)).ok()
}

/// Folds run reports, in the order given, into an aggregate. Any nonzero
/// residual makes the aggregate fail.
pub fn aggregate(runs: Vec<RunReport>) -> AggregateReport {
    let first = runs.first();
    let scenario_name = first.map(|r| r.scenario_name.clone()).unwrap_or_default();
    let mode = first.map(|r| r.mode.clone()).unwrap_or_default();
    let pool_mode = first.map(|r| r.pool_mode.clone()).unwrap_or_default();
    let base_seed = first.map_or(0, |r| r.seed);

    let residuals: Vec<i128> = runs.iter().map(|r| r.conservation_residual).collect();
    let all_conserved = residuals.iter().all(|r| *r == 0);

    let mut winner_histogram: BTreeMap<usize, u64> = BTreeMap::new();
    for run in &runs {
        for (player, wins) in &run.winner_histogram {
            *winner_histogram.entry(*player).or_default() += wins;
        }
    }
    let chi_square = histogram_chi_square(&winner_histogram);
    let chi_square_passes = runs
        .iter()
        .filter(|r| r.chi_square.is_some_and(|c| c.pass))
        .count() as u64;

    let node_attack = runs
        .iter()
        .filter_map(|r| r.node_attack.as_ref())
        .fold(None::<AggregateNodeAttack>, |acc, m| {
            let mut a = acc.unwrap_or(AggregateNodeAttack {
                mode: m.mode.clone(),
                mining_share: m.mining_share,
                attacker_wins: 0,
                total_rounds: 0,
                withhold_count: 0,
                win_rate: 0.0,
                pooled_se: 0.0,
            });
            a.attacker_wins += m.attacker_wins;
            a.total_rounds += m.total_rounds;
            a.withhold_count += m.withhold_count;
            Some(a)
        })
        .map(|mut a| {
            a.win_rate = if a.total_rounds == 0 {
                0.0
            } else {
                a.attacker_wins as f64 / a.total_rounds as f64
            };
            a.pooled_se = proportion_se(a.attacker_wins, a.total_rounds);
            a
        });

    let sybil = runs
        .iter()
        .filter_map(|r| r.sybil)
        .reduce(|a, b| SybilMetrics {
            sybil_admitted: a.sybil_admitted + b.sybil_admitted,
            sybil_spend: a.sybil_spend + b.sybil_spend,
        });

    AggregateReport {
        scenario_name,
        base_seed,
        n_seeds: runs.len() as u64,
        mode,
        pool_mode,
        residuals,
        all_conserved,
        winner_histogram,
        chi_square,
        chi_square_passes,
        node_attack,
        sybil,
        pass: all_conserved && !runs.is_empty(),
        runs,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Csv,
}

impl ReportFormat {
    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "json" => Some(ReportFormat::Json),
            "csv" => Some(ReportFormat::Csv),
            _ => None,
        }
    }
}

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: String,
        #[source]
        source: serde_json::Error,
    },
}

pub fn to_json(report: &AggregateReport) -> String {
    let mut out = serde_json::to_string_pretty(report).expect("reports always serialize");
    out.push('\n');
    out
}

pub const CSV_HEADER: &str = "seed,player,address_hex,wins,final_balance";

/// One row per (seed, player) under [`CSV_HEADER`].
pub fn to_csv(report: &AggregateReport) -> String {
    let mut out = String::new();
    out.push_str(CSV_HEADER);
    out.push('\n');
    for run in &report.runs {
        for p in &run.players {
            let _ = writeln!(out, "{},{},{},{},{}", run.seed, p.index, p.address.to_hex(), p.wins, p.final_balance);
        }
    }
    out
}

pub fn emit_report(report: &AggregateReport, out_path: impl AsRef<Path>, format: ReportFormat) -> Result<(), ReportError> {
    let path = out_path.as_ref();
    let body = match format {
        ReportFormat::Json => to_json(report),
        ReportFormat::Csv => to_csv(report),
    };
    std::fs::write(path, body).map_err(|source| ReportError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn load_report(path: impl AsRef<Path>) -> Result<AggregateReport, ReportError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| ReportError::Io {
        path: path.display().to_string(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|source| ReportError::Json {
        path: path.display().to_string(),
        source,
    })
}

/// Re-checks a loaded report. Returns one message per violated invariant;
/// an empty list means the report is sound.
pub fn verify_report(report: &AggregateReport) -> Vec<String> {
    let mut problems = Vec::new();
    if report.runs.is_empty() {
        problems.push("report contains no runs".to_string());
    }
    if report.n_seeds != report.runs.len() as u64 {
        problems.push(format!("n_seeds = {} but {} runs present", report.n_seeds, report.runs.len()));
    }
    for run in &report.runs {
        let seed = run.seed;
        if run.conservation_residual != 0 {
            problems.push(format!("seed {seed}: conservation residual {}", run.conservation_residual));
        }
        let mut histogram: BTreeMap<usize, u64> = run.players.iter().map(|p| (p.index, 0)).collect();
        for round in &run.rounds {
            for p in &round.winning_players {
                *histogram.entry(*p).or_default() += 1;
            }
        }
        if histogram != run.winner_histogram {
            problems.push(format!("seed {seed}: winner histogram disagrees with round records"));
        }
        if run.players.iter().any(|p| run.winner_histogram.get(&p.index) != Some(&p.wins)) {
            problems.push(format!("seed {seed}: player win counts disagree with the histogram"));
        }
        if histogram_chi_square(&run.winner_histogram) != run.chi_square {
            problems.push(format!("seed {seed}: chi-square statistic does not match the histogram"));
        }
        if let Some(m) = &run.node_attack {
            let wins = run.rounds.iter().filter(|r| r.attacker_won).count() as u64;
            let withheld: u64 = run.rounds.iter().map(|r| r.withheld).sum();
            if m.attacker_wins != wins || m.total_rounds != run.rounds.len() as u64 || m.withhold_count != withheld {
                problems.push(format!("seed {seed}: node attack metrics disagree with round records"));
            }
        }
        if let Some(s) = &run.sybil {
            let admitted: u64 = run.rounds.iter().map(|r| r.sybil_admitted as u64).sum();
            let spend: u64 = run.rounds.iter().map(|r| r.sybil_spend).sum();
            if s.sybil_admitted != admitted || s.sybil_spend != spend {
                problems.push(format!("seed {seed}: sybil metrics disagree with round records"));
            }
        }
    }
    let expected = aggregate(report.runs.clone());
    if expected.residuals != report.residuals || expected.all_conserved != report.all_conserved {
        problems.push("aggregate residuals disagree with runs".to_string());
    }
    if expected.winner_histogram != report.winner_histogram || expected.chi_square_passes != report.chi_square_passes {
        problems.push("aggregate histogram disagrees with runs".to_string());
    }
    if expected.node_attack != report.node_attack || expected.sybil != report.sybil {
        problems.push("aggregate attack metrics disagree with runs".to_string());
    }
    if !report.pass || expected.pass != report.pass {
        problems.push("aggregate is flagged failing".to_string());
    }
    problems
}
