//! Scenario-driven experiments: loading scenario files, seeded runs,
//! statistics and reports.

pub mod prng;
pub mod report;
pub mod run;
pub mod scenario;
pub mod stats;

pub use report::{
    aggregate, emit_report, load_report, to_csv, to_json, verify_report, AggregateNodeAttack, AggregateReport,
    NodeAttackMetrics, PlayerSummary, ReportError, ReportFormat, RoundRecord, RunReport, SybilMetrics, CSV_HEADER,
};
pub use run::{run_many, run_once, simulate, Simulation};
pub use scenario::{
    load_scenario, parse_scenario, AttackerSpec, GuessStrategy, NodeAttackSpec, PlayerSpec, Scenario, ScenarioError,
    SybilAttackSpec,
};
pub use stats::{chi_square_uniform, ChiSquare, StatsError};
