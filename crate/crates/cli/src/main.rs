use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use delottery_core::chain::dump_chain;
use delottery_core::harness::{self, emit_report, load_report, load_scenario, verify_report, ReportFormat};
use delottery_core::lottery::PoolMode;
use delottery_core::registry::randomness_sources;

#[derive(Parser)]
#[command(name = "delottery-sim", version, about = "Deterministic simulator for a commit-reveal lottery")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario over a range of seeds and write the aggregate report.
    Run(RunArgs),
    /// Re-check conservation and schema of a JSON report.
    Verify {
        #[arg(long)]
        report: PathBuf,
    },
}

#[derive(Parser)]
struct RunArgs {
    #[arg(long)]
    scenario: PathBuf,
    /// Number of consecutive seeds to run.
    #[arg(long, default_value_t = 1)]
    seeds: u64,
    /// First seed; defaults to the scenario's base_seed.
    #[arg(long)]
    base_seed: Option<u64>,
    /// Overrides the scenario's randomness source.
    #[arg(long)]
    mode: Option<String>,
    #[arg(long, value_enum)]
    pool_mode: Option<PoolModeArg>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t = FormatArg::Json)]
    format: FormatArg,
    /// Also write chain, transcript, settlement and attack dumps of the
    /// first seed into this directory.
    #[arg(long)]
    dump: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum PoolModeArg {
    Literal,
    Consistent,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Json,
    Csv,
}

fn write_dumps(dir: &Path, scenario: &harness::Scenario, seed: u64) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let sim = harness::simulate(scenario, seed);
    let mut files = vec![("chain.csv", dump_chain(sim.ledger.chain()))];
    if let Some(lottery) = &sim.last_lottery {
        if let Some(round) = lottery.round() {
            files.push(("transcript.csv", round.transcript()));
        }
        files.push(("settlement.csv", lottery.settlement_report(&sim.ledger)));
    }
    if let Some(m) = &sim.report.node_attack {
        files.push(("node_attack.csv", format!("{}\n", m.record())));
    }
    if let Some(s) = &sim.report.sybil {
        files.push(("sybil.csv", format!("{}\n", s.record())));
    }
    for (name, body) in files {
        let path = dir.join(name);
        std::fs::write(&path, body).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

fn run(args: RunArgs) -> Result<bool> {
    let mut scenario = load_scenario(&args.scenario).with_context(|| format!("loading {}", args.scenario.display()))?;
    if args.seeds == 0 {
        bail!("--seeds must be at least 1");
    }
    if let Some(seed) = args.base_seed {
        scenario.base_seed = seed;
    }
    if let Some(mode) = &args.mode {
        let sources = randomness_sources();
        let Some(source) = sources.get(mode) else {
            let known: Vec<&str> = sources.names().collect();
            bail!("unknown mode {mode:?}; known: {}", known.join(", "));
        };
        scenario.rng_mode = source.mode();
    }
    if let Some(pool) = args.pool_mode {
        scenario.config.pool_mode = match pool {
            PoolModeArg::Literal => PoolMode::PaperLiteral,
            PoolModeArg::Consistent => PoolMode::ConservationConsistent,
        };
    }

    let started = Instant::now();
    let report = harness::run_many(&scenario, args.seeds);
    let format = match args.format {
        FormatArg::Json => ReportFormat::Json,
        FormatArg::Csv => ReportFormat::Csv,
    };
    emit_report(&report, &args.out, format)?;
    if let Some(dir) = &args.dump {
        write_dumps(dir, &scenario, scenario.base_seed)?;
    }
    eprintln!(
        "{}: {} seed(s), conserved={}, chi-square passes {}/{}, {:.2}s",
        report.scenario_name,
        report.n_seeds,
        report.all_conserved,
        report.chi_square_passes,
        report.n_seeds,
        started.elapsed().as_secs_f64()
    );
    if let Some(a) = &report.node_attack {
        eprintln!(
            "node attack ({}): win rate {:.4} ± {:.4} over {} rounds, {} withheld blocks",
            a.mode, a.win_rate, a.pooled_se, a.total_rounds, a.withhold_count
        );
    }
    if let Some(s) = &report.sybil {
        eprintln!("sybil: {} admitted, {} hash attempts spent", s.sybil_admitted, s.sybil_spend);
    }
    Ok(report.pass)
}

fn verify(path: &Path) -> Result<bool> {
    let report = load_report(path)?;
    let problems = verify_report(&report);
    for p in &problems {
        eprintln!("FAIL {p}");
    }
    if problems.is_empty() {
        eprintln!("ok: {} run(s) verified", report.runs.len());
    }
    Ok(problems.is_empty())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run(args) => run(args),
        Command::Verify { report } => verify(&report),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
