//! Command-line front end: `run`, `sweep`, `oracle-check` and `report`.
//!
//! Exit codes: 0 success, 2 invalid spec or arguments, 3 I/O failure,
//! 4 numeric failure or an aborted run, 5 failed oracle check.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use mtac::experiment::{compare_summaries, oracle_check, run_experiment, run_sweep, ExperimentSpec, SummaryReport};
use mtac::Error;

#[derive(Parser)]
#[command(name = "mtac", version, about = "Multi-task actor-critic experiments on tabular MDPs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every seed of a spec and write traces plus summary.json.
    Run { spec: PathBuf },
    /// Run the spec once per value of its [sweep] section.
    Sweep { spec: PathBuf },
    /// Check the exact-oracle invariants on the spec's MDP and features.
    OracleCheck { spec: PathBuf },
    /// Compare summary.json files against the one named by --baseline.
    Report {
        #[arg(long)]
        baseline: String,
        #[arg(required = true)]
        summaries: Vec<PathBuf>,
        /// Also write the comparison as JSON.
        #[arg(long)]
        json: Option<PathBuf>,
    },
}

const ABORTED: u8 = 4;
const ORACLE_FAILED: u8 = 5;

fn execute(command: Command) -> Result<u8, Error> {
    match command {
        Command::Run { spec } => {
            let spec = ExperimentSpec::load(&spec)?;
            let report = run_experiment(&spec)?;
            for r in &report.runs {
                println!(
                    "seed {:>4}  steps {:>5}  final gap {}  mean CA distance {}{}",
                    r.seed,
                    r.steps,
                    r.final_gap.map_or("-".into(), |g| format!("{g:.4e}")),
                    r.mean_ca_distance.map_or("-".into(), |g| format!("{g:.4e}")),
                    r.aborted.as_ref().map_or(String::new(), |e| format!("  ABORTED: {e}")),
                );
            }
            println!("summary written to {}", spec.output_dir.join("summary.json").display());
            Ok(if report.any_aborted() { ABORTED } else { 0 })
        }
        Command::Sweep { spec } => {
            let spec = ExperimentSpec::load(&spec)?;
            let (sweep, _) = run_sweep(&spec)?;
            println!("{:>12} {:>14} {:>14}", sweep.parameter, "final gap", "CA distance");
            for p in &sweep.points {
                println!(
                    "{:>12} {:>14} {:>14}",
                    p.value,
                    p.median_final_gap.map_or("-".into(), |g| format!("{g:.4e}")),
                    p.median_mean_ca_distance.map_or("-".into(), |g| format!("{g:.4e}")),
                );
            }
            Ok(if sweep.points.iter().any(|p| p.any_aborted) { ABORTED } else { 0 })
        }
        Command::OracleCheck { spec } => {
            let spec = ExperimentSpec::load(&spec)?;
            let report = oracle_check(&spec)?;
            print!("{report}");
            Ok(if report.passed() { 0 } else { ORACLE_FAILED })
        }
        Command::Report { baseline, summaries, json } => {
            let summaries = summaries.iter().map(|p| SummaryReport::read(p)).collect::<Result<Vec<_>, _>>()?;
            let table = compare_summaries(&summaries, &baseline)?;
            println!("{table}");
            if let Some(path) = json {
                let text = serde_json::to_vec_pretty(&table).map_err(|e| Error::Parse(e.to_string()))?;
                mtac::experiment::write_atomic(&path, &text)?;
            }
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
