//! Loads a TOML spec and runs every seed, the same path the `mtac run`
//! command takes. Output goes to a temporary directory unless
//! MTAC_OUTPUT_DIR is set.
//!
//! `cargo run --release --example experiment_spec [path/to/spec.toml]`

use std::path::PathBuf;

use mtac::experiment::{run_experiment, ExperimentSpec};

fn main() -> mtac::Result<()> {
    let path = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("examples/specs/random_mdp.toml"));
    let scratch = std::env::temp_dir().join("mtac-experiment-spec");
    let mut spec = ExperimentSpec::load(&path)?;
    if std::env::var_os("MTAC_OUTPUT_DIR").is_none() {
        spec.output_dir = scratch;
    }
    println!("running {} ({} seeds) into {}", spec.label(), spec.seeds.len(), spec.output_dir.display());
    let report = run_experiment(&spec)?;
    for run in &report.runs {
        println!(
            "  seed {:>3}: gap {:.3e} -> {:.3e}, slope {:.2e}, final J {:?}",
            run.seed,
            run.initial_gap.unwrap_or(f64::NAN),
            run.final_gap.unwrap_or(f64::NAN),
            run.gap_slope.unwrap_or(f64::NAN),
            run.final_j.as_deref().unwrap_or_default(),
        );
    }
    println!("median final gap {:.3e}", report.median_final_gap.unwrap_or(f64::NAN));
    Ok(())
}
