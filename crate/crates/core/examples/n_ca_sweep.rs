//! Sweeps the number of CA steps per outer iteration through the spec API
//! and prints the median CA distance and final gap per value.
//!
//! `cargo run --release --example n_ca_sweep`

use mtac::experiment::{run_sweep, ExperimentSpec};

fn main() -> mtac::Result<()> {
    let dir = std::env::temp_dir().join("mtac-n-ca-sweep");
    let text = format!(
        r#"
name = "n_ca_sweep"
seeds = [0, 1, 2, 3, 4]
output_dir = {dir:?}

[mdp]
builder = "conflict_chain"

[algorithm]
option = "ca"
iterations = 40
record_timing = false

[sweep]
parameter = "n_ca"
values = [30, 300, 3000]
"#
    );
    let spec = ExperimentSpec::from_toml_str(&text, None)?;
    let (sweep, _) = run_sweep(&spec)?;
    println!("{:>8} {:>14} {:>14}", sweep.parameter, "CA distance", "final gap");
    for p in &sweep.points {
        println!(
            "{:>8} {:>14.4e} {:>14.4e}",
            p.value,
            p.median_mean_ca_distance.unwrap_or(f64::NAN),
            p.median_final_gap.unwrap_or(f64::NAN)
        );
    }
    println!("per-point traces under {}", dir.display());
    Ok(())
}
