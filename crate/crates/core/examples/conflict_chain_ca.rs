//! One MTAC run with multi-step (CA) weight updates on the golden conflict
//! chain, printing the oracle diagnostics every 20 outer steps.
//!
//! `cargo run --release --example conflict_chain_ca [seed]`

use mtac::driver::{least_squares_slope, mtac_run, MtacConfig};
use mtac::mdp::{build_one_hot_features, conflict_chain};

fn main() -> mtac::Result<()> {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(0);
    let mdp = conflict_chain();
    let features = build_one_hot_features(&mdp);
    let trace = mtac_run(&mdp, &features, &MtacConfig { seed, ..MtacConfig::default() })?;

    println!("{:>4} {:>16} {:>18} {:>11} {:>11}", "t", "lambda", "J", "gap", "CA dist");
    for row in trace.rows.iter().step_by(20) {
        println!(
            "{:>4} ({:.3}, {:.3}) ({:.4}, {:.4}) {:>11.3e} {:>11.3e}",
            row.t,
            row.lambda[0],
            row.lambda[1],
            row.j.as_ref().map_or(f64::NAN, |j| j[0]),
            row.j.as_ref().map_or(f64::NAN, |j| j[1]),
            row.pareto_gap.unwrap_or(f64::NAN),
            row.ca_distance.unwrap_or(f64::NAN),
        );
    }
    let gaps = trace.gaps();
    println!("gap slope {:.3e}, final gap {:.3e}", least_squares_slope(&gaps), trace.final_gap.unwrap_or(f64::NAN));
    for event in &trace.events {
        println!("event: {event}");
    }
    Ok(())
}
