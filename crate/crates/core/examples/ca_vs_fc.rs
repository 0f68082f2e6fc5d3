//! The sample-complexity versus CA-distance trade-off on the golden chain.
//! A fixed uniform baseline runs alongside CA and FC, ten seeds each.
//!
//! `cargo run --release --example ca_vs_fc`

use mtac::driver::{mtac_run, MtacConfig, TrainingTrace, WeightOption};
use mtac::experiment::delta_m_percent;
use mtac::mdp::{build_one_hot_features, conflict_chain};
use mtac::oracle::optimal_value;

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    0.5 * (xs[(n - 1) / 2] + xs[n / 2])
}

fn main() -> mtac::Result<()> {
    let mdp = conflict_chain();
    let features = build_one_hot_features(&mdp);
    let optimal: Vec<f64> = (0..2).map(|k| optimal_value(&mdp, k)).collect();
    let base = MtacConfig::default();
    let options = [
        ("CA", base.clone()),
        ("FC", MtacConfig { option: WeightOption::Fc, ..base.clone() }),
        // Same per-step budget: the weight-update samples go to the actor.
        ("fixed", MtacConfig { option: WeightOption::Fixed(vec![0.5, 0.5]), n_actor: base.n_actor + 2 * base.n_ca, ..base.clone() }),
    ];
    println!("{:<6} {:>12} {:>12} {:>10} {:>10} {:>12}", "option", "final gap", "CA dist", "ms/step", "dm% opt", "samples");
    for (name, config) in options {
        let traces: Vec<TrainingTrace> =
            (0..10).map(|seed| mtac_run(&mdp, &features, &MtacConfig { seed, ..config.clone() })).collect::<Result<_, _>>()?;
        let mean = |xs: Vec<f64>| xs.iter().sum::<f64>() / xs.len().max(1) as f64;
        let gap = median(traces.iter().map(|t| t.final_gap.unwrap_or(f64::NAN)).collect());
        let dist = median(traces.iter().map(|t| mean(t.ca_distances())).collect());
        let ms = median(traces.iter().map(TrainingTrace::mean_elapsed_ms).collect());
        let dm = median(
            traces.iter().filter_map(|t| t.final_j.as_ref()).map(|j| delta_m_percent(j, &optimal, &[true, true]).unwrap()).collect(),
        );
        println!("{name:<6} {gap:>12.3e} {dist:>12.3e} {ms:>10.2} {dm:>10.2} {:>12}", traces[0].samples_consumed);
    }
    Ok(())
}
