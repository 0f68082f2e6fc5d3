//! Projected TD(0) on one task of the golden chain: the squared distance to
//! the exact fixed point shrinks roughly like 1/N.
//!
//! `cargo run --release --example critic_rate`

use mtac::critic::{run_td0, td_error_bound, TdStepSchedule};
use mtac::mdp::{build_one_hot_features, conflict_chain};
use mtac::oracle::exact_td_fixed_point;
use mtac::policy::PolicyParams;
use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> mtac::Result<()> {
    let mdp = conflict_chain();
    let features = build_one_hot_features(&mdp);
    let policy = PolicyParams::one_hot(mdp.num_states(), mdp.num_actions());
    let table = policy.tabulate()?;
    let fp = exact_td_fixed_point(&mdp, 0, &policy, &features)?;
    let radius = 1.5 * fp.w_star.norm();
    let schedule = TdStepSchedule::new(fp.lambda_a)?;
    println!("lambda_A = {:.4}, radius = {radius:.4}, |delta| bound = {:.4}", fp.lambda_a, td_error_bound(mdp.gamma(), 1.0, radius));
    println!("{:>8} {:>14} {:>14}", "N", "median err^2", "N * err^2");
    for n in [100usize, 1_000, 10_000, 100_000] {
        let mut errs: Vec<f64> = (0..20u64)
            .map(|seed| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let zero = DVector::zeros(features.dim());
                let out = run_td0(&mdp, 0, &table, features.task(0), n, schedule, radius, &zero, &mut rng).expect("td run");
                (out.w - &fp.w_star).norm_squared()
            })
            .collect();
        errs.sort_by(f64::total_cmp);
        let med = 0.5 * (errs[9] + errs[10]);
        println!("{n:>8} {med:>14.4e} {:>14.4}", med * n as f64);
    }
    Ok(())
}
