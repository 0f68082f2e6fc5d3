//! The conflict-avoidant weights from the exact min-norm solver, next to the
//! CA subprocedure driven by exact gradients or by visitation samples.
//!
//! `cargo run --release --example min_norm_weights`

use mtac::critic::CriticWeights;
use mtac::direction::{ca_distance, ca_update_with, FixedGradients, GradientMatrix, TaskWeights, VisitationSampler};
use mtac::mdp::{build_one_hot_features, conflict_chain};
use mtac::oracle::{exact_gradients, exact_lambda_star, exact_smoothed_gradient, exact_td_fixed_point};
use mtac::policy::PolicyParams;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> mtac::Result<()> {
    let mdp = conflict_chain();
    let features = build_one_hot_features(&mdp);
    let policy = PolicyParams::one_hot(5, 2);
    let table = policy.tabulate()?;

    let grads = exact_gradients(&mdp, &policy)?;
    let star = exact_lambda_star(&grads);
    println!("exact lambda* = {:.6?}  gap = {:.4e}  certificate = {:.1e}", star.weights.as_slice(), star.gap, star.certificate);

    let w: Vec<_> = (0..2).map(|k| exact_td_fixed_point(&mdp, k, &policy, &features).map(|f| f.w_star)).collect::<Result<_, _>>()?;
    let critic = CriticWeights::new(w.clone(), 10.0)?;
    let smoothed = GradientMatrix::from_columns(
        &(0..2).map(|k| exact_smoothed_gradient(&mdp, k, &policy, &features, &w[k])).collect::<Result<Vec<_>, _>>()?,
    )?;
    let sampler = VisitationSampler { mdp: &mdp, policy: &policy, table: &table, features: &features, critic: &critic };

    println!("{:>7} {:>22} {:>22}", "N_CA", "exact: lambda / dist", "sampled: lambda / dist");
    for n in [100usize, 1_000, 10_000] {
        let start = TaskWeights::uniform(2);
        let exact = ca_update_with(&start, &FixedGradients(grads.clone()), n, 1.0, &mut ChaCha8Rng::seed_from_u64(1))?;
        let sampled = ca_update_with(&start, &sampler, n, 1.0, &mut ChaCha8Rng::seed_from_u64(1))?;
        println!(
            "{n:>7} {:>11.4} / {:.2e} {:>11.4} / {:.2e}",
            exact.as_slice()[0],
            ca_distance(&exact, &grads, &star.weights, &grads)?,
            sampled.as_slice()[0],
            ca_distance(&sampled, &smoothed, &star.weights, &grads)?,
        );
    }
    Ok(())
}
