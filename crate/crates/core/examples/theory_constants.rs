//! Constants of the convergence analysis for the golden chain, including
//! the largest admissible actor and FC steps.
//!
//! `cargo run --example theory_constants`

use mtac::driver::{compute_theory_constants, TheoryInputs};
use mtac::mdp::{build_one_hot_features, conflict_chain};
use mtac::oracle::{doeblin_constants, ExactEvaluation};
use mtac::policy::PolicyParams;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> mtac::Result<()> {
    let mdp = conflict_chain();
    let features = build_one_hot_features(&mdp);
    let policy = PolicyParams::one_hot(5, 2);
    let eval = ExactEvaluation::compute(&mdp, &policy, Some(&features))?;
    let lip = policy.estimate_lipschitz(&mut ChaCha8Rng::seed_from_u64(0), 400, 3.0)?;
    let (_, rho) = doeblin_constants(&mdp, 0).expect("mixing floor gives a Doeblin constant");
    let w_max = eval.tasks.iter().filter_map(|t| t.td.as_ref()).map(|td| td.w_star.norm()).fold(0.0, f64::max);
    let lambda_a = eval.tasks.iter().filter_map(|t| t.td.as_ref()).map(|td| td.lambda_a).fold(f64::INFINITY, f64::min);

    let inputs = TheoryInputs {
        c_phi: policy.score_bound().max(features.c_phi_bound()),
        c_pi: lip.c_pi,
        l_phi: lip.l_phi,
        gamma: mdp.gamma(),
        m_erg: 1.0,
        rho,
        b: 1.5 * w_max,
        lambda_a,
    };
    println!("{inputs:#?}");
    println!("{:#?}", compute_theory_constants(&inputs)?);
    Ok(())
}
