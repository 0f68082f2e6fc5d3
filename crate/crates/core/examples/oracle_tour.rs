//! Exact quantities of the golden conflict chain at the uniform policy, from
//! action values through to the min-norm task weights.
//!
//! `cargo run --example oracle_tour`

use mtac::mdp::{build_one_hot_features, conflict_chain};
use mtac::oracle::{optimal_value, ExactEvaluation};
use mtac::policy::PolicyParams;

fn main() -> mtac::Result<()> {
    let mdp = conflict_chain();
    let features = build_one_hot_features(&mdp);
    let policy = PolicyParams::one_hot(mdp.num_states(), mdp.num_actions());
    let eval = ExactEvaluation::compute(&mdp, &policy, Some(&features))?;

    for (k, task) in eval.tasks.iter().enumerate() {
        println!("task {k}: J = {:.4} (optimum {:.4})", task.j, optimal_value(&mdp, k));
        println!("  Q(s, left/right):");
        for s in 0..mdp.num_states() {
            let q = &task.q;
            let d = &task.visitation;
            println!("    s={s}  Q = ({:.4}, {:.4})  d = ({:.4}, {:.4})", q[2 * s], q[2 * s + 1], d[2 * s], d[2 * s + 1]);
        }
        println!("  |grad J| = {:.4e}", task.policy_gradient.norm());
        if let Some(td) = &task.td {
            println!("  TD fixed point: |w*| = {:.4}, lambda_A = {:.4}", td.w_star.norm(), td.lambda_a);
        }
    }
    println!("lambda* = {:?}", eval.lambda_star.as_slice());
    println!("Pareto gap |lambda*' grad J|^2 = {:.4e}", eval.pareto_gap);
    Ok(())
}
