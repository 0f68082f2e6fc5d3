//! Builds an MDP by hand and saves it as JSON. A spec pointing at the file
//! then drives the oracle invariant suite.
//!
//! `cargo run --example custom_mdp`

use mtac::experiment::{oracle_check, ExperimentSpec};
use mtac::mdp::MultiTaskMdp;

fn main() -> mtac::Result<()> {
    // Two states, two actions. Action 0 stays and action 1 switches, each
    // with probability 0.8. Task 0 likes state 0 and task 1 likes state 1.
    let (stay, switch) = ([0.8, 0.2], [0.2, 0.8]);
    let mut kernel = Vec::new();
    for s in 0..2 {
        for a in 0..2 {
            let row = if a == 0 { stay } else { switch };
            kernel.extend(if s == 0 { row } else { [row[1], row[0]] });
        }
    }
    let mdp = MultiTaskMdp::new(
        2,
        2,
        0.9,
        vec![kernel.clone(), kernel],
        vec![vec![1.0, 1.0, 0.0, 0.0], vec![0.0, 0.0, 1.0, 1.0]],
        vec![vec![0.5, 0.5], vec![0.5, 0.5]],
    )?;

    let dir = std::env::temp_dir().join("mtac-custom-mdp");
    std::fs::create_dir_all(&dir)?;
    let path = dir.join("two_state.json");
    std::fs::write(&path, serde_json::to_vec_pretty(&mdp).expect("serializable"))?;

    let spec = ExperimentSpec::from_toml_str(&format!("[mdp]\nbuilder = \"file\"\npath = {:?}\n", path), None)?;
    let report = oracle_check(&spec)?;
    print!("{report}");
    println!("all checks passed: {}", report.passed());
    Ok(())
}
