//! Relative performance drop on the bundled MT10 weight-update ablation, and
//! on a hand-made pair of metric vectors with mixed directions.
//!
//! `cargo run --example delta_m`

use mtac::experiment::{delta_m_percent, Mt10Table};

fn main() -> mtac::Result<()> {
    let table = Mt10Table::shipped();
    println!("{} ({}), baseline = {} steps", table.benchmark, table.metric, table.baseline_steps);
    for row in &table.rows {
        let reported = row.reported_delta_m.map_or("-".to_string(), |d| format!("{d:.2}"));
        println!("  {:>2} steps: rate {:.2}  dm% {:>7.2}  (reported {reported})", row.steps, row.rate, table.delta_m(row.steps)?);
    }

    // Success rate (higher is better) and episode length (lower is better).
    let method = [0.9, 110.0];
    let baseline = [0.8, 100.0];
    let d = delta_m_percent(&method, &baseline, &[true, false])?;
    println!("mixed-direction example: {d:.2}%  (rate +12.5% helps, length +10% hurts)");
    Ok(())
}
