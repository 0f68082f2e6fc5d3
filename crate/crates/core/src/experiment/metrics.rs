use std::fmt;

use serde::{Deserialize, Serialize};

use super::run::SummaryReport;
use crate::error::{Error, Result};

/// Average relative per-task drop of `method` against `baseline`, in percent:
/// `(1/K) Σ_k (−1)^{δ_k} (M_{m,k} − M_{b,k}) / M_{b,k} × 100`, with `δ_k = 1`
/// when larger values of metric `k` are better. Lower is better.
pub fn delta_m_percent(method: &[f64], baseline: &[f64], larger_is_better: &[bool]) -> Result<f64> {
    let k = baseline.len();
    for len in [method.len(), larger_is_better.len()] {
        if len != k {
            return Err(Error::DimensionMismatch { expected: k, found: len });
        }
    }
    if k == 0 {
        return Err(Error::config("no metrics to compare"));
    }
    let mut total = 0.0;
    for (index, ((m, b), larger)) in method.iter().zip(baseline).zip(larger_is_better).enumerate() {
        if *b == 0.0 {
            return Err(Error::ZeroBaseline { index });
        }
        let sign = if *larger { -1.0 } else { 1.0 };
        total += sign * (m - b) / b;
    }
    Ok(total / k as f64 * 100.0)
}

/// Per-task success rates from the MT10 weight-update ablation, shipped as
/// a static fixture for checking the relative-drop arithmetic.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Mt10Table {
    pub benchmark: String,
    pub metric: String,
    pub larger_is_better: bool,
    pub baseline_steps: u32,
    pub rows: Vec<Mt10Row>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Mt10Row {
    /// Weight-update steps per outer iteration.
    pub steps: u32,
    pub rate: f64,
    pub per_task: Vec<f64>,
    pub reported_delta_m: Option<f64>,
}

const MT10_FIXTURE: &str = include_str!("../../fixtures/mt10_update_steps.json");

impl Mt10Table {
    pub fn shipped() -> Self {
        serde_json::from_str(MT10_FIXTURE).expect("bundled fixture parses")
    }

    pub fn row(&self, steps: u32) -> Option<&Mt10Row> {
        self.rows.iter().find(|r| r.steps == steps)
    }

    /// Δm% of the row with `steps` against the baseline row.
    pub fn delta_m(&self, steps: u32) -> Result<f64> {
        let missing = |s| Error::config(format!("no row with {s} steps"));
        let base = self.row(self.baseline_steps).ok_or_else(|| missing(self.baseline_steps))?;
        let row = self.row(steps).ok_or_else(|| missing(steps))?;
        delta_m_percent(&row.per_task, &base.per_task, &vec![self.larger_is_better; base.per_task.len()])
    }
}

/// One line of a comparison against a named baseline summary.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub name: String,
    pub option: String,
    pub mean_final_j: Vec<f64>,
    pub median_final_gap: Option<f64>,
    pub median_mean_ca_distance: Option<f64>,
    pub median_delta_m_vs_optimal: Option<f64>,
    /// Δm% of the mean final per-task values against the baseline's.
    pub delta_m_vs_baseline: Option<f64>,
    pub note: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub baseline: String,
    pub rows: Vec<ComparisonRow>,
}

fn mean_final_j(s: &SummaryReport) -> Option<Vec<f64>> {
    let finals: Vec<&Vec<f64>> = s.runs.iter().filter_map(|r| r.final_j.as_ref()).collect();
    if finals.is_empty() {
        return None;
    }
    let k = finals[0].len();
    Some((0..k).map(|i| finals.iter().map(|j| j[i]).sum::<f64>() / finals.len() as f64).collect())
}

/// Compares summaries against the one named `baseline`. Δm% is only filled
/// in when a summary shares the baseline's MDP and seed set.
pub fn compare_summaries(summaries: &[SummaryReport], baseline: &str) -> Result<ComparisonTable> {
    let base = summaries
        .iter()
        .find(|s| s.name == baseline)
        .ok_or_else(|| Error::config(format!("no summary named {baseline:?}")))?;
    let base_j = mean_final_j(base);
    let mut base_seeds = base.seeds.clone();
    base_seeds.sort_unstable();
    let rows = summaries
        .iter()
        .map(|s| {
            let mean_j = mean_final_j(s);
            let mut seeds = s.seeds.clone();
            seeds.sort_unstable();
            let (delta, note) = if s.mdp_digest != base.mdp_digest {
                (None, Some("different MDP".to_string()))
            } else if seeds != base_seeds {
                (None, Some("different seed set".to_string()))
            } else {
                match (&mean_j, &base_j) {
                    (Some(m), Some(b)) => match delta_m_percent(m, b, &vec![true; b.len()]) {
                        Ok(d) => (Some(d), None),
                        Err(e) => (None, Some(e.to_string())),
                    },
                    _ => (None, Some("no final values".to_string())),
                }
            };
            ComparisonRow {
                name: s.name.clone(),
                option: s.option.clone(),
                mean_final_j: mean_j.unwrap_or_default(),
                median_final_gap: s.median_final_gap,
                median_mean_ca_distance: s.median_mean_ca_distance,
                median_delta_m_vs_optimal: s.median_delta_m_vs_optimal,
                delta_m_vs_baseline: delta,
                note,
            }
        })
        .collect();
    Ok(ComparisonTable { baseline: baseline.to_string(), rows })
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.4e}")).unwrap_or_else(|| "-".into())
}

impl fmt::Display for ComparisonTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{:<16} {:<6} {:>12} {:>12} {:>12} {:>12}  final J",
            "name", "option", "gap", "ca_dist", "dm%_opt", "dm%_base"
        )?;
        for r in &self.rows {
            let j: Vec<String> = r.mean_final_j.iter().map(|x| format!("{x:.4}")).collect();
            write!(
                f,
                "{:<16} {:<6} {:>12} {:>12} {:>12} {:>12}  [{}]",
                r.name,
                r.option,
                cell(r.median_final_gap),
                cell(r.median_mean_ca_distance),
                r.median_delta_m_vs_optimal.map(|x| format!("{x:.2}")).unwrap_or_else(|| "-".into()),
                r.delta_m_vs_baseline.map(|x| format!("{x:.2}")).unwrap_or_else(|| "-".into()),
                j.join(", ")
            )?;
            if let Some(note) = &r.note {
                write!(f, "  ({note})")?;
            }
            writeln!(f)?;
        }
        write!(f, "baseline: {}", self.baseline)
    }
}
