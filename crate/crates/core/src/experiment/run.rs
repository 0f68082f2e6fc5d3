use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::metrics::delta_m_percent;
use super::{AlgorithmSpec, ExperimentSpec};
use crate::driver::{least_squares_slope, mtac_run, TrainingTrace};
use crate::error::{Error, Result};
use crate::mdp::{FeatureMap, MultiTaskMdp};
use crate::oracle::optimal_value;

/// Writes `contents` to a sibling temporary file, then renames it over
/// `path`, so readers never see a partial file.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, contents)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub seed: u64,
    pub steps: usize,
    pub initial_gap: Option<f64>,
    pub final_gap: Option<f64>,
    /// Least-squares slope of the per-step Pareto gap.
    pub gap_slope: Option<f64>,
    pub mean_ca_distance: Option<f64>,
    pub final_j: Option<Vec<f64>>,
    /// Δm% of the final values against the per-task optimal values.
    pub delta_m_vs_optimal: Option<f64>,
    pub samples_consumed: u64,
    pub mean_step_ms: f64,
    pub events: Vec<String>,
    pub aborted: Option<String>,
}

impl RunSummary {
    pub fn from_trace(seed: u64, trace: &TrainingTrace, optimal: &[f64]) -> Self {
        let gaps = trace.gaps();
        let ca = trace.ca_distances();
        let delta = trace
            .final_j
            .as_ref()
            .and_then(|j| delta_m_percent(j, optimal, &vec![true; optimal.len()]).ok());
        RunSummary {
            seed,
            steps: trace.rows.len(),
            initial_gap: gaps.first().copied(),
            final_gap: trace.final_gap,
            gap_slope: (gaps.len() >= 2).then(|| least_squares_slope(&gaps)),
            mean_ca_distance: (!ca.is_empty()).then(|| ca.iter().sum::<f64>() / ca.len() as f64),
            final_j: trace.final_j.clone(),
            delta_m_vs_optimal: delta,
            samples_consumed: trace.samples_consumed,
            mean_step_ms: trace.mean_elapsed_ms(),
            events: trace.events.clone(),
            aborted: trace.aborted.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryReport {
    pub name: String,
    pub option: String,
    /// SHA-256 of the MDP's JSON form; comparisons require equal digests.
    pub mdp_digest: String,
    pub seeds: Vec<u64>,
    pub num_tasks: usize,
    pub optimal_values: Vec<f64>,
    pub algorithm: AlgorithmSpec,
    pub runs: Vec<RunSummary>,
    pub median_final_gap: Option<f64>,
    pub median_mean_ca_distance: Option<f64>,
    pub median_delta_m_vs_optimal: Option<f64>,
}

impl SummaryReport {
    pub fn any_aborted(&self) -> bool {
        self.runs.iter().any(|r| r.aborted.is_some())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
    }
}

pub(crate) fn median(values: impl IntoIterator<Item = f64>) -> Option<f64> {
    let mut v: Vec<f64> = values.into_iter().collect();
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { (v[n / 2 - 1] + v[n / 2]) / 2.0 })
}

fn mdp_digest(mdp: &MultiTaskMdp) -> String {
    let json = serde_json::to_vec(mdp).expect("MDP serializes");
    Sha256::digest(&json).iter().map(|b| format!("{b:02x}")).collect()
}

fn pool(workers: Option<usize>) -> Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = workers {
        builder = builder.num_threads(n);
    }
    builder.build().map_err(|e| Error::config(format!("cannot start worker pool: {e}")))
}

struct Prepared {
    mdp: MultiTaskMdp,
    features: FeatureMap,
    optimal: Vec<f64>,
    digest: String,
}

fn prepare(spec: &ExperimentSpec) -> Result<Prepared> {
    let mdp = spec.build_mdp()?;
    let features = spec.build_features(&mdp)?;
    features.check_compatible(&mdp)?;
    let optimal = (0..mdp.num_tasks()).map(|k| optimal_value(&mdp, k)).collect();
    let digest = mdp_digest(&mdp);
    Ok(Prepared { mdp, features, optimal, digest })
}

fn run_seeds(
    spec: &ExperimentSpec,
    prepared: &Prepared,
    algorithm: &AlgorithmSpec,
    name: String,
    dir: &Path,
) -> Result<SummaryReport> {
    let k = prepared.mdp.num_tasks();
    // Fail on a bad config before any job starts.
    let configs = spec.seeds.iter().map(|&s| algorithm.to_config(s, k)).collect::<Result<Vec<_>>>()?;
    fs::create_dir_all(dir)?;
    let traces = configs
        .par_iter()
        .map(|cfg| {
            let trace = mtac_run(&prepared.mdp, &prepared.features, cfg)?;
            let csv = trace.to_csv(cfg.record_timing);
            write_atomic(&dir.join(format!("trace_seed{}.csv", cfg.seed)), csv.as_bytes())?;
            if cfg.critic_trace {
                write_atomic(&dir.join(format!("critic_seed{}.csv", cfg.seed)), trace.critic_csv().as_bytes())?;
            }
            for event in &trace.events {
                log::warn!("seed {}: {event}", cfg.seed);
            }
            Ok(RunSummary::from_trace(cfg.seed, &trace, &prepared.optimal))
        })
        .collect::<Result<Vec<_>>>()?;
    let report = SummaryReport {
        name,
        option: format!("{:?}", algorithm.option).to_lowercase(),
        mdp_digest: prepared.digest.clone(),
        seeds: spec.seeds.clone(),
        num_tasks: k,
        optimal_values: prepared.optimal.clone(),
        algorithm: algorithm.clone(),
        median_final_gap: median(traces.iter().filter_map(|r| r.final_gap)),
        median_mean_ca_distance: median(traces.iter().filter_map(|r| r.mean_ca_distance)),
        median_delta_m_vs_optimal: median(traces.iter().filter_map(|r| r.delta_m_vs_optimal)),
        runs: traces,
    };
    let json = serde_json::to_vec_pretty(&report).map_err(|e| Error::Parse(e.to_string()))?;
    write_atomic(&dir.join("summary.json"), &json)?;
    Ok(report)
}

/// Runs every seed of `spec` (ignoring any sweep section), writing
/// `trace_seed<seed>.csv` files and `summary.json` into the output directory.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<SummaryReport> {
    spec.validate()?;
    let prepared = prepare(spec)?;
    pool(spec.workers)?.install(|| run_seeds(spec, &prepared, &spec.algorithm, spec.label(), &spec.output_dir))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub value: f64,
    pub directory: PathBuf,
    pub median_final_gap: Option<f64>,
    pub median_mean_ca_distance: Option<f64>,
    pub median_delta_m_vs_optimal: Option<f64>,
    pub any_aborted: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub name: String,
    pub parameter: String,
    pub points: Vec<SweepPoint>,
}

/// Runs the spec once per sweep value, each point in its own
/// `<parameter>_<value>` subdirectory, and writes `sweep.json`.
pub fn run_sweep(spec: &ExperimentSpec) -> Result<(SweepReport, Vec<SummaryReport>)> {
    spec.validate()?;
    let sweep = spec.sweep.as_ref().ok_or_else(|| Error::config("spec has no [sweep] section"))?;
    let prepared = prepare(spec)?;
    let jobs = sweep
        .values
        .iter()
        .map(|&v| {
            let algorithm = sweep.parameter.apply(&spec.algorithm, v)?;
            let dir = spec.output_dir.join(format!("{}_{v}", sweep.parameter.name()));
            Ok((v, algorithm, dir))
        })
        .collect::<Result<Vec<_>>>()?;
    let reports = pool(spec.workers)?.install(|| {
        jobs.par_iter()
            .map(|(v, algorithm, dir)| {
                let name = format!("{}-{}{v}", spec.label(), sweep.parameter.name());
                run_seeds(spec, &prepared, algorithm, name, dir)
            })
            .collect::<Result<Vec<_>>>()
    })?;
    let points = jobs
        .iter()
        .zip(&reports)
        .map(|((v, _, dir), r)| SweepPoint {
            value: *v,
            directory: dir.clone(),
            median_final_gap: r.median_final_gap,
            median_mean_ca_distance: r.median_mean_ca_distance,
            median_delta_m_vs_optimal: r.median_delta_m_vs_optimal,
            any_aborted: r.any_aborted(),
        })
        .collect();
    let report = SweepReport { name: spec.label(), parameter: sweep.parameter.name().to_string(), points };
    let json = serde_json::to_vec_pretty(&report).map_err(|e| Error::Parse(e.to_string()))?;
    fs::create_dir_all(&spec.output_dir)?;
    write_atomic(&spec.output_dir.join("sweep.json"), &json)?;
    Ok((report, reports))
}
