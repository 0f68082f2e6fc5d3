//! The outer multi-task actor-critic loop.
//!
//! Each outer step evaluates the current policy with one projected TD(0)
//! critic per task, refreshes the task weights (multi-step CA, single-step
//! FC, or a fixed vector), estimates per-task actor gradients through the
//! critics and moves θ along the weighted combination.

use std::time::{Duration, Instant};

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::critic::{run_td0_observed, td_error_bound, CriticWeights, TdStepSchedule};
use crate::direction::{
    ca_distance, ca_update_with, fc_step_limit, fc_update_with, GradientMatrix, GradientSource, TaskWeights,
    VisitationSampler,
};
use crate::error::{Error, Result};
use crate::mdp::{FeatureMap, MultiTaskMdp};
use crate::oracle::{self, ExactEvaluation};
use crate::policy::{ActionTable, PolicyParams};

/// How task weights are refreshed each outer step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightOption {
    /// Multi-step projected SGD (small CA distance).
    Ca,
    /// Single averaged step (fast convergence).
    Fc,
    /// Constant weights, no update.
    Fixed(Vec<f64>),
}

impl WeightOption {
    pub fn name(&self) -> &'static str {
        match self {
            WeightOption::Ca => "ca",
            WeightOption::Fc => "fc",
            WeightOption::Fixed(_) => "fixed",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MtacConfig {
    /// Outer iterations `T`.
    pub iterations: usize,
    pub n_critic: usize,
    pub n_actor: usize,
    pub n_ca: usize,
    pub n_fc: usize,
    /// Actor step size β.
    pub beta: f64,
    /// CA step constant `c` (schedule `c/√(i+1)`).
    pub c: f64,
    /// FC step `c'`.
    pub c_prime: f64,
    pub option: WeightOption,
    pub seed: u64,
    /// Record the exact per-step diagnostics (values, gap, CA distance, critic error).
    pub oracle_diagnostics: bool,
    /// Critic ball radius; defaults to 1.5 × max_k ‖w*^k‖ at θ₀.
    pub radius: Option<f64>,
    /// Manual λ_A for the critic step size; otherwise computed per step.
    pub lambda_a: Option<f64>,
    /// Clamp β to the smoothness bound `1/L_J` instead of only warning.
    pub clamp_beta: bool,
    /// Record per-step wall-clock in the trace.
    pub record_timing: bool,
    /// Record every inner TD step.
    pub critic_trace: bool,
}

impl Default for MtacConfig {
    fn default() -> Self {
        MtacConfig {
            iterations: 200,
            n_critic: 2_000,
            n_actor: 500,
            n_ca: 2_000,
            n_fc: 2_000,
            beta: 1.0,
            c: 0.3,
            c_prime: 0.005,
            option: WeightOption::Ca,
            seed: 0,
            oracle_diagnostics: true,
            radius: None,
            lambda_a: None,
            clamp_beta: false,
            record_timing: true,
            critic_trace: false,
        }
    }
}

impl MtacConfig {
    pub fn validate(&self, num_tasks: usize) -> Result<()> {
        for (name, v) in [("n_critic", self.n_critic), ("n_actor", self.n_actor)] {
            if v == 0 {
                return Err(Error::config(format!("{name} must be at least 1")));
            }
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(Error::config(format!("beta must be positive, got {}", self.beta)));
        }
        match &self.option {
            WeightOption::Ca if self.n_ca == 0 || !(self.c > 0.0) => {
                Err(Error::config("the CA option needs n_ca >= 1 and c > 0"))
            }
            WeightOption::Fc if self.n_fc == 0 || !(self.c_prime > 0.0) => {
                Err(Error::config("the FC option needs n_fc >= 1 and c_prime > 0"))
            }
            WeightOption::Fixed(w) => {
                if w.len() != num_tasks {
                    return Err(Error::config(format!("fixed weights have {} entries for {num_tasks} tasks", w.len())));
                }
                TaskWeights::new(w.clone()).map(|_| ())
            }
            _ => Ok(()),
        }?;
        if let Some(r) = self.radius {
            if !(r > 0.0) {
                return Err(Error::config("radius must be positive"));
            }
        }
        if let Some(l) = self.lambda_a {
            TdStepSchedule::new(l)?;
        }
        Ok(())
    }

    /// State-action samples one outer step consumes across all tasks.
    pub fn samples_per_step(&self, num_tasks: usize) -> u64 {
        let weight = match self.option {
            WeightOption::Ca => 2 * self.n_ca,
            WeightOption::Fc => 2 * self.n_fc,
            WeightOption::Fixed(_) => 0,
        };
        (num_tasks * (self.n_critic + 1 + weight + self.n_actor)) as u64
    }
}

/// Inputs to the constants of the convergence analysis.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TheoryInputs {
    pub c_phi: f64,
    pub c_pi: f64,
    pub l_phi: f64,
    pub gamma: f64,
    pub m_erg: f64,
    pub rho: f64,
    pub b: f64,
    pub lambda_a: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TheoryConstants {
    pub l_pi: f64,
    pub l_j: f64,
    pub u_delta: f64,
    pub beta_max: f64,
    pub c_prime_max: f64,
    /// First critic step `1/(2λ_A)`.
    pub alpha_0: f64,
}

/// Constants derived from the smoothness analysis.
///
/// `L_π = (C_π/2)(1 + ⌈log_ρ m⌉ + 1/(1−ρ))`,
/// `L_J = (4 L_π C_φ + L_φ)/(1−γ)²`, `U_δ = 1 + (1+γ) C_φ B`,
/// `β_max = 1/L_J`, `c'_max = 1/(8 C_φ² B)`.
pub fn compute_theory_constants(p: &TheoryInputs) -> Result<TheoryConstants> {
    if !(p.rho > 0.0 && p.rho < 1.0) {
        return Err(Error::config(format!("rho must lie in (0, 1), got {}", p.rho)));
    }
    if !(0.0..1.0).contains(&p.gamma) {
        return Err(Error::config(format!("gamma must lie in [0, 1), got {}", p.gamma)));
    }
    for (name, v) in [("c_phi", p.c_phi), ("c_pi", p.c_pi), ("l_phi", p.l_phi), ("m", p.m_erg), ("lambda_a", p.lambda_a)]
    {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::config(format!("{name} must be positive, got {v}")));
        }
    }
    if !(p.b >= 0.0 && p.b.is_finite()) {
        return Err(Error::config(format!("B must be non-negative, got {}", p.b)));
    }
    let log_rho_m = (p.m_erg.ln() / p.rho.ln()).ceil();
    let l_pi = p.c_pi / 2.0 * (1.0 + log_rho_m + 1.0 / (1.0 - p.rho));
    let l_j = (4.0 * l_pi * p.c_phi + p.l_phi) / (1.0 - p.gamma).powi(2);
    let u_delta = td_error_bound(p.gamma, p.c_phi, p.b);
    Ok(TheoryConstants {
        l_pi,
        l_j,
        u_delta,
        beta_max: 1.0 / l_j,
        c_prime_max: if p.b > 0.0 { fc_step_limit(p.c_phi, p.b) } else { f64::INFINITY },
        alpha_0: 1.0 / (2.0 * p.lambda_a),
    })
}

/// Per-task mean of `n_actor` visitation-sample gradient estimates.
pub fn estimate_actor_gradients<R: rand::Rng>(
    mdp: &MultiTaskMdp,
    policy: &PolicyParams,
    features: &FeatureMap,
    critic: &CriticWeights,
    n_actor: usize,
    rng: &mut R,
) -> Result<GradientMatrix> {
    let table = policy.tabulate()?;
    Ok(actor_gradients_with(mdp, policy, &table, features, critic, n_actor, rng))
}

fn actor_gradients_with<R: rand::Rng>(
    mdp: &MultiTaskMdp,
    policy: &PolicyParams,
    table: &ActionTable,
    features: &FeatureMap,
    critic: &CriticWeights,
    n_actor: usize,
    rng: &mut R,
) -> GradientMatrix {
    let sampler = VisitationSampler { mdp, policy, table, features, critic };
    sampler.draw_mean(n_actor, rng)
}

/// `θ' = θ + β Σ_k λ_k ∇J^k`.
pub fn actor_step(policy: &PolicyParams, weights: &TaskWeights, grads: &GradientMatrix, beta: f64) -> Result<PolicyParams> {
    if !(beta >= 0.0) {
        return Err(Error::config(format!("beta must be non-negative, got {beta}")));
    }
    if grads.dim() != policy.dim() {
        return Err(Error::DimensionMismatch { expected: policy.dim(), found: grads.dim() });
    }
    let theta = policy.theta() + grads.combine(weights) * beta;
    if theta.iter().any(|x| !x.is_finite()) {
        return Err(Error::numeric("actor update produced non-finite parameters"));
    }
    policy.with_theta(theta)
}

/// Outer-step record.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub t: usize,
    /// Short digest of θ_t.
    pub theta_hash: String,
    /// Weights the actor used at this step (the freshly computed λ_{t+1}).
    pub lambda: Vec<f64>,
    pub j: Option<Vec<f64>>,
    pub pareto_gap: Option<f64>,
    pub ca_distance: Option<f64>,
    pub critic_err_max: Option<f64>,
    pub elapsed_ms: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CriticTraceRow {
    pub t: usize,
    pub task: usize,
    pub j: usize,
    pub delta: f64,
    pub err: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingTrace {
    pub num_tasks: usize,
    pub rows: Vec<TraceRow>,
    pub critic_rows: Vec<CriticTraceRow>,
    /// Warnings and notable events, in order.
    pub events: Vec<String>,
    pub final_theta: Vec<f64>,
    pub final_j: Option<Vec<f64>>,
    pub final_gap: Option<f64>,
    pub beta: f64,
    pub radius: f64,
    pub theory: Option<TheoryConstants>,
    pub samples_consumed: u64,
    /// Set when the run stopped early on a numeric failure.
    pub aborted: Option<String>,
}

pub const TRACE_CSV_VERSION: &str = "# mtac-trace v1";

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl TrainingTrace {
    pub fn csv_header(num_tasks: usize) -> String {
        let mut cols = vec!["t".to_string()];
        cols.extend((1..=num_tasks).map(|k| format!("lambda_{k}")));
        cols.extend((1..=num_tasks).map(|k| format!("J_{k}")));
        cols.extend(["pareto_gap", "ca_distance", "critic_err_max", "theta_hash", "elapsed_ms"].map(String::from));
        cols.join(",")
    }

    /// CSV with a version comment line and a header. Without timing the
    /// `elapsed_ms` column is left empty, so the body is deterministic.
    pub fn to_csv(&self, with_timing: bool) -> String {
        let mut out = format!("{TRACE_CSV_VERSION}\n{}\n", Self::csv_header(self.num_tasks));
        for row in &self.rows {
            let mut cells = vec![row.t.to_string()];
            cells.extend(row.lambda.iter().map(f64::to_string));
            match &row.j {
                Some(j) => cells.extend(j.iter().map(f64::to_string)),
                None => cells.extend(std::iter::repeat_n(String::new(), self.num_tasks)),
            }
            cells.push(fmt_opt(row.pareto_gap));
            cells.push(fmt_opt(row.ca_distance));
            cells.push(fmt_opt(row.critic_err_max));
            cells.push(row.theta_hash.clone());
            cells.push(if with_timing { row.elapsed_ms.to_string() } else { String::new() });
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }

    pub fn critic_csv(&self) -> String {
        let mut out = String::from("t,task,j,delta,err\n");
        for r in &self.critic_rows {
            out.push_str(&format!("{},{},{},{},{}\n", r.t, r.task, r.j, r.delta, fmt_opt(r.err)));
        }
        out
    }

    pub fn gaps(&self) -> Vec<f64> {
        self.rows.iter().filter_map(|r| r.pareto_gap).collect()
    }

    pub fn ca_distances(&self) -> Vec<f64> {
        self.rows.iter().filter_map(|r| r.ca_distance).collect()
    }

    pub fn mean_elapsed_ms(&self) -> f64 {
        if self.rows.is_empty() {
            return 0.0;
        }
        self.rows.iter().map(|r| r.elapsed_ms).sum::<f64>() / self.rows.len() as f64
    }
}

/// Least-squares slope of `ys` against `0, 1, 2, …`.
pub fn least_squares_slope(ys: &[f64]) -> f64 {
    let n = ys.len() as f64;
    if ys.len() < 2 {
        return 0.0;
    }
    let x_mean = (n - 1.0) / 2.0;
    let y_mean = ys.iter().sum::<f64>() / n;
    let (mut num, mut den) = (0.0, 0.0);
    for (i, y) in ys.iter().enumerate() {
        let dx = i as f64 - x_mean;
        num += dx * (y - y_mean);
        den += dx * dx;
    }
    num / den
}

pub fn theta_digest(theta: &DVector<f64>) -> String {
    let mut hasher = Sha256::new();
    for x in theta.iter() {
        hasher.update(x.to_le_bytes());
    }
    hasher.finalize().iter().take(8).map(|b| format!("{b:02x}")).collect()
}

const PHASE_CRITIC: u64 = 0;
const PHASE_WEIGHTS: u64 = 1;
const PHASE_ACTOR: u64 = 2;
const PHASE_SETUP: u64 = 3;

/// Independent, schedule-free random stream for `(seed, t, phase, task)`.
pub(crate) fn stream(seed: u64, t: usize, phase: u64, task: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((t as u64) << 24) | (phase << 16) | task as u64);
    rng
}

/// Runs the actor-critic loop from the uniform one-hot softmax policy.
pub fn mtac_run(mdp: &MultiTaskMdp, features: &FeatureMap, config: &MtacConfig) -> Result<TrainingTrace> {
    let policy = PolicyParams::one_hot(mdp.num_states(), mdp.num_actions());
    mtac_run_from(mdp, features, policy, config)
}

/// Runs the actor-critic loop from an arbitrary initial policy.
pub fn mtac_run_from(
    mdp: &MultiTaskMdp,
    features: &FeatureMap,
    initial_policy: PolicyParams,
    config: &MtacConfig,
) -> Result<TrainingTrace> {
    let k = mdp.num_tasks();
    features.check_compatible(mdp)?;
    config.validate(k)?;
    if initial_policy.num_states() != mdp.num_states() || initial_policy.num_actions() != mdp.num_actions() {
        return Err(Error::config("policy features do not match the MDP"));
    }
    let mut run = Run::new(mdp, features, initial_policy, config)?;
    for t in 0..config.iterations {
        if let Err(e) = run.outer_step(t) {
            run.trace.aborted = Some(e.to_string());
            run.trace.events.push(format!("t={t}: aborted: {e}"));
            break;
        }
    }
    run.finish()
}

struct Run<'a> {
    mdp: &'a MultiTaskMdp,
    features: &'a FeatureMap,
    config: &'a MtacConfig,
    policy: PolicyParams,
    critic: CriticWeights,
    lambda: TaskWeights,
    beta: f64,
    radius_warned: Vec<bool>,
    trace: TrainingTrace,
}

/// Exact quantities needed inside one outer step.
struct StepOracle {
    eval: Option<ExactEvaluation>,
    w_star: Vec<Option<DVector<f64>>>,
    lambda_a: Vec<f64>,
}

impl<'a> Run<'a> {
    fn new(mdp: &'a MultiTaskMdp, features: &'a FeatureMap, policy: PolicyParams, config: &'a MtacConfig) -> Result<Self> {
        let k = mdp.num_tasks();
        let mut events = Vec::new();
        let needs_setup_oracle = config.radius.is_none() || config.lambda_a.is_none();
        let initial = if needs_setup_oracle || config.oracle_diagnostics {
            Some(ExactEvaluation::compute(mdp, &policy, Some(features))?)
        } else {
            None
        };
        let radius = match (config.radius, &initial) {
            (Some(r), _) => r,
            (None, Some(eval)) => {
                let max = eval.tasks.iter().filter_map(|t| t.td.as_ref()).map(|td| td.w_star.norm()).fold(0.0, f64::max);
                if max > 0.0 {
                    1.5 * max
                } else {
                    1.0
                }
            }
            (None, None) => unreachable!("setup oracle runs whenever the radius is unset"),
        };
        let lambda = match &config.option {
            WeightOption::Fixed(w) => TaskWeights::new(w.clone())?,
            _ => TaskWeights::uniform(k),
        };

        let mut beta = config.beta;
        let theory = initial.as_ref().and_then(|eval| {
            let mut rng = stream(config.seed, 0, PHASE_SETUP, 0);
            let lip = policy.estimate_lipschitz(&mut rng, 400, 3.0).ok()?;
            let rho = (0..k).filter_map(|t| oracle::doeblin_constants(mdp, t)).map(|(_, r)| r).fold(None, |acc: Option<f64>, r| {
                Some(acc.map_or(r, |a| a.max(r)))
            })?;
            let lambda_a = config.lambda_a.or_else(|| {
                eval.tasks.iter().filter_map(|t| t.td.as_ref()).map(|td| td.lambda_a).reduce(f64::min)
            })?;
            let inputs = TheoryInputs {
                c_phi: policy.score_bound().max(features.c_phi_bound()),
                c_pi: lip.c_pi,
                l_phi: lip.l_phi,
                gamma: mdp.gamma(),
                m_erg: 1.0,
                rho: rho.max(f64::EPSILON),
                b: radius,
                lambda_a,
            };
            compute_theory_constants(&inputs).ok()
        });
        if let Some(th) = &theory {
            if beta > th.beta_max {
                if config.clamp_beta {
                    events.push(format!("beta {beta} clamped to 1/L_J = {}", th.beta_max));
                    beta = th.beta_max;
                } else {
                    events.push(format!("beta {beta} exceeds 1/L_J = {}", th.beta_max));
                }
            }
            if config.option == WeightOption::Fc && config.c_prime > th.c_prime_max {
                events.push(format!("c_prime {} exceeds 1/(8 C_phi^2 B) = {}", config.c_prime, th.c_prime_max));
            }
        }
        let critic = CriticWeights::zeros(k, features.dim(), radius)?;
        let trace = TrainingTrace {
            num_tasks: k,
            events,
            beta,
            radius,
            theory,
            ..Default::default()
        };
        Ok(Run { mdp, features, config, policy, critic, lambda, beta, radius_warned: vec![false; k], trace })
    }

    fn step_oracle(&mut self, t: usize) -> Result<StepOracle> {
        let k = self.mdp.num_tasks();
        if let (false, Some(la)) = (self.config.oracle_diagnostics, self.config.lambda_a) {
            return Ok(StepOracle { eval: None, w_star: vec![None; k], lambda_a: vec![la; k] });
        }
        let eval = ExactEvaluation::compute(self.mdp, &self.policy, Some(self.features))?;
        let mut lambda_a = Vec::with_capacity(k);
        let mut w_star = Vec::with_capacity(k);
        for (task, te) in eval.tasks.iter().enumerate() {
            let td = te.td.as_ref().expect("features were supplied");
            if !td.negative_definite {
                self.trace.events.push(format!("t={t}: A of task {task} is not negative definite"));
            }
            let la = match self.config.lambda_a {
                Some(l) => l,
                None if td.lambda_a > 0.0 => td.lambda_a,
                None => return Err(Error::numeric(format!("lambda_A of task {task} is not positive; set it manually"))),
            };
            lambda_a.push(la);
            if td.w_star.norm() > self.critic.radius() && !self.radius_warned[task] {
                self.radius_warned[task] = true;
                self.trace.events.push(format!(
                    "t={t}: radius {} below |w*| = {} for task {task}; projection biases the critic",
                    self.critic.radius(),
                    td.w_star.norm()
                ));
            }
            w_star.push(Some(td.w_star.clone()));
        }
        Ok(StepOracle { eval: Some(eval), w_star, lambda_a })
    }

    fn outer_step(&mut self, t: usize) -> Result<()> {
        let (mdp, features, config) = (self.mdp, self.features, self.config);
        let k = mdp.num_tasks();
        let table = self.policy.tabulate()?;
        let oracle = self.step_oracle(t)?;
        let mut elapsed = Duration::ZERO;

        // Critic: one independent TD(0) run per task.
        let clock = Instant::now();
        let radius = self.critic.radius();
        let tracing = config.critic_trace;
        let results: Vec<Result<(DVector<f64>, Vec<CriticTraceRow>)>> = (0..k)
            .into_par_iter()
            .map(|task| {
                let mut rng = stream(config.seed, t, PHASE_CRITIC, task);
                let schedule = TdStepSchedule::new(oracle.lambda_a[task])?;
                let mut rows = Vec::new();
                let w_star = oracle.w_star[task].as_ref();
                let out = run_td0_observed(
                    mdp,
                    task,
                    &table,
                    features.task(task),
                    config.n_critic,
                    schedule,
                    radius,
                    self.critic.task(task),
                    &mut rng,
                    |st| {
                        if tracing {
                            let err = w_star.map(|ws| (st.w - ws).norm());
                            rows.push(CriticTraceRow { t, task, j: st.j, delta: st.delta, err });
                        }
                    },
                )?;
                Ok((out.w, rows))
            })
            .collect();
        let mut weights = Vec::with_capacity(k);
        for r in results {
            let (w, rows) = r?;
            weights.push(w);
            self.trace.critic_rows.extend(rows);
        }
        self.critic = CriticWeights::new(weights, radius)?;
        elapsed += clock.elapsed();

        // Task weights.
        let clock = Instant::now();
        let mut rng = stream(config.seed, t, PHASE_WEIGHTS, 0);
        let sampler = VisitationSampler { mdp, policy: &self.policy, table: &table, features, critic: &self.critic };
        self.lambda = match &config.option {
            WeightOption::Ca => ca_update_with(&self.lambda, &sampler, config.n_ca, config.c, &mut rng)?,
            WeightOption::Fc => fc_update_with(&self.lambda, &sampler, config.n_fc, config.c_prime, &mut rng)?,
            WeightOption::Fixed(_) => self.lambda.clone(),
        };
        elapsed += clock.elapsed();

        let mut row = TraceRow {
            t,
            theta_hash: theta_digest(self.policy.theta()),
            lambda: self.lambda.as_slice().to_vec(),
            j: None,
            pareto_gap: None,
            ca_distance: None,
            critic_err_max: None,
            elapsed_ms: 0.0,
        };
        if let Some(eval) = &oracle.eval {
            let smoothed = (0..k)
                .map(|task| oracle::exact_smoothed_gradient(mdp, task, &self.policy, features, self.critic.task(task)))
                .collect::<Result<Vec<_>>>()?;
            let smoothed = GradientMatrix::from_columns(&smoothed)?;
            row.j = Some(eval.values());
            row.pareto_gap = Some(eval.pareto_gap);
            row.ca_distance = Some(ca_distance(&self.lambda, &smoothed, &eval.lambda_star, &eval.gradients())?);
            row.critic_err_max = oracle
                .w_star
                .iter()
                .zip(self.critic.all())
                .filter_map(|(ws, w)| ws.as_ref().map(|ws| (w - ws).norm()))
                .reduce(f64::max);
        }

        // Actor.
        let clock = Instant::now();
        let mut rng = stream(config.seed, t, PHASE_ACTOR, 0);
        let grads = actor_gradients_with(mdp, &self.policy, &table, features, &self.critic, config.n_actor, &mut rng);
        let next = actor_step(&self.policy, &self.lambda, &grads, self.beta);
        elapsed += clock.elapsed();
        row.elapsed_ms = if config.record_timing { elapsed.as_secs_f64() * 1e3 } else { 0.0 };
        self.trace.rows.push(row);
        self.trace.samples_consumed += config.samples_per_step(k);
        self.policy = next?;
        Ok(())
    }

    fn finish(mut self) -> Result<TrainingTrace> {
        if self.config.oracle_diagnostics {
            if let Ok(eval) = ExactEvaluation::compute(self.mdp, &self.policy, None) {
                self.trace.final_j = Some(eval.values());
                self.trace.final_gap = Some(eval.pareto_gap);
            }
        }
        self.trace.final_theta = self.policy.theta_vec();
        Ok(self.trace)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::{build_one_hot_features, build_random_mdp, conflict_chain};

    fn small_config(option: WeightOption) -> MtacConfig {
        MtacConfig {
            iterations: 5,
            n_critic: 200,
            n_actor: 50,
            n_ca: 50,
            n_fc: 50,
            option,
            record_timing: false,
            ..Default::default()
        }
    }

    #[test]
    fn zero_step_leaves_theta() {
        let p = PolicyParams::one_hot(2, 2).with_theta(DVector::from_vec(vec![0.1, 0.2, 0.3, 0.4])).unwrap();
        let g = GradientMatrix::from_task_slices(&[&[1.0, 2.0, 3.0, 4.0], &[-1.0, 0.0, 1.0, 0.0]]).unwrap();
        let out = actor_step(&p, &TaskWeights::uniform(2), &g, 0.0).unwrap();
        assert_eq!(out.theta(), p.theta());
        let out = actor_step(&p, &TaskWeights::vertex(2, 1), &g, 0.5).unwrap();
        assert_eq!(out.theta() - p.theta(), g.column(1) * 0.5);
    }

    #[test]
    fn actor_step_arithmetic() {
        let p = PolicyParams::one_hot(1, 2);
        let g = GradientMatrix::from_task_slices(&[&[1.0, 0.0], &[0.0, 2.0]]).unwrap();
        let out = actor_step(&p, &TaskWeights::new(vec![0.8, 0.2]).unwrap(), &g, 0.1).unwrap();
        assert!((out.theta()[0] - 0.08).abs() < 1e-15 && (out.theta()[1] - 0.04).abs() < 1e-15);
    }

    #[test]
    fn non_finite_actor_step_fails() {
        let p = PolicyParams::one_hot(1, 2);
        let g = GradientMatrix::from_task_slices(&[&[f64::MAX, 0.0]]).unwrap();
        assert!(actor_step(&p, &TaskWeights::uniform(1), &g, 10.0).is_err());
    }

    #[test]
    fn theory_constants_formulas() {
        let base = TheoryInputs {
            c_phi: 1.0,
            c_pi: 0.5,
            l_phi: 2.0,
            gamma: 0.9,
            m_erg: 2.0,
            rho: 0.5,
            b: 2.0,
            lambda_a: 0.1,
        };
        let c = compute_theory_constants(&base).unwrap();
        assert_eq!(c.c_prime_max, 0.0625);
        let c0 = compute_theory_constants(&TheoryInputs { b: 0.0, ..base }).unwrap();
        assert_eq!(c0.u_delta, 1.0);
        assert!(compute_theory_constants(&TheoryInputs { rho: 1.0, ..base }).is_err());
    }

    #[test]
    fn zero_iterations_give_empty_trace() {
        let mdp = conflict_chain();
        let f = build_one_hot_features(&mdp);
        let trace = mtac_run(&mdp, &f, &MtacConfig { iterations: 0, ..small_config(WeightOption::Ca) }).unwrap();
        assert!(trace.rows.is_empty());
        assert!(trace.final_theta.iter().all(|x| *x == 0.0));
    }

    #[test]
    fn single_task_weights_stay_at_one() {
        let mdp = conflict_chain().select_tasks(&[0]).unwrap();
        let f = build_one_hot_features(&mdp);
        let trace = mtac_run(&mdp, &f, &small_config(WeightOption::Ca)).unwrap();
        assert!(trace.rows.iter().all(|r| r.lambda == vec![1.0]));
    }

    #[test]
    fn runs_are_deterministic() {
        let mdp = build_random_mdp(4, 4, 2, 3, 0.8, 0.2).unwrap();
        let f = build_one_hot_features(&mdp);
        for option in [WeightOption::Ca, WeightOption::Fc, WeightOption::Fixed(vec![0.2, 0.3, 0.5])] {
            let a = mtac_run(&mdp, &f, &small_config(option.clone())).unwrap();
            let b = mtac_run(&mdp, &f, &small_config(option)).unwrap();
            assert_eq!(a.to_csv(false), b.to_csv(false));
            assert_eq!(a.final_theta, b.final_theta);
        }
    }

    #[test]
    fn fixed_weights_are_validated() {
        let mdp = conflict_chain();
        let f = build_one_hot_features(&mdp);
        assert!(mtac_run(&mdp, &f, &small_config(WeightOption::Fixed(vec![0.5, 0.6]))).is_err());
        assert!(mtac_run(&mdp, &f, &small_config(WeightOption::Fixed(vec![1.0]))).is_err());
    }

    #[test]
    fn slope_of_a_line() {
        let ys: Vec<f64> = (0..10).map(|i| 3.0 - 0.5 * i as f64).collect();
        assert!((least_squares_slope(&ys) + 0.5).abs() < 1e-12);
    }

    #[test]
    fn csv_has_versioned_header() {
        let mdp = conflict_chain();
        let f = build_one_hot_features(&mdp);
        let trace = mtac_run(&mdp, &f, &small_config(WeightOption::Fc)).unwrap();
        let csv = trace.to_csv(true);
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some(TRACE_CSV_VERSION));
        assert_eq!(
            lines.next(),
            Some("t,lambda_1,lambda_2,J_1,J_2,pareto_gap,ca_distance,critic_err_max,theta_hash,elapsed_ms")
        );
        assert_eq!(lines.count(), 5);
    }
}
