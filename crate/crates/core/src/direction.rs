//! Task weights on the simplex and the two weight-update subprocedures.
//!
//! Both updates take a projected step on `½‖λᵀ∇J‖²` using two independent
//! gradient estimates (double sampling), so the stochastic gradient
//! `λᵀ∇J_i·∇J_{i'}ᵀ` is unbiased for the true one. The multi-step (CA)
//! variant iterates with fresh samples and a `c/√(i+1)` schedule; the
//! single-step (FC) variant averages all samples and steps once.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::critic::CriticWeights;
use crate::error::{Error, Result};
use crate::mdp::{sample_visitation, FeatureMap, MultiTaskMdp};
use crate::policy::{ActionTable, PolicyParams};

const SIMPLEX_TOL: f64 = 1e-10;

/// A point of the probability simplex over tasks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct TaskWeights(Vec<f64>);

impl TryFrom<Vec<f64>> for TaskWeights {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        TaskWeights::new(v)
    }
}

impl From<TaskWeights> for Vec<f64> {
    fn from(w: TaskWeights) -> Self {
        w.0
    }
}

impl TaskWeights {
    pub fn new(lambda: Vec<f64>) -> Result<Self> {
        if lambda.is_empty() {
            return Err(Error::config("task weights need at least one entry"));
        }
        if lambda.iter().any(|x| !x.is_finite() || *x < 0.0) {
            return Err(Error::config(format!("task weights {lambda:?} have a negative or non-finite entry")));
        }
        let sum: f64 = lambda.iter().sum();
        if (sum - 1.0).abs() > SIMPLEX_TOL {
            return Err(Error::config(format!("task weights sum to {sum}, not 1")));
        }
        Ok(TaskWeights(lambda))
    }

    pub fn uniform(k: usize) -> Self {
        TaskWeights(vec![1.0 / k as f64; k])
    }

    pub fn vertex(k: usize, task: usize) -> Self {
        let mut v = vec![0.0; k];
        v[task] = 1.0;
        TaskWeights(v)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn distance(&self, other: &TaskWeights) -> f64 {
        self.0.iter().zip(&other.0).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt()
    }
}

/// Per-task policy gradients as the columns of an `m × K` matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct GradientMatrix(DMatrix<f64>);

impl GradientMatrix {
    pub fn zeros(dim: usize, num_tasks: usize) -> Self {
        GradientMatrix(DMatrix::zeros(dim, num_tasks))
    }

    pub fn from_columns(columns: &[DVector<f64>]) -> Result<Self> {
        let first = columns.first().ok_or_else(|| Error::config("gradient matrix needs at least one column"))?;
        if let Some(c) = columns.iter().find(|c| c.len() != first.len()) {
            return Err(Error::DimensionMismatch { expected: first.len(), found: c.len() });
        }
        let m = DMatrix::from_columns(columns);
        if m.iter().any(|x| !x.is_finite()) {
            return Err(Error::numeric("gradient matrix has non-finite entries"));
        }
        Ok(GradientMatrix(m))
    }

    /// Convenience for small hand-written instances: one slice per task.
    pub fn from_task_slices(columns: &[&[f64]]) -> Result<Self> {
        let cols: Vec<DVector<f64>> = columns.iter().map(|c| DVector::from_column_slice(c)).collect();
        GradientMatrix::from_columns(&cols)
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn num_tasks(&self) -> usize {
        self.0.ncols()
    }

    pub fn column(&self, k: usize) -> DVector<f64> {
        self.0.column(k).into_owned()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    /// `Σ_k λ_k ∇J^k`.
    pub fn combine(&self, weights: &TaskWeights) -> DVector<f64> {
        assert_eq!(weights.len(), self.num_tasks(), "weights and gradient columns differ in count");
        &self.0 * DVector::from_column_slice(weights.as_slice())
    }

    /// Gram matrix `∇Jᵀ∇J` (K × K).
    pub fn gram(&self) -> DMatrix<f64> {
        self.0.transpose() * &self.0
    }

    fn check_finite(&self) -> Result<()> {
        if self.0.iter().all(|x| x.is_finite()) {
            Ok(())
        } else {
            Err(Error::numeric("gradient matrix has non-finite entries"))
        }
    }
}

/// Euclidean projection onto the probability simplex (sort and threshold).
pub fn simplex_project(v: &[f64]) -> Result<TaskWeights> {
    if v.is_empty() {
        return Err(Error::config("cannot project an empty vector"));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::numeric(format!("cannot project non-finite vector {v:?}")));
    }
    let mut sorted = v.to_vec();
    sorted.sort_unstable_by(|a, b| b.total_cmp(a));
    let mut cumulative = 0.0;
    let mut tau = 0.0;
    for (i, &u) in sorted.iter().enumerate() {
        cumulative += u;
        let t = (cumulative - 1.0) / (i as f64 + 1.0);
        if u - t > 0.0 {
            tau = t;
        } else {
            break;
        }
    }
    let mut out: Vec<f64> = v.iter().map(|x| (x - tau).max(0.0)).collect();
    // Absorb the rounding residue into the largest coordinate.
    let residue = 1.0 - out.iter().sum::<f64>();
    if let Some(max) = out.iter_mut().max_by(|a, b| a.total_cmp(b)) {
        *max += residue;
    }
    TaskWeights::new(out)
}

/// A source of per-task gradient estimates.
pub trait GradientSource {
    fn num_tasks(&self) -> usize;

    fn dim(&self) -> usize;

    /// Adds `weight ×` one fresh single-sample estimate per task into `out`.
    fn accumulate<R: Rng>(&self, rng: &mut R, weight: f64, out: &mut GradientMatrix);

    fn draw<R: Rng>(&self, rng: &mut R) -> GradientMatrix {
        let mut g = GradientMatrix::zeros(self.dim(), self.num_tasks());
        self.accumulate(rng, 1.0, &mut g);
        g
    }

    /// Mean of `n` independent draws.
    fn draw_mean<R: Rng>(&self, n: usize, rng: &mut R) -> GradientMatrix {
        let mut g = GradientMatrix::zeros(self.dim(), self.num_tasks());
        let w = 1.0 / n as f64;
        for _ in 0..n {
            self.accumulate(rng, w, &mut g);
        }
        g
    }
}

/// Exact (noise-free) gradients; every draw returns the same matrix.
#[derive(Clone, Debug)]
pub struct FixedGradients(pub GradientMatrix);

impl GradientSource for FixedGradients {
    fn num_tasks(&self) -> usize {
        self.0.num_tasks()
    }

    fn dim(&self) -> usize {
        self.0.dim()
    }

    fn accumulate<R: Rng>(&self, _rng: &mut R, weight: f64, out: &mut GradientMatrix) {
        out.0 += &self.0 .0 * weight;
    }
}

/// Single-sample estimates `φ^k(s,a)ᵀw^k · ψ_θ(s,a)` with `(s,a) ~ d^k_θ`.
pub struct VisitationSampler<'a> {
    pub mdp: &'a MultiTaskMdp,
    pub policy: &'a PolicyParams,
    pub table: &'a ActionTable,
    pub features: &'a FeatureMap,
    pub critic: &'a CriticWeights,
}

impl VisitationSampler<'_> {
    fn accumulate_task<R: Rng>(&self, task: usize, rng: &mut R, weight: f64, out: &mut [f64]) {
        let sa = sample_visitation(self.mdp, task, self.table, rng);
        let coef = weight * self.features.task(task).dot(sa.state, sa.action, self.critic.task(task).as_slice());
        if coef == 0.0 {
            return;
        }
        let chi = self.policy.features();
        for (o, x) in out.iter_mut().zip(chi.get(sa.state, sa.action)) {
            *o += coef * x;
        }
        for (b, &p) in self.table.probs(sa.state).iter().enumerate() {
            let c = coef * p;
            for (o, x) in out.iter_mut().zip(chi.get(sa.state, b)) {
                *o -= c * x;
            }
        }
    }
}

impl GradientSource for VisitationSampler<'_> {
    fn num_tasks(&self) -> usize {
        self.mdp.num_tasks()
    }

    fn dim(&self) -> usize {
        self.policy.dim()
    }

    fn accumulate<R: Rng>(&self, rng: &mut R, weight: f64, out: &mut GradientMatrix) {
        for k in 0..self.mdp.num_tasks() {
            let mut col = out.0.column_mut(k);
            self.accumulate_task(k, rng, weight, col.as_mut_slice());
        }
    }
}

/// One-sample estimate of task `task`'s policy gradient under the critic.
pub fn sample_gradient<R: Rng>(
    mdp: &MultiTaskMdp,
    policy: &PolicyParams,
    features: &FeatureMap,
    critic: &CriticWeights,
    task: usize,
    rng: &mut R,
) -> Result<DVector<f64>> {
    let table = policy.tabulate()?;
    let sampler = VisitationSampler { mdp, policy, table: &table, features, critic };
    let mut out = DVector::zeros(policy.dim());
    sampler.accumulate_task(task, rng, 1.0, out.as_mut_slice());
    Ok(out)
}

/// `(λᵀG)·G'ᵀ`, the K-vector `[⟨Gλ, G'_k⟩]_k`.
fn double_sample_gradient(lambda: &TaskWeights, g: &GradientMatrix, g_prime: &GradientMatrix) -> Vec<f64> {
    let direction = g.combine(lambda);
    (0..g_prime.num_tasks()).map(|k| g_prime.0.column(k).dot(&direction)).collect()
}

fn projected_step(lambda: &TaskWeights, grad: &[f64], step: f64) -> Result<TaskWeights> {
    // Equal entries shift every coordinate alike, and projection undoes a
    // uniform shift: keep the warm start exactly rather than round-trip it.
    if grad.iter().all(|g| *g == grad[0]) {
        return Ok(lambda.clone());
    }
    let v: Vec<f64> = lambda.0.iter().zip(grad).map(|(l, g)| l - step * g).collect();
    simplex_project(&v)
}

fn check_source(lambda: &TaskWeights, k: usize) -> Result<()> {
    if lambda.len() != k {
        return Err(Error::DimensionMismatch { expected: k, found: lambda.len() });
    }
    Ok(())
}

/// Multi-step weight update: `N_CA` projected SGD steps from a warm start,
/// with `c_i = c/√(i+1)` and one fresh sample pair per step.
pub fn ca_update_with<S: GradientSource, R: Rng>(
    lambda: &TaskWeights,
    source: &S,
    n_ca: usize,
    c: f64,
    rng: &mut R,
) -> Result<TaskWeights> {
    ca_iterate(lambda, source, n_ca, c, rng, |_, _| {})
}

/// [`ca_update_with`] that reports `(i+1, λ_{i+1})` after every step.
pub fn ca_iterate<S: GradientSource, R: Rng>(
    lambda: &TaskWeights,
    source: &S,
    n_ca: usize,
    c: f64,
    rng: &mut R,
    mut observe: impl FnMut(usize, &TaskWeights),
) -> Result<TaskWeights> {
    if n_ca == 0 {
        return Err(Error::config("n_ca must be at least 1"));
    }
    if !(c > 0.0) {
        return Err(Error::config(format!("CA step constant must be positive, got {c}")));
    }
    check_source(lambda, source.num_tasks())?;
    // Separate streams for the two halves of each sample pair.
    let mut first = ChaCha8Rng::from_rng(rng);
    let mut second = ChaCha8Rng::from_rng(rng);
    let mut g = GradientMatrix::zeros(source.dim(), source.num_tasks());
    let mut g_prime = g.clone();
    let mut current = lambda.clone();
    for i in 0..n_ca {
        g.0.fill(0.0);
        g_prime.0.fill(0.0);
        source.accumulate(&mut first, 1.0, &mut g);
        source.accumulate(&mut second, 1.0, &mut g_prime);
        let grad = double_sample_gradient(&current, &g, &g_prime);
        current = projected_step(&current, &grad, c / ((i + 1) as f64).sqrt())?;
        observe(i + 1, &current);
    }
    Ok(current)
}

/// Single-step weight update from two independent `N_FC`-sample averages.
pub fn fc_update_with<S: GradientSource, R: Rng>(
    lambda: &TaskWeights,
    source: &S,
    n_fc: usize,
    c_prime: f64,
    rng: &mut R,
) -> Result<TaskWeights> {
    if n_fc == 0 {
        return Err(Error::config("n_fc must be at least 1"));
    }
    if !(c_prime > 0.0) {
        return Err(Error::config(format!("FC step constant must be positive, got {c_prime}")));
    }
    check_source(lambda, source.num_tasks())?;
    let mut first = ChaCha8Rng::from_rng(rng);
    let mut second = ChaCha8Rng::from_rng(rng);
    let g = source.draw_mean(n_fc, &mut first);
    let g_prime = source.draw_mean(n_fc, &mut second);
    g.check_finite()?;
    g_prime.check_finite()?;
    projected_step(lambda, &double_sample_gradient(lambda, &g, &g_prime), c_prime)
}

/// `1 / (8·C_φ²·B)`, the largest FC step the convergence analysis allows.
pub fn fc_step_limit(c_phi: f64, radius: f64) -> f64 {
    1.0 / (8.0 * c_phi * c_phi * radius)
}

/// Multi-step update driven by visitation samples under the current critic.
#[allow(clippy::too_many_arguments)]
pub fn ca_update<R: Rng>(
    lambda: &TaskWeights,
    mdp: &MultiTaskMdp,
    policy: &PolicyParams,
    features: &FeatureMap,
    critic: &CriticWeights,
    n_ca: usize,
    c: f64,
    rng: &mut R,
) -> Result<TaskWeights> {
    let table = policy.tabulate()?;
    let sampler = VisitationSampler { mdp, policy, table: &table, features, critic };
    ca_update_with(lambda, &sampler, n_ca, c, rng)
}

/// Single-step update driven by visitation samples; warns when `c'`
/// exceeds [`fc_step_limit`].
#[allow(clippy::too_many_arguments)]
pub fn fc_update<R: Rng>(
    lambda: &TaskWeights,
    mdp: &MultiTaskMdp,
    policy: &PolicyParams,
    features: &FeatureMap,
    critic: &CriticWeights,
    n_fc: usize,
    c_prime: f64,
    rng: &mut R,
) -> Result<TaskWeights> {
    let c_phi = policy.score_bound().max(features.c_phi_bound());
    let limit = fc_step_limit(c_phi, critic.radius());
    if c_prime > limit {
        log::warn!("FC step {c_prime} exceeds the analysed limit {limit}");
    }
    let table = policy.tabulate()?;
    let sampler = VisitationSampler { mdp, policy, table: &table, features, critic };
    fc_update_with(lambda, &sampler, n_fc, c_prime, rng)
}

/// `‖λ̂ᵀ∇̂J_w − (λ*)ᵀ∇J‖₂`: distance of the algorithm's combined direction
/// from the exact conflict-avoidant direction.
pub fn ca_distance(
    lambda_hat: &TaskWeights,
    smoothed_grads: &GradientMatrix,
    lambda_star: &TaskWeights,
    exact_grads: &GradientMatrix,
) -> Result<f64> {
    let k = smoothed_grads.num_tasks();
    for (found, expected) in [
        (lambda_hat.len(), k),
        (lambda_star.len(), k),
        (exact_grads.num_tasks(), k),
        (exact_grads.dim(), smoothed_grads.dim()),
    ] {
        if found != expected {
            return Err(Error::DimensionMismatch { expected, found });
        }
    }
    Ok((smoothed_grads.combine(lambda_hat) - exact_grads.combine(lambda_star)).norm())
}
