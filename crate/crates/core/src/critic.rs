//! Projected TD(0) policy evaluation with linear features.

use nalgebra::DVector;
use rand::Rng;

use crate::error::{Error, Result};
use crate::mdp::{sample_categorical, sample_visitation, step, FeatureTable, MultiTaskMdp};
use crate::policy::ActionTable;

/// `δ = r + γ⟨φ(s',a'), w⟩ − ⟨φ(s,a), w⟩`.
pub fn td_error(w: &[f64], phi_sa: &[f64], phi_next: &[f64], reward: f64, gamma: f64) -> f64 {
    assert_eq!(w.len(), phi_sa.len(), "td_error: w and φ(s,a) differ in dimension");
    assert_eq!(w.len(), phi_next.len(), "td_error: w and φ(s',a') differ in dimension");
    let dot = |phi: &[f64]| phi.iter().zip(w).map(|(x, y)| x * y).sum::<f64>();
    reward + gamma * dot(phi_next) - dot(phi_sa)
}

/// Euclidean projection onto the closed ball of the given radius.
pub fn ball_project(v: &DVector<f64>, radius: f64) -> DVector<f64> {
    let mut out = v.clone();
    ball_project_in_place(&mut out, radius);
    out
}

pub fn ball_project_in_place(v: &mut DVector<f64>, radius: f64) {
    assert!(radius > 0.0, "projection radius must be positive");
    let norm = v.norm();
    if norm > radius {
        *v *= radius / norm;
    }
}

/// Step sizes `α_j = 1 / (2·λ_A·(j+1))`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TdStepSchedule {
    lambda_a: f64,
}

impl TdStepSchedule {
    pub fn new(lambda_a: f64) -> Result<Self> {
        if !(lambda_a > 0.0 && lambda_a.is_finite()) {
            return Err(Error::config(format!("lambda_A must be positive and finite, got {lambda_a}")));
        }
        Ok(TdStepSchedule { lambda_a })
    }

    pub fn lambda_a(&self) -> f64 {
        self.lambda_a
    }

    pub fn alpha(&self, j: usize) -> f64 {
        1.0 / (2.0 * self.lambda_a * (j as f64 + 1.0))
    }
}

/// Per-task critic vectors `w^k`, each inside the ball of radius `B`.
#[derive(Clone, Debug, PartialEq)]
pub struct CriticWeights {
    weights: Vec<DVector<f64>>,
    radius: f64,
}

impl CriticWeights {
    pub fn new(weights: Vec<DVector<f64>>, radius: f64) -> Result<Self> {
        if !(radius > 0.0) {
            return Err(Error::config(format!("critic radius must be positive, got {radius}")));
        }
        if let Some(dim) = weights.first().map(|w| w.len()) {
            if let Some(w) = weights.iter().find(|w| w.len() != dim) {
                return Err(Error::DimensionMismatch { expected: dim, found: w.len() });
            }
        }
        if let Some((k, w)) = weights.iter().enumerate().find(|(_, w)| w.norm() > radius * (1.0 + 1e-12)) {
            return Err(Error::config(format!("critic {k} has norm {} outside the radius {radius}", w.norm())));
        }
        Ok(CriticWeights { weights, radius })
    }

    pub fn zeros(num_tasks: usize, dim: usize, radius: f64) -> Result<Self> {
        CriticWeights::new(vec![DVector::zeros(dim); num_tasks], radius)
    }

    pub fn task(&self, k: usize) -> &DVector<f64> {
        &self.weights[k]
    }

    pub fn all(&self) -> &[DVector<f64>] {
        &self.weights
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn num_tasks(&self) -> usize {
        self.weights.len()
    }
}

/// One inner TD iteration, as seen by an observer.
#[derive(Debug)]
pub struct TdStep<'a> {
    pub j: usize,
    pub delta: f64,
    pub alpha: f64,
    /// Iterate after the projected update.
    pub w: &'a DVector<f64>,
}

#[derive(Clone, Debug)]
pub struct TdOutcome {
    pub w: DVector<f64>,
    pub max_abs_delta: f64,
    pub max_norm: f64,
}

/// Runs `n_critic` projected TD(0) updates on one task.
///
/// The first pair comes from the visitation distribution; later pairs follow
/// the on-policy Markov rollout.
#[allow(clippy::too_many_arguments)]
pub fn run_td0<R: Rng + ?Sized>(
    mdp: &MultiTaskMdp,
    task: usize,
    policy: &ActionTable,
    features: &FeatureTable,
    n_critic: usize,
    schedule: TdStepSchedule,
    radius: f64,
    w_init: &DVector<f64>,
    rng: &mut R,
) -> Result<TdOutcome> {
    run_td0_observed(mdp, task, policy, features, n_critic, schedule, radius, w_init, rng, |_| {})
}

#[allow(clippy::too_many_arguments)]
pub fn run_td0_observed<R: Rng + ?Sized>(
    mdp: &MultiTaskMdp,
    task: usize,
    policy: &ActionTable,
    features: &FeatureTable,
    n_critic: usize,
    schedule: TdStepSchedule,
    radius: f64,
    w_init: &DVector<f64>,
    rng: &mut R,
    mut observe: impl FnMut(&TdStep<'_>),
) -> Result<TdOutcome> {
    if n_critic == 0 {
        return Err(Error::config("n_critic must be at least 1"));
    }
    if !(radius > 0.0) {
        return Err(Error::config(format!("critic radius must be positive, got {radius}")));
    }
    if w_init.len() != features.dim() {
        return Err(Error::DimensionMismatch { expected: features.dim(), found: w_init.len() });
    }
    if w_init.norm() > radius * (1.0 + 1e-12) {
        return Err(Error::config("initial critic lies outside the projection ball"));
    }
    let gamma = mdp.gamma();
    let mut w = w_init.clone();
    let mut max_abs_delta = 0.0f64;
    let mut max_norm = w.norm();
    let start = sample_visitation(mdp, task, policy, rng);
    let (mut s, mut a) = (start.state, start.action);
    for j in 0..n_critic {
        let (s_next, reward) = step(mdp, task, s, a, rng);
        let a_next = sample_categorical(policy.probs(s_next), rng);
        let phi = features.get(s, a);
        let delta = td_error(w.as_slice(), phi, features.get(s_next, a_next), reward, gamma);
        let alpha = schedule.alpha(j);
        for (wi, x) in w.iter_mut().zip(phi) {
            *wi += alpha * delta * x;
        }
        ball_project_in_place(&mut w, radius);
        max_abs_delta = max_abs_delta.max(delta.abs());
        max_norm = max_norm.max(w.norm());
        observe(&TdStep { j, delta, alpha, w: &w });
        s = s_next;
        a = a_next;
    }
    if w.iter().any(|x| !x.is_finite()) {
        return Err(Error::numeric(format!("critic of task {task} diverged")));
    }
    Ok(TdOutcome { w, max_abs_delta, max_norm })
}

/// `U_δ = 1 + (1+γ)·C_φ·B`, the almost-sure bound on `|δ|`.
pub fn td_error_bound(gamma: f64, c_phi: f64, radius: f64) -> f64 {
    1.0 + (1.0 + gamma) * c_phi * radius
}
