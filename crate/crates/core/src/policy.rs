//! Softmax policy over linear features: `π_θ(a|s) ∝ exp(θᵀχ(s,a))`.

use std::sync::Arc;

use nalgebra::DVector;
use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::mdp::FeatureTable;

#[derive(Clone, Debug)]
pub struct PolicyParams {
    theta: DVector<f64>,
    features: Arc<FeatureTable>,
}

/// `π_θ(·|s)` for every state, frozen for one value of θ.
#[derive(Clone, Debug, PartialEq)]
pub struct ActionTable {
    num_actions: usize,
    probs: Vec<f64>,
}

impl ActionTable {
    pub fn probs(&self, state: usize) -> &[f64] {
        let start = state * self.num_actions;
        &self.probs[start..start + self.num_actions]
    }

    pub fn prob(&self, state: usize, action: usize) -> f64 {
        self.probs[state * self.num_actions + action]
    }

    pub fn num_states(&self) -> usize {
        self.probs.len() / self.num_actions
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    /// Builds a table from explicit per-state distributions.
    pub fn from_probs(num_actions: usize, probs: Vec<f64>) -> Result<Self> {
        if num_actions == 0 || !probs.len().is_multiple_of(num_actions) {
            return Err(Error::config("action table length is not a multiple of |A|"));
        }
        Ok(ActionTable { num_actions, probs })
    }
}

/// Empirical Lipschitz constants of the policy map (`C_π` and `L_φ`).
#[derive(Clone, Copy, Debug, Serialize)]
pub struct LipschitzEstimate {
    pub c_pi: f64,
    pub l_phi: f64,
}

fn softmax_in_place(logits: &mut [f64]) {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for x in logits.iter_mut() {
        *x = (*x - max).exp();
        total += *x;
    }
    logits.iter_mut().for_each(|x| *x /= total);
}

impl PolicyParams {
    pub fn new(features: Arc<FeatureTable>, theta: DVector<f64>) -> Result<Self> {
        if theta.len() != features.dim() {
            return Err(Error::DimensionMismatch { expected: features.dim(), found: theta.len() });
        }
        Ok(PolicyParams { theta, features })
    }

    /// One-hot policy features with `θ = 0`, i.e. the uniform policy.
    pub fn one_hot(num_states: usize, num_actions: usize) -> Self {
        let features = Arc::new(FeatureTable::one_hot(num_states, num_actions));
        let theta = DVector::zeros(features.dim());
        PolicyParams { theta, features }
    }

    pub fn theta(&self) -> &DVector<f64> {
        &self.theta
    }

    pub fn features(&self) -> &Arc<FeatureTable> {
        &self.features
    }

    pub fn dim(&self) -> usize {
        self.theta.len()
    }

    pub fn num_states(&self) -> usize {
        self.features.num_states()
    }

    pub fn num_actions(&self) -> usize {
        self.features.num_actions()
    }

    pub fn with_theta(&self, theta: DVector<f64>) -> Result<Self> {
        PolicyParams::new(self.features.clone(), theta)
    }

    /// Upper bound `2·C_χ` on `‖ψ_θ(s,a)‖₂`.
    pub fn score_bound(&self) -> f64 {
        2.0 * self.features.max_norm()
    }

    fn check_finite(&self) -> Result<()> {
        if self.theta.iter().all(|x| x.is_finite()) {
            Ok(())
        } else {
            Err(Error::numeric("policy parameters contain non-finite entries"))
        }
    }

    fn logits(&self, state: usize, out: &mut [f64]) {
        let theta = self.theta.as_slice();
        for (a, slot) in out.iter_mut().enumerate() {
            *slot = self.features.dot(state, a, theta);
        }
    }

    /// `π_θ(·|s)`, max-shifted before exponentiation.
    pub fn action_probs(&self, state: usize) -> Result<Vec<f64>> {
        self.check_finite()?;
        assert!(state < self.num_states(), "state {state} out of range");
        let mut p = vec![0.0; self.num_actions()];
        self.logits(state, &mut p);
        softmax_in_place(&mut p);
        Ok(p)
    }

    pub fn log_prob(&self, state: usize, action: usize) -> Result<f64> {
        self.check_finite()?;
        let mut z = vec![0.0; self.num_actions()];
        self.logits(state, &mut z);
        let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + z.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
        Ok(z[action] - lse)
    }

    pub fn tabulate(&self) -> Result<ActionTable> {
        self.check_finite()?;
        let na = self.num_actions();
        let mut probs = vec![0.0; self.num_states() * na];
        for (s, row) in probs.chunks_mut(na).enumerate() {
            self.logits(s, row);
            softmax_in_place(row);
        }
        Ok(ActionTable { num_actions: na, probs })
    }

    /// `ψ_θ(s,a) = χ(s,a) − Σ_b π_θ(b|s) χ(s,b)`.
    pub fn score(&self, state: usize, action: usize) -> Result<DVector<f64>> {
        let table = self.tabulate()?;
        let mut out = DVector::zeros(self.dim());
        self.score_into(&table, state, action, out.as_mut_slice());
        Ok(out)
    }

    /// Score using precomputed probabilities; `out` is overwritten.
    pub fn score_into(&self, table: &ActionTable, state: usize, action: usize, out: &mut [f64]) {
        out.copy_from_slice(self.features.get(state, action));
        for (b, &p) in table.probs(state).iter().enumerate() {
            for (o, x) in out.iter_mut().zip(self.features.get(state, b)) {
                *o -= p * x;
            }
        }
    }

    /// Largest `‖ψ_θ(s,a)‖₂` over all pairs at the current θ.
    pub fn max_score_norm(&self) -> Result<f64> {
        let table = self.tabulate()?;
        let mut buf = vec![0.0; self.dim()];
        let mut max = 0.0f64;
        for s in 0..self.num_states() {
            for a in 0..self.num_actions() {
                self.score_into(&table, s, a, &mut buf);
                max = max.max(buf.iter().map(|x| x * x).sum::<f64>().sqrt());
            }
        }
        Ok(max)
    }

    /// Estimates `C_π` and `L_φ` from random θ pairs drawn in a box of
    /// half-width `scale`, with perturbations spanning several magnitudes.
    pub fn estimate_lipschitz<R: Rng + ?Sized>(&self, rng: &mut R, pairs: usize, scale: f64) -> Result<LipschitzEstimate> {
        let mut est = LipschitzEstimate { c_pi: 0.0, l_phi: 0.0 };
        let m = self.dim();
        for i in 0..pairs {
            let base = DVector::from_fn(m, |_, _| scale * (2.0 * rng.random::<f64>() - 1.0));
            let step = 10f64.powi(-((i % 4) as i32));
            let delta = DVector::from_fn(m, |_, _| step * (2.0 * rng.random::<f64>() - 1.0));
            let dist = delta.norm();
            if dist == 0.0 {
                continue;
            }
            let p = self.with_theta(base.clone())?.tabulate()?;
            let q = self.with_theta(base + delta)?.tabulate()?;
            for (x, y) in p.probs.iter().zip(&q.probs) {
                est.c_pi = est.c_pi.max((x - y).abs() / dist);
                est.l_phi = est.l_phi.max((x.ln() - y.ln()).abs() / dist);
            }
        }
        Ok(est)
    }

    /// Serializable snapshot of θ.
    pub fn theta_vec(&self) -> Vec<f64> {
        self.theta.iter().copied().collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_policy(seed: u64, ns: usize, na: usize, scale: f64) -> PolicyParams {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = PolicyParams::one_hot(ns, na);
        let theta = DVector::from_fn(p.dim(), |_, _| scale * (2.0 * rng.random::<f64>() - 1.0));
        p.with_theta(theta).unwrap()
    }

    #[test]
    fn zero_theta_is_uniform() {
        let p = PolicyParams::one_hot(3, 4);
        for s in 0..3 {
            assert!(p.action_probs(s).unwrap().iter().all(|&x| (x - 0.25).abs() < 1e-15));
        }
    }

    #[test]
    fn shift_invariance() {
        let p = random_policy(1, 2, 3, 2.0);
        let mut theta = p.theta().clone();
        for a in 0..3 {
            theta[3 + a] += 5.0;
        }
        let q = p.with_theta(theta).unwrap();
        let (x, y) = (p.action_probs(1).unwrap(), q.action_probs(1).unwrap());
        for (a, b) in x.iter().zip(&y) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn log_three_gap_gives_three_to_one() {
        let p = PolicyParams::one_hot(1, 2).with_theta(DVector::from_vec(vec![3f64.ln(), 0.0])).unwrap();
        let probs = p.action_probs(0).unwrap();
        assert!((probs[0] - 0.75).abs() < 1e-15 && (probs[1] - 0.25).abs() < 1e-15);
    }

    #[test]
    fn non_finite_theta_is_rejected() {
        let p = PolicyParams::one_hot(1, 2).with_theta(DVector::from_vec(vec![f64::NAN, 0.0])).unwrap();
        assert!(matches!(p.action_probs(0), Err(Error::Numeric(_))));
    }

    #[test]
    fn extreme_logits_stay_finite() {
        let p = PolicyParams::one_hot(1, 2).with_theta(DVector::from_vec(vec![800.0, -800.0])).unwrap();
        let probs = p.action_probs(0).unwrap();
        assert_eq!(probs, vec![1.0, 0.0]);
    }

    #[test]
    fn uniform_score_is_centered_basis_vector() {
        let p = PolicyParams::one_hot(2, 2);
        let psi = p.score(1, 0).unwrap();
        assert_eq!(psi.as_slice(), &[0.0, 0.0, 0.5, -0.5]);
    }

    #[test]
    fn score_identity() {
        for seed in 0..20 {
            let p = random_policy(seed, 3, 4, 3.0);
            for s in 0..3 {
                let probs = p.action_probs(s).unwrap();
                let mut acc = DVector::zeros(p.dim());
                for a in 0..4 {
                    acc += p.score(s, a).unwrap() * probs[a];
                }
                assert!(acc.norm() < 1e-10);
            }
        }
    }

    #[test]
    fn score_matches_finite_differences() {
        let h = 1e-5;
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for i in 0..50 {
            let p = random_policy(i, 3, 3, 2.0);
            let s = rng.random_range(0..3);
            let a = rng.random_range(0..3);
            let psi = p.score(s, a).unwrap();
            let fd = DVector::from_fn(p.dim(), |j, _| {
                let mut plus = p.theta().clone();
                let mut minus = p.theta().clone();
                plus[j] += h;
                minus[j] -= h;
                let lp = p.with_theta(plus).unwrap().log_prob(s, a).unwrap();
                let lm = p.with_theta(minus).unwrap().log_prob(s, a).unwrap();
                (lp - lm) / (2.0 * h)
            });
            assert!((&fd - &psi).norm() <= 1e-5 * psi.norm().max(1e-12), "case {i}");
        }
    }

    #[test]
    fn score_is_bounded() {
        for seed in 0..20 {
            let p = random_policy(seed, 4, 3, 10.0);
            assert!(p.max_score_norm().unwrap() <= p.score_bound());
        }
    }

    #[test]
    fn lipschitz_estimates_are_finite_and_positive() {
        let p = PolicyParams::one_hot(3, 2);
        let est = p.estimate_lipschitz(&mut ChaCha8Rng::seed_from_u64(0), 200, 2.0).unwrap();
        assert!(est.c_pi > 0.0 && est.c_pi <= 1.0);
        assert!(est.l_phi > 0.0 && est.l_phi.is_finite());
    }
}
