//! Exact dynamic-programming quantities for small MDPs.
//!
//! Everything here is a dense linear-algebra computation over the
//! `|S|·|A|` state-action pairs, indexed as `s·|A| + a`. Gradients follow the
//! normalized-visitation convention `∇J^k = E_{d^k}[Q^k ψ]`, which is
//! `(1−γ)` times the derivative of `J^k = E_{ξ_0, π}[Q^k]`; the sample-based
//! estimators use the same convention.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::Serialize;

use crate::direction::{GradientMatrix, TaskWeights};
use crate::error::{Error, Result};
use crate::mdp::{FeatureMap, FeatureTable, MultiTaskMdp};
use crate::policy::{ActionTable, PolicyParams};

/// Largest number of state-action pairs the dense solvers accept.
pub const MAX_PAIRS: usize = 4096;

const RESIDUAL_TOL: f64 = 1e-10;

fn check_size(mdp: &MultiTaskMdp) -> Result<()> {
    if mdp.num_pairs() > MAX_PAIRS {
        return Err(Error::TooLarge { pairs: mdp.num_pairs(), limit: MAX_PAIRS });
    }
    Ok(())
}

/// Pair-to-pair kernel `P_π[(s,a),(s',a')] = P(s'|s,a)·π(a'|s')`.
pub fn pair_kernel(mdp: &MultiTaskMdp, task: usize, table: &ActionTable) -> DMatrix<f64> {
    let (ns, na) = (mdp.num_states(), mdp.num_actions());
    let n = ns * na;
    let mut p = DMatrix::zeros(n, n);
    for s in 0..ns {
        for a in 0..na {
            let row = mdp.transition_row(task, s, a);
            for (s2, &q) in row.iter().enumerate() {
                if q == 0.0 {
                    continue;
                }
                for a2 in 0..na {
                    p[(s * na + a, s2 * na + a2)] = q * table.prob(s2, a2);
                }
            }
        }
    }
    p
}

/// Exact `Q^k_π` by solving `(I − γP_π)Q = r`.
pub fn exact_q(mdp: &MultiTaskMdp, task: usize, table: &ActionTable) -> Result<DVector<f64>> {
    check_size(mdp)?;
    let n = mdp.num_pairs();
    let p = pair_kernel(mdp, task, table);
    let r = DVector::from_column_slice(mdp.rewards(task));
    let system = DMatrix::identity(n, n) - &p * mdp.gamma();
    let q = system.lu().solve(&r).ok_or_else(|| Error::numeric("Bellman system is singular"))?;
    let residual = (&q - &r - &p * &q * mdp.gamma()).amax();
    if residual > RESIDUAL_TOL * q.amax().max(1.0) {
        return Err(Error::numeric(format!("Bellman residual {residual} above tolerance")));
    }
    Ok(q)
}

/// `V(s) = Σ_a π(a|s) Q(s,a)`.
pub fn state_values(q: &DVector<f64>, table: &ActionTable) -> DVector<f64> {
    let na = table.num_actions();
    DVector::from_fn(table.num_states(), |s, _| (0..na).map(|a| table.prob(s, a) * q[s * na + a]).sum())
}

/// `J^k = Σ_s ξ_0^k(s) V^k(s)`.
pub fn exact_j(mdp: &MultiTaskMdp, task: usize, table: &ActionTable) -> Result<f64> {
    let v = state_values(&exact_q(mdp, task, table)?, table);
    Ok(mdp.initial_dist(task).iter().zip(v.iter()).map(|(x, v)| x * v).sum())
}

/// Stationary law of the reset kernel `γP_π + (1−γ)·1ξ_0π` over pairs.
pub fn exact_visitation(mdp: &MultiTaskMdp, task: usize, table: &ActionTable) -> Result<DVector<f64>> {
    check_size(mdp)?;
    let (ns, na) = (mdp.num_states(), mdp.num_actions());
    let n = ns * na;
    let gamma = mdp.gamma();
    let xi = mdp.initial_dist(task);
    let restart = DVector::from_fn(n, |i, _| xi[i / na] * table.prob(i / na, i % na));
    let kernel = pair_kernel(mdp, task, table) * gamma + DMatrix::from_fn(n, n, |_, j| (1.0 - gamma) * restart[j]);
    // dᵀ(K − I) = 0 with one balance equation swapped for Σd = 1.
    let mut system = kernel.transpose() - DMatrix::identity(n, n);
    system.row_mut(n - 1).fill(1.0);
    let mut rhs = DVector::zeros(n);
    rhs[n - 1] = 1.0;
    let mut d = system
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::numeric(format!("visitation system of task {task} is singular: chain is not ergodic")))?;
    if d.iter().any(|x| *x < -1e-12) {
        return Err(Error::numeric(format!("visitation of task {task} has negative mass: chain is not ergodic")));
    }
    d.iter_mut().for_each(|x| *x = x.max(0.0));
    let total = d.sum();
    d /= total;
    let residual = (kernel.transpose() * &d - &d).amax();
    if residual > RESIDUAL_TOL {
        return Err(Error::numeric(format!("stationarity residual {residual} above tolerance")));
    }
    Ok(d)
}

/// Scores `ψ_θ(s,a)` for all pairs as the columns of an `m × |S||A|` matrix.
pub fn score_matrix(policy: &PolicyParams, table: &ActionTable) -> DMatrix<f64> {
    let (ns, na) = (policy.num_states(), policy.num_actions());
    let mut out = DMatrix::zeros(policy.dim(), ns * na);
    for s in 0..ns {
        for a in 0..na {
            let mut col = out.column_mut(s * na + a);
            policy.score_into(table, s, a, col.as_mut_slice());
        }
    }
    out
}

/// `E_{d^k}[Q^k(s,a) ψ_θ(s,a)]`.
pub fn exact_policy_gradient(mdp: &MultiTaskMdp, task: usize, policy: &PolicyParams) -> Result<DVector<f64>> {
    let table = policy.tabulate()?;
    let q = exact_q(mdp, task, &table)?;
    let d = exact_visitation(mdp, task, &table)?;
    Ok(score_matrix(policy, &table) * d.component_mul(&q))
}

/// `E_{d^k}[φ^k(s,a)ᵀw · ψ_θ(s,a)]`, the gradient seen through the critic.
pub fn exact_smoothed_gradient(
    mdp: &MultiTaskMdp,
    task: usize,
    policy: &PolicyParams,
    features: &FeatureMap,
    w: &DVector<f64>,
) -> Result<DVector<f64>> {
    let table = policy.tabulate()?;
    let d = exact_visitation(mdp, task, &table)?;
    let phi = features.task(task);
    let na = mdp.num_actions();
    let weights = DVector::from_fn(mdp.num_pairs(), |i, _| d[i] * phi.dot(i / na, i % na, w.as_slice()));
    Ok(score_matrix(policy, &table) * weights)
}

/// TD limiting point and the quantities that define it.
#[derive(Clone, Debug, Serialize)]
pub struct TdFixedPoint {
    pub w_star: DVector<f64>,
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    /// Minus the largest eigenvalue of the symmetric part of `A`.
    pub lambda_a: f64,
    /// Whether the symmetric part of `A` is negative definite.
    pub negative_definite: bool,
}

fn feature_matrix(table: &FeatureTable) -> DMatrix<f64> {
    let (ns, na) = (table.num_states(), table.num_actions());
    DMatrix::from_fn(ns * na, table.dim(), |i, j| table.get(i / na, i % na)[j])
}

/// Solves `A w* + b = 0` with `A = E_d[φ(γφ' − φ)ᵀ]`, `b = E_d[φ r]`.
pub fn exact_td_fixed_point(
    mdp: &MultiTaskMdp,
    task: usize,
    policy: &PolicyParams,
    features: &FeatureMap,
) -> Result<TdFixedPoint> {
    let table = policy.tabulate()?;
    let d = exact_visitation(mdp, task, &table)?;
    td_fixed_point_with(mdp, task, &table, &d, features.task(task))
}

fn td_fixed_point_with(
    mdp: &MultiTaskMdp,
    task: usize,
    table: &ActionTable,
    d: &DVector<f64>,
    features: &FeatureTable,
) -> Result<TdFixedPoint> {
    let phi = feature_matrix(features);
    let m = features.dim();
    let rank = phi.clone().svd(false, false).rank(1e-10 * phi.amax().max(1.0) * (m as f64));
    if rank < m {
        return Err(Error::RankDeficient { task, rank, dim: m });
    }
    let p = pair_kernel(mdp, task, table);
    let dphi = DMatrix::from_fn(phi.nrows(), m, |i, j| d[i] * phi[(i, j)]);
    let a = dphi.transpose() * (&p * &phi * mdp.gamma() - &phi);
    let b = dphi.transpose() * DVector::from_column_slice(mdp.rewards(task));
    let w_star = a
        .clone()
        .lu()
        .solve(&(-&b))
        .ok_or(Error::RankDeficient { task, rank: m.saturating_sub(1), dim: m })?;
    let residual = (&a * &w_star + &b).norm();
    if residual > RESIDUAL_TOL * w_star.norm().max(1.0) {
        return Err(Error::numeric(format!("TD fixed-point residual {residual} above tolerance")));
    }
    let sym = (&a + a.transpose()) * 0.5;
    let top = SymmetricEigen::new(sym).eigenvalues.max();
    Ok(TdFixedPoint { w_star, a, b, lambda_a: -top, negative_definite: top < 0.0 })
}

/// Min-norm point of the convex hull of the gradient columns.
#[derive(Clone, Debug, Serialize)]
pub struct MinNormSolution {
    pub weights: TaskWeights,
    /// `‖(λ*)ᵀ∇J‖²`.
    pub gap: f64,
    /// Frank-Wolfe duality gap at the returned weights.
    pub certificate: f64,
}

fn quad(gram: &DMatrix<f64>, x: &DVector<f64>) -> f64 {
    x.dot(&(gram * x))
}

fn fw_certificate(gram: &DMatrix<f64>, x: &DVector<f64>) -> f64 {
    let g = gram * x;
    x.dot(&g) - g.min()
}

/// Minimizes `½‖λᵀ∇J‖²` over the simplex.
///
/// Accelerated projected gradient (with restarts) on the `K × K` Gram
/// matrix, followed by an exact KKT solve on the detected support.
pub fn exact_lambda_star(grads: &GradientMatrix) -> MinNormSolution {
    let k = grads.num_tasks();
    let gram = grads.gram();
    if k == 1 {
        return MinNormSolution { weights: TaskWeights::uniform(1), gap: gram[(0, 0)], certificate: 0.0 };
    }
    let scale = gram.diagonal().max().max(f64::MIN_POSITIVE);
    let lipschitz = SymmetricEigen::new(gram.clone()).eigenvalues.max().max(f64::MIN_POSITIVE);
    let project = |v: &DVector<f64>| -> DVector<f64> {
        let p = crate::direction::simplex_project(v.as_slice()).expect("finite iterate");
        DVector::from_column_slice(p.as_slice())
    };
    let mut x = DVector::from_element(k, 1.0 / k as f64);
    let mut y = x.clone();
    let mut t = 1.0f64;
    let mut fx = quad(&gram, &x);
    let tol = 1e-13 * scale;
    for iter in 0..200_000 {
        // Once the support has settled the KKT solve on it is exact, so try
        // it periodically instead of waiting for first-order convergence.
        if iter % 16 == 15 {
            if let Some(polished) = polish_on_support(&gram, &x) {
                if fw_certificate(&gram, &polished) <= tol && quad(&gram, &polished) <= fx + tol {
                    x = polished;
                    break;
                }
            }
        }
        let next = project(&(&y - &gram * &y / lipschitz));
        let fnext = quad(&gram, &next);
        if fnext > fx {
            // Restart momentum when the objective goes up.
            y = x.clone();
            t = 1.0;
            continue;
        }
        let t_next = (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0;
        y = &next + (&next - &x) * ((t - 1.0) / t_next);
        t = t_next;
        x = next;
        fx = fnext;
        if fw_certificate(&gram, &x) <= tol {
            break;
        }
    }
    if let Some(polished) = polish_on_support(&gram, &x) {
        if quad(&gram, &polished) <= quad(&gram, &x) + 1e-15 * scale {
            x = polished;
        }
    }
    let certificate = fw_certificate(&gram, &x).max(0.0);
    let weights = TaskWeights::new(x.iter().copied().collect()).expect("projected iterate is feasible");
    let gap = grads.combine(&weights).norm_squared();
    MinNormSolution { weights, gap, certificate }
}

// Solves the equality-constrained problem on the support of `x` via KKT:
// [G_S 1; 1ᵀ 0][λ; −ν] = [0; 1]. Returns None when singular or infeasible.
fn polish_on_support(gram: &DMatrix<f64>, x: &DVector<f64>) -> Option<DVector<f64>> {
    let support: Vec<usize> = (0..x.len()).filter(|&i| x[i] > 1e-12).collect();
    let n = support.len();
    let mut kkt = DMatrix::zeros(n + 1, n + 1);
    for (a, &i) in support.iter().enumerate() {
        for (b, &j) in support.iter().enumerate() {
            kkt[(a, b)] = gram[(i, j)];
        }
        kkt[(a, n)] = 1.0;
        kkt[(n, a)] = 1.0;
    }
    let mut rhs = DVector::zeros(n + 1);
    rhs[n] = 1.0;
    let sol = kkt.lu().solve(&rhs)?;
    if sol.iter().take(n).any(|v| !v.is_finite() || *v < 0.0) {
        return None;
    }
    let mut out = DVector::zeros(x.len());
    for (a, &i) in support.iter().enumerate() {
        out[i] = sol[a];
    }
    let total = out.sum();
    Some(out / total)
}

/// Exact per-task gradients as a matrix.
pub fn exact_gradients(mdp: &MultiTaskMdp, policy: &PolicyParams) -> Result<GradientMatrix> {
    let cols = (0..mdp.num_tasks())
        .map(|k| exact_policy_gradient(mdp, k, policy))
        .collect::<Result<Vec<_>>>()?;
    GradientMatrix::from_columns(&cols)
}

/// `min_{λ∈Λ} ‖λᵀ∇J(θ)‖²` with exact gradients.
pub fn pareto_gap(mdp: &MultiTaskMdp, policy: &PolicyParams) -> Result<f64> {
    Ok(exact_lambda_star(&exact_gradients(mdp, policy)?).gap)
}

/// `max_k sqrt(E_{d^k}[(φ^kᵀw*^k − Q^k)²])` at the given policy.
pub fn function_approx_error(mdp: &MultiTaskMdp, policy: &PolicyParams, features: &FeatureMap) -> Result<f64> {
    let table = policy.tabulate()?;
    let mut worst = 0.0f64;
    for k in 0..mdp.num_tasks() {
        let q = exact_q(mdp, k, &table)?;
        let d = exact_visitation(mdp, k, &table)?;
        let fp = td_fixed_point_with(mdp, k, &table, &d, features.task(k))?;
        let approx = feature_matrix(features.task(k)) * &fp.w_star;
        let mse: f64 = (0..q.len()).map(|i| d[i] * (approx[i] - q[i]).powi(2)).sum();
        worst = worst.max(mse.sqrt());
    }
    Ok(worst)
}

/// Optimal value `J*_k = Σ_s ξ_0(s) V*(s)` by value iteration.
pub fn optimal_value(mdp: &MultiTaskMdp, task: usize) -> f64 {
    let (ns, na) = (mdp.num_states(), mdp.num_actions());
    let gamma = mdp.gamma();
    let mut v = vec![0.0; ns];
    loop {
        let next: Vec<f64> = (0..ns)
            .map(|s| {
                (0..na)
                    .map(|a| {
                        let row = mdp.transition_row(task, s, a);
                        mdp.reward(task, s, a) + gamma * row.iter().zip(&v).map(|(p, x)| p * x).sum::<f64>()
                    })
                    .fold(f64::NEG_INFINITY, f64::max)
            })
            .collect();
        let change = next.iter().zip(&v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        v = next;
        if change <= 1e-14 * (1.0 - gamma).max(1e-3) || gamma == 0.0 {
            break;
        }
    }
    mdp.initial_dist(task).iter().zip(&v).map(|(x, v)| x * v).sum()
}

/// Doeblin ergodicity constants `(m, ρ)` with `TV ≤ m ρ^t`, from the
/// minorization mass `Σ_{s'} min_{s,a} P(s'|s,a)`. `None` when that mass is 0.
pub fn doeblin_constants(mdp: &MultiTaskMdp, task: usize) -> Option<(f64, f64)> {
    let (ns, na) = (mdp.num_states(), mdp.num_actions());
    let mass: f64 = (0..ns)
        .map(|s2| {
            (0..ns)
                .flat_map(|s| (0..na).map(move |a| (s, a)))
                .map(|(s, a)| mdp.transition_row(task, s, a)[s2])
                .fold(f64::INFINITY, f64::min)
        })
        .sum();
    (mass > 0.0).then(|| (1.0, 1.0 - mass.min(1.0)))
}

/// Exact quantities for one task.
#[derive(Clone, Debug, Serialize)]
pub struct TaskEvaluation {
    pub q: DVector<f64>,
    pub v: DVector<f64>,
    pub visitation: DVector<f64>,
    pub j: f64,
    pub policy_gradient: DVector<f64>,
    pub td: Option<TdFixedPoint>,
}

/// Every exact quantity at one policy, exportable as JSON.
#[derive(Clone, Debug, Serialize)]
pub struct ExactEvaluation {
    pub tasks: Vec<TaskEvaluation>,
    pub lambda_star: TaskWeights,
    pub pareto_gap: f64,
}

impl ExactEvaluation {
    /// Evaluates `policy` on every task; TD fixed points are included when
    /// critic features are given.
    pub fn compute(mdp: &MultiTaskMdp, policy: &PolicyParams, features: Option<&FeatureMap>) -> Result<Self> {
        let table = policy.tabulate()?;
        let psi = score_matrix(policy, &table);
        let mut tasks = Vec::with_capacity(mdp.num_tasks());
        for k in 0..mdp.num_tasks() {
            let q = exact_q(mdp, k, &table)?;
            let v = state_values(&q, &table);
            let visitation = exact_visitation(mdp, k, &table)?;
            let j = mdp.initial_dist(k).iter().zip(v.iter()).map(|(x, v)| x * v).sum();
            let policy_gradient = &psi * visitation.component_mul(&q);
            let td = features.map(|f| td_fixed_point_with(mdp, k, &table, &visitation, f.task(k))).transpose()?;
            tasks.push(TaskEvaluation { q, v, visitation, j, policy_gradient, td });
        }
        let grads =
            GradientMatrix::from_columns(&tasks.iter().map(|t| t.policy_gradient.clone()).collect::<Vec<_>>())?;
        let sol = exact_lambda_star(&grads);
        Ok(ExactEvaluation { tasks, lambda_star: sol.weights, pareto_gap: sol.gap })
    }

    pub fn gradients(&self) -> GradientMatrix {
        GradientMatrix::from_columns(&self.tasks.iter().map(|t| t.policy_gradient.clone()).collect::<Vec<_>>())
            .expect("columns share a dimension")
    }

    pub fn values(&self) -> Vec<f64> {
        self.tasks.iter().map(|t| t.j).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::{build_one_hot_features, build_random_mdp, conflict_chain, conflict_chain_with, ConflictChainParams};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_theta(p: &PolicyParams, seed: u64, scale: f64) -> PolicyParams {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        p.with_theta(DVector::from_fn(p.dim(), |_, _| scale * (2.0 * rng.random::<f64>() - 1.0))).unwrap()
    }

    #[test]
    fn single_state_q_is_geometric_series() {
        let mdp = MultiTaskMdp::new(1, 2, 0.8, vec![vec![1.0, 1.0]], vec![vec![0.5, 0.5]], vec![vec![1.0]]).unwrap();
        let table = PolicyParams::one_hot(1, 2).tabulate().unwrap();
        let q = exact_q(&mdp, 0, &table).unwrap();
        assert!(q.iter().all(|x| (x - 2.5).abs() < 1e-12));
    }

    #[test]
    fn myopic_q_is_reward() {
        let mdp = build_random_mdp(4, 4, 3, 1, 0.0, 0.5).unwrap();
        let table = PolicyParams::one_hot(4, 3).tabulate().unwrap();
        let q = exact_q(&mdp, 0, &table).unwrap();
        for (x, r) in q.iter().zip(mdp.rewards(0)) {
            assert!((x - r).abs() < 1e-14);
        }
    }

    fn long_horizon_chain() -> MultiTaskMdp {
        conflict_chain_with(&ConflictChainParams { gamma: 0.9, ..Default::default() }).unwrap()
    }

    #[test]
    fn q_matches_value_iteration() {
        let mdp = long_horizon_chain();
        let policy = random_theta(&PolicyParams::one_hot(5, 2), 3, 1.0);
        let table = policy.tabulate().unwrap();
        let q = exact_q(&mdp, 0, &table).unwrap();
        let na = 2;
        let mut it = vec![0.0; 10];
        for _ in 0..10_000 {
            it = (0..10)
                .map(|i| {
                    let (s, a) = (i / na, i % na);
                    let row = mdp.transition_row(0, s, a);
                    let next: f64 = (0..5)
                        .map(|s2| row[s2] * (0..na).map(|b| table.prob(s2, b) * it[s2 * na + b]).sum::<f64>())
                        .sum();
                    mdp.reward(0, s, a) + 0.9 * next
                })
                .collect();
        }
        for i in 0..10 {
            assert!((q[i] - it[i]).abs() < 1e-8);
        }
    }

    #[test]
    fn visitation_limits() {
        let mdp = build_random_mdp(5, 3, 2, 1, 0.0, 0.5).unwrap();
        let policy = random_theta(&PolicyParams::one_hot(3, 2), 1, 1.0);
        let table = policy.tabulate().unwrap();
        let d = exact_visitation(&mdp, 0, &table).unwrap();
        for i in 0..6 {
            let expected = mdp.initial_dist(0)[i / 2] * table.prob(i / 2, i % 2);
            assert!((d[i] - expected).abs() < 1e-12);
        }
        let single = MultiTaskMdp::new(1, 3, 0.9, vec![vec![1.0; 3]], vec![vec![0.1; 3]], vec![vec![1.0]]).unwrap();
        let policy = random_theta(&PolicyParams::one_hot(1, 3), 2, 1.0);
        let table = policy.tabulate().unwrap();
        let d = exact_visitation(&single, 0, &table).unwrap();
        for a in 0..3 {
            assert!((d[a] - table.prob(0, a)).abs() < 1e-12);
        }
    }

    #[test]
    fn visitation_matches_truncated_series() {
        let mdp = long_horizon_chain();
        let policy = random_theta(&PolicyParams::one_hot(5, 2), 8, 1.0);
        let table = policy.tabulate().unwrap();
        let d = exact_visitation(&mdp, 1, &table).unwrap();
        let p = pair_kernel(&mdp, 1, &table);
        let mut law = DVector::from_fn(10, |i, _| mdp.initial_dist(1)[i / 2] * table.prob(i / 2, i % 2));
        let mut series = DVector::zeros(10);
        let mut weight = 0.1;
        for _ in 0..=200 {
            series += &law * weight;
            law = p.transpose() * law;
            weight *= 0.9;
        }
        // The tail beyond t = 200 carries γ^201 ≈ 6e-10 of mass.
        assert!((series - d).amax() < 1e-8);
    }

    #[test]
    fn constant_reward_gives_zero_gradient() {
        let mdp = build_random_mdp(2, 4, 3, 1, 0.9, 0.3).unwrap().with_rewards(|_, _, _| 0.4).unwrap();
        let policy = random_theta(&PolicyParams::one_hot(4, 3), 5, 1.0);
        assert!(exact_policy_gradient(&mdp, 0, &policy).unwrap().norm() < 1e-12);
    }

    #[test]
    fn myopic_single_state_gradient() {
        let mdp =
            MultiTaskMdp::new(1, 3, 0.0, vec![vec![1.0; 3]], vec![vec![0.2, 0.9, 0.5]], vec![vec![1.0]]).unwrap();
        let policy = random_theta(&PolicyParams::one_hot(1, 3), 6, 1.5);
        let g = exact_policy_gradient(&mdp, 0, &policy).unwrap();
        let probs = policy.action_probs(0).unwrap();
        let mut expected = DVector::zeros(3);
        for a in 0..3 {
            expected += policy.score(0, a).unwrap() * (probs[a] * mdp.reward(0, 0, a));
        }
        assert!((g - expected).norm() < 1e-14);
    }

    #[test]
    fn zero_rewards_give_zero_fixed_point() {
        let mdp = conflict_chain().with_rewards(|_, _, _| 0.0).unwrap();
        let features = build_one_hot_features(&mdp);
        let fp = exact_td_fixed_point(&mdp, 0, &PolicyParams::one_hot(5, 2), &features).unwrap();
        assert!(fp.b.norm() == 0.0 && fp.w_star.norm() == 0.0);
    }

    #[test]
    fn one_hot_fixed_point_is_q() {
        let mdp = build_random_mdp(9, 4, 3, 2, 0.9, 0.2).unwrap();
        let features = build_one_hot_features(&mdp);
        let policy = random_theta(&PolicyParams::one_hot(4, 3), 1, 2.0);
        for k in 0..2 {
            let fp = exact_td_fixed_point(&mdp, k, &policy, &features).unwrap();
            let q = exact_q(&mdp, k, &policy.tabulate().unwrap()).unwrap();
            assert!((&fp.w_star - &q).amax() < 1e-8);
            assert!(fp.negative_definite && fp.lambda_a > 0.0);
        }
        assert!(function_approx_error(&mdp, &policy, &features).unwrap() < 1e-8);
    }

    #[test]
    fn duplicated_column_is_rank_deficient() {
        let mdp = conflict_chain();
        let features = crate::mdp::build_duplicated_one_hot(&mdp, 2).unwrap();
        let err = exact_td_fixed_point(&mdp, 0, &PolicyParams::one_hot(5, 2), &features).unwrap_err();
        assert!(matches!(err, Error::RankDeficient { rank: 10, dim: 11, .. }), "{err}");
    }

    #[test]
    fn reduced_features_have_positive_error() {
        let mdp = conflict_chain();
        // Keep only the first half of the one-hot coordinates.
        let table = FeatureTable::from_fn(5, 2, 5, |s, a| {
            let i = s * 2 + a;
            let mut v = vec![0.0; 5];
            v[i % 5] = 1.0;
            v
        })
        .unwrap();
        let features = FeatureMap::shared(&mdp, table).unwrap();
        assert!(function_approx_error(&mdp, &PolicyParams::one_hot(5, 2), &features).unwrap() > 1e-3);
    }

    #[test]
    fn smoothed_gradient_at_fixed_point_is_exact() {
        let mdp = conflict_chain();
        let features = build_one_hot_features(&mdp);
        let policy = random_theta(&PolicyParams::one_hot(5, 2), 4, 1.0);
        for k in 0..2 {
            let fp = exact_td_fixed_point(&mdp, k, &policy, &features).unwrap();
            let smooth = exact_smoothed_gradient(&mdp, k, &policy, &features, &fp.w_star).unwrap();
            let exact = exact_policy_gradient(&mdp, k, &policy).unwrap();
            assert!((smooth - exact).amax() < 1e-8);
        }
        let zero = exact_smoothed_gradient(&mdp, 0, &policy, &features, &DVector::zeros(10)).unwrap();
        assert_eq!(zero.norm(), 0.0);
    }

    #[test]
    fn lambda_star_small_cases() {
        let g = GradientMatrix::from_task_slices(&[&[3.0, 4.0]]).unwrap();
        let s = exact_lambda_star(&g);
        assert_eq!(s.weights.as_slice(), &[1.0]);
        assert!((s.gap - 25.0).abs() < 1e-12);

        let g = GradientMatrix::from_task_slices(&[&[1.0, -2.0], &[-1.0, 2.0]]).unwrap();
        let s = exact_lambda_star(&g);
        assert!((s.weights.as_slice()[0] - 0.5).abs() < 1e-12 && s.gap < 1e-20);

        let g = GradientMatrix::from_task_slices(&[&[1.0, 0.0], &[0.0, 2.0]]).unwrap();
        let s = exact_lambda_star(&g);
        assert!((s.weights.as_slice()[0] - 0.8).abs() < 1e-12);
        assert!((s.gap - 0.8).abs() < 1e-12);
        assert!(s.certificate <= 1e-9);
    }

    #[test]
    fn doeblin_for_uniform_rows() {
        let mdp = build_random_mdp(0, 4, 2, 1, 0.9, 1.0).unwrap();
        let (m, rho) = doeblin_constants(&mdp, 0).unwrap();
        assert_eq!(m, 1.0);
        assert!(rho.abs() < 1e-12);
    }

    #[test]
    fn optimal_value_dominates_policies() {
        let mdp = build_random_mdp(3, 4, 3, 2, 0.9, 0.2).unwrap();
        for seed in 0..10 {
            let policy = random_theta(&PolicyParams::one_hot(4, 3), seed, 3.0);
            let table = policy.tabulate().unwrap();
            for k in 0..2 {
                assert!(exact_j(&mdp, k, &table).unwrap() <= optimal_value(&mdp, k) + 1e-9);
            }
        }
    }

    #[test]
    fn oversized_problem_is_refused() {
        let mdp = build_random_mdp(0, 65, 64, 1, 0.5, 1.0).unwrap();
        let table = ActionTable::from_probs(64, vec![1.0 / 64.0; 65 * 64]).unwrap();
        assert!(matches!(exact_q(&mdp, 0, &table), Err(Error::TooLarge { .. })));
    }
}
