//! Multi-task tabular MDPs with their linear feature maps and samplers.
//!
//! Every task shares the state and action spaces and the discount factor but
//! owns its transition kernel and reward table, plus an initial-state distribution.
//! Transitions are stored densely as `[s][a][s']` rows flattened into one
//! vector per task.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::policy::ActionTable;

const ROW_TOL: f64 = 1e-12;

/// K tasks over a shared finite state and action space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MdpFile", into = "MdpFile")]
pub struct MultiTaskMdp {
    num_states: usize,
    num_actions: usize,
    num_tasks: usize,
    gamma: f64,
    transitions: Vec<Vec<f64>>,
    rewards: Vec<Vec<f64>>,
    initial_dist: Vec<Vec<f64>>,
}

/// On-disk layout: dense nested arrays, `transitions[k][s][a][s']`,
/// `rewards[k][s][a]`, `initial_dist[k][s]`.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MdpFile {
    pub num_states: usize,
    pub num_actions: usize,
    pub num_tasks: usize,
    pub gamma: f64,
    pub transitions: Vec<Vec<Vec<Vec<f64>>>>,
    pub rewards: Vec<Vec<Vec<f64>>>,
    pub initial_dist: Vec<Vec<f64>>,
}

impl TryFrom<MdpFile> for MultiTaskMdp {
    type Error = Error;

    fn try_from(f: MdpFile) -> Result<Self> {
        let (ns, na, nk) = (f.num_states, f.num_actions, f.num_tasks);
        let bad = |what: &str| Error::config(format!("mdp file: {what} has the wrong shape"));
        if f.transitions.len() != nk || f.rewards.len() != nk || f.initial_dist.len() != nk {
            return Err(bad("per-task arrays"));
        }
        let mut transitions = Vec::with_capacity(nk);
        let mut rewards = Vec::with_capacity(nk);
        for k in 0..nk {
            if f.transitions[k].len() != ns || f.rewards[k].len() != ns {
                return Err(bad("state axis"));
            }
            let mut p = Vec::with_capacity(ns * na * ns);
            let mut r = Vec::with_capacity(ns * na);
            for s in 0..ns {
                if f.transitions[k][s].len() != na || f.rewards[k][s].len() != na {
                    return Err(bad("action axis"));
                }
                for a in 0..na {
                    if f.transitions[k][s][a].len() != ns {
                        return Err(bad("next-state axis"));
                    }
                    p.extend_from_slice(&f.transitions[k][s][a]);
                    r.push(f.rewards[k][s][a]);
                }
            }
            transitions.push(p);
            rewards.push(r);
        }
        MultiTaskMdp::new(ns, na, f.gamma, transitions, rewards, f.initial_dist)
    }
}

impl From<MultiTaskMdp> for MdpFile {
    fn from(m: MultiTaskMdp) -> Self {
        let (ns, na) = (m.num_states, m.num_actions);
        let transitions = (0..m.num_tasks)
            .map(|k| {
                (0..ns)
                    .map(|s| (0..na).map(|a| m.transition_row(k, s, a).to_vec()).collect())
                    .collect()
            })
            .collect();
        let rewards = (0..m.num_tasks)
            .map(|k| (0..ns).map(|s| (0..na).map(|a| m.reward(k, s, a)).collect()).collect())
            .collect();
        MdpFile {
            num_states: ns,
            num_actions: na,
            num_tasks: m.num_tasks,
            gamma: m.gamma,
            transitions,
            rewards,
            initial_dist: m.initial_dist,
        }
    }
}

fn check_distribution(row: &[f64], what: impl Fn() -> String) -> Result<()> {
    if row.iter().any(|p| !p.is_finite() || *p < 0.0) {
        return Err(Error::config(format!("{} has a negative or non-finite entry", what())));
    }
    let sum: f64 = row.iter().sum();
    if (sum - 1.0).abs() > ROW_TOL {
        return Err(Error::config(format!("{} sums to {sum}, not 1", what())));
    }
    Ok(())
}

impl MultiTaskMdp {
    /// Builds and validates an MDP from flat per-task tables.
    ///
    /// `transitions[k]` has length `S*A*S` in `[s][a][s']` order, `rewards[k]`
    /// has length `S*A`, and `initial_dist[k]` has length `S`.
    pub fn new(
        num_states: usize,
        num_actions: usize,
        gamma: f64,
        transitions: Vec<Vec<f64>>,
        rewards: Vec<Vec<f64>>,
        initial_dist: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let num_tasks = transitions.len();
        if num_states == 0 || num_actions == 0 || num_tasks == 0 {
            return Err(Error::config("state, action and task counts must be positive"));
        }
        if !(0.0..1.0).contains(&gamma) {
            return Err(Error::config(format!("gamma must lie in [0, 1), got {gamma}")));
        }
        if rewards.len() != num_tasks || initial_dist.len() != num_tasks {
            return Err(Error::config("per-task tables disagree on the number of tasks"));
        }
        let (ns, na) = (num_states, num_actions);
        for k in 0..num_tasks {
            if transitions[k].len() != ns * na * ns {
                return Err(Error::DimensionMismatch { expected: ns * na * ns, found: transitions[k].len() });
            }
            if rewards[k].len() != ns * na {
                return Err(Error::DimensionMismatch { expected: ns * na, found: rewards[k].len() });
            }
            if initial_dist[k].len() != ns {
                return Err(Error::DimensionMismatch { expected: ns, found: initial_dist[k].len() });
            }
            for (i, row) in transitions[k].chunks(ns).enumerate() {
                check_distribution(row, || format!("transition row (task {k}, s {}, a {})", i / na, i % na))?;
            }
            if let Some(r) = rewards[k].iter().find(|r| !(0.0..=1.0).contains(*r)) {
                return Err(Error::config(format!("reward {r} of task {k} is outside [0, 1]")));
            }
            check_distribution(&initial_dist[k], || format!("initial distribution of task {k}"))?;
        }
        Ok(MultiTaskMdp { num_states, num_actions, num_tasks, gamma, transitions, rewards, initial_dist })
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn num_tasks(&self) -> usize {
        self.num_tasks
    }

    /// Number of state-action pairs, `|S|·|A|`.
    pub fn num_pairs(&self) -> usize {
        self.num_states * self.num_actions
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn transition_row(&self, task: usize, state: usize, action: usize) -> &[f64] {
        let ns = self.num_states;
        let start = (state * self.num_actions + action) * ns;
        &self.transitions[task][start..start + ns]
    }

    pub fn reward(&self, task: usize, state: usize, action: usize) -> f64 {
        self.rewards[task][state * self.num_actions + action]
    }

    pub fn rewards(&self, task: usize) -> &[f64] {
        &self.rewards[task]
    }

    pub fn initial_dist(&self, task: usize) -> &[f64] {
        &self.initial_dist[task]
    }

    /// A copy of this MDP with every reward table replaced by `f(k, s, a)`.
    pub fn with_rewards(&self, f: impl Fn(usize, usize, usize) -> f64) -> Result<Self> {
        let rewards = (0..self.num_tasks)
            .map(|k| {
                (0..self.num_states)
                    .flat_map(|s| (0..self.num_actions).map(move |a| (s, a)))
                    .map(|(s, a)| f(k, s, a))
                    .collect()
            })
            .collect();
        MultiTaskMdp::new(
            self.num_states,
            self.num_actions,
            self.gamma,
            self.transitions.clone(),
            rewards,
            self.initial_dist.clone(),
        )
    }

    /// Keeps only the listed tasks, in the given order.
    pub fn select_tasks(&self, tasks: &[usize]) -> Result<Self> {
        if let Some(&k) = tasks.iter().find(|&&k| k >= self.num_tasks) {
            return Err(Error::config(format!("task index {k} out of range")));
        }
        MultiTaskMdp::new(
            self.num_states,
            self.num_actions,
            self.gamma,
            tasks.iter().map(|&k| self.transitions[k].clone()).collect(),
            tasks.iter().map(|&k| self.rewards[k].clone()).collect(),
            tasks.iter().map(|&k| self.initial_dist[k].clone()).collect(),
        )
    }

    fn check_indices(&self, task: usize, state: usize, action: usize) {
        assert!(task < self.num_tasks, "task {task} out of range");
        assert!(state < self.num_states, "state {state} out of range");
        assert!(action < self.num_actions, "action {action} out of range");
    }
}

/// Draws an index from a probability vector by inverse-CDF.
pub(crate) fn sample_categorical<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    // Rounding can leave `acc` a hair below 1; fall back to the last supported index.
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(probs.len() - 1)
}

/// Random MDP with every transition entry at least `mixing / |S|`.
///
/// Rows are drawn from a flat Dirichlet and blended with the uniform
/// distribution; rewards are uniform on `[0, 1]` and initial distributions
/// are flat-Dirichlet draws.
pub fn build_random_mdp(
    seed: u64,
    num_states: usize,
    num_actions: usize,
    num_tasks: usize,
    gamma: f64,
    mixing: f64,
) -> Result<MultiTaskMdp> {
    if num_states == 0 || num_actions == 0 || num_tasks == 0 {
        return Err(Error::config("state, action and task counts must be positive"));
    }
    if !(0.0..1.0).contains(&gamma) {
        return Err(Error::config(format!("gamma must lie in [0, 1), got {gamma}")));
    }
    if !(mixing > 0.0 && mixing <= 1.0) {
        return Err(Error::config(format!("mixing must lie in (0, 1], got {mixing}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ns = num_states;
    let uniform = 1.0 / ns as f64;
    let flat_dirichlet = |n: usize, rng: &mut ChaCha8Rng| -> Vec<f64> {
        let draws: Vec<f64> = (0..n).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
        let total: f64 = draws.iter().sum();
        draws.into_iter().map(|x| x / total).collect()
    };
    let mut transitions = Vec::with_capacity(num_tasks);
    let mut rewards = Vec::with_capacity(num_tasks);
    let mut initial = Vec::with_capacity(num_tasks);
    for _ in 0..num_tasks {
        let mut p = Vec::with_capacity(ns * num_actions * ns);
        for _ in 0..ns * num_actions {
            let row = flat_dirichlet(ns, &mut rng);
            if mixing == 1.0 {
                p.extend(std::iter::repeat_n(uniform, ns));
            } else {
                let mut blended: Vec<f64> = row.iter().map(|q| (1.0 - mixing) * q + mixing * uniform).collect();
                renormalize(&mut blended);
                p.extend(blended);
            }
        }
        transitions.push(p);
        rewards.push((0..ns * num_actions).map(|_| rng.random::<f64>()).collect());
        let mut xi = flat_dirichlet(ns, &mut rng);
        renormalize(&mut xi);
        initial.push(xi);
    }
    MultiTaskMdp::new(num_states, num_actions, gamma, transitions, rewards, initial)
}

// Pushes the rounding residue onto the largest entry so the row sums to 1.
fn renormalize(row: &mut [f64]) {
    let total: f64 = row.iter().sum();
    row.iter_mut().for_each(|x| *x /= total);
    let residue = 1.0 - row.iter().sum::<f64>();
    if let Some(max) = row.iter_mut().max_by(|a, b| a.total_cmp(b)) {
        *max += residue;
    }
}

/// Parameters of the two-task conflict chain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConflictChainParams {
    pub num_states: usize,
    pub gamma: f64,
    /// Probability that the chosen move succeeds before uniform mixing.
    pub success: f64,
    /// Weight of the uniform component blended into every row.
    pub mixing: f64,
    /// Paid to task 0 for every move to the right.
    pub right_reward: f64,
    /// Paid to task 1 for every move to the left.
    pub left_reward: f64,
    /// Paid to both tasks in the middle state, whatever the action.
    pub shared_reward: f64,
}

impl Default for ConflictChainParams {
    fn default() -> Self {
        ConflictChainParams {
            num_states: 5,
            gamma: 0.5,
            success: 0.9,
            mixing: 0.1,
            right_reward: 0.6,
            left_reward: 0.3,
            shared_reward: 0.4,
        }
    }
}

/// The golden two-task chain: action 0 moves left, action 1 moves right.
///
/// Task 0 is paid for moving right and task 1 for moving left, with task 1
/// paid less so its gradient is the smaller one. Both are paid in the middle
/// state, which pulls the outer states towards the centre in both tasks and
/// keeps the gradients from being exactly opposed. Both tasks share the
/// kernel and start uniformly.
pub fn conflict_chain() -> MultiTaskMdp {
    conflict_chain_with(&ConflictChainParams::default()).expect("default conflict chain is valid")
}

pub fn conflict_chain_with(p: &ConflictChainParams) -> Result<MultiTaskMdp> {
    let ns = p.num_states;
    if ns < 3 {
        return Err(Error::config("conflict chain needs at least 3 states"));
    }
    if !(0.0..=1.0).contains(&p.success) || !(0.0..=1.0).contains(&p.mixing) {
        return Err(Error::config("success and mixing must lie in [0, 1]"));
    }
    let na = 2;
    let mut kernel = Vec::with_capacity(ns * na * ns);
    for s in 0..ns {
        for a in 0..na {
            let target = if a == 0 { s.saturating_sub(1) } else { (s + 1).min(ns - 1) };
            let mut row = vec![0.0; ns];
            row[target] += p.success;
            row[s] += 1.0 - p.success;
            let mut row: Vec<f64> =
                row.iter().map(|q| (1.0 - p.mixing) * q + p.mixing / ns as f64).collect();
            renormalize(&mut row);
            kernel.extend(row);
        }
    }
    let middle = ns / 2;
    let reward = |paid_action: usize, amount: f64| -> Vec<f64> {
        (0..ns)
            .flat_map(|s| {
                (0..na).map(move |a| {
                    let own = if a == paid_action { amount } else { 0.0 };
                    own + if s == middle { p.shared_reward } else { 0.0 }
                })
            })
            .collect()
    };
    let xi = vec![1.0 / ns as f64; ns];
    MultiTaskMdp::new(
        ns,
        na,
        p.gamma,
        vec![kernel.clone(), kernel],
        vec![reward(1, p.right_reward), reward(0, p.left_reward)],
        vec![xi.clone(), xi],
    )
}

/// Dense feature table: `(s, a) → R^dim`, flattened as `[s][a][i]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureTable {
    num_states: usize,
    num_actions: usize,
    dim: usize,
    data: Vec<f64>,
}

impl FeatureTable {
    pub fn from_fn(
        num_states: usize,
        num_actions: usize,
        dim: usize,
        mut f: impl FnMut(usize, usize) -> Vec<f64>,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::config("feature dimension must be positive"));
        }
        let mut data = Vec::with_capacity(num_states * num_actions * dim);
        for s in 0..num_states {
            for a in 0..num_actions {
                let v = f(s, a);
                if v.len() != dim {
                    return Err(Error::DimensionMismatch { expected: dim, found: v.len() });
                }
                if v.iter().any(|x| !x.is_finite()) {
                    return Err(Error::numeric(format!("non-finite feature at ({s}, {a})")));
                }
                data.extend(v);
            }
        }
        Ok(FeatureTable { num_states, num_actions, dim, data })
    }

    /// Canonical basis vector `e_{s·|A|+a}` for every pair.
    pub fn one_hot(num_states: usize, num_actions: usize) -> Self {
        let dim = num_states * num_actions;
        let mut data = vec![0.0; dim * dim];
        for i in 0..dim {
            data[i * dim + i] = 1.0;
        }
        FeatureTable { num_states, num_actions, dim, data }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn get(&self, state: usize, action: usize) -> &[f64] {
        let start = (state * self.num_actions + action) * self.dim;
        &self.data[start..start + self.dim]
    }

    /// `⟨φ(s,a), w⟩`.
    pub fn dot(&self, state: usize, action: usize, w: &[f64]) -> f64 {
        self.get(state, action).iter().zip(w).map(|(x, y)| x * y).sum()
    }

    /// Largest Euclidean norm over all pairs.
    pub fn max_norm(&self) -> f64 {
        self.data
            .chunks(self.dim)
            .map(|v| v.iter().map(|x| x * x).sum::<f64>().sqrt())
            .fold(0.0, f64::max)
    }
}

/// Per-task critic features `φ^k` with their common norm bound `C_φ,2`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureMap {
    tables: Vec<FeatureTable>,
    c_phi_bound: f64,
}

impl FeatureMap {
    pub fn new(tables: Vec<FeatureTable>) -> Result<Self> {
        let first = tables.first().ok_or_else(|| Error::config("feature map needs at least one task"))?;
        let dim = first.dim;
        if let Some(t) = tables.iter().find(|t| t.dim != dim) {
            return Err(Error::DimensionMismatch { expected: dim, found: t.dim });
        }
        let c_phi_bound = tables.iter().map(FeatureTable::max_norm).fold(0.0, f64::max);
        Ok(FeatureMap { tables, c_phi_bound })
    }

    /// The same table for every task of `mdp`.
    pub fn shared(mdp: &MultiTaskMdp, table: FeatureTable) -> Result<Self> {
        if table.num_states != mdp.num_states() || table.num_actions != mdp.num_actions() {
            return Err(Error::config("feature table does not match the MDP's state-action space"));
        }
        FeatureMap::new(vec![table; mdp.num_tasks()])
    }

    pub fn dim(&self) -> usize {
        self.tables[0].dim
    }

    pub fn num_tasks(&self) -> usize {
        self.tables.len()
    }

    pub fn c_phi_bound(&self) -> f64 {
        self.c_phi_bound
    }

    pub fn task(&self, task: usize) -> &FeatureTable {
        &self.tables[task]
    }

    pub fn check_compatible(&self, mdp: &MultiTaskMdp) -> Result<()> {
        if self.tables.len() != mdp.num_tasks() {
            return Err(Error::config(format!(
                "feature map has {} tasks, MDP has {}",
                self.tables.len(),
                mdp.num_tasks()
            )));
        }
        if self.tables.iter().any(|t| t.num_states != mdp.num_states() || t.num_actions != mdp.num_actions()) {
            return Err(Error::config("feature tables do not match the MDP's state-action space"));
        }
        Ok(())
    }
}

/// Tabular one-hot critic features (`m = |S|·|A|`, `C_φ,2 = 1`).
pub fn build_one_hot_features(mdp: &MultiTaskMdp) -> FeatureMap {
    FeatureMap::shared(mdp, FeatureTable::one_hot(mdp.num_states(), mdp.num_actions()))
        .expect("one-hot table matches its own MDP")
}

/// Gaussian random features normalized to unit norm, shared by all tasks.
pub fn build_random_features(mdp: &MultiTaskMdp, dim: usize, seed: u64) -> Result<FeatureMap> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let table = FeatureTable::from_fn(mdp.num_states(), mdp.num_actions(), dim, |_, _| {
        let v: Vec<f64> = (0..dim).map(|_| standard_normal(&mut rng)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
        v.into_iter().map(|x| x / norm).collect()
    })?;
    FeatureMap::shared(mdp, table)
}

/// One-hot features with column `source` repeated as an extra trailing column.
pub fn build_duplicated_one_hot(mdp: &MultiTaskMdp, source: usize) -> Result<FeatureMap> {
    let base = FeatureTable::one_hot(mdp.num_states(), mdp.num_actions());
    if source >= base.dim() {
        return Err(Error::config(format!("duplicate column {source} out of range")));
    }
    let table = FeatureTable::from_fn(mdp.num_states(), mdp.num_actions(), base.dim() + 1, |s, a| {
        let mut v = base.get(s, a).to_vec();
        v.push(v[source]);
        v
    })?;
    FeatureMap::shared(mdp, table)
}

fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    // Box-Muller; rand_distr is not worth a dependency for one call site.
    let u1: f64 = 1.0 - rng.random::<f64>();
    let u2: f64 = rng.random();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// A state-action draw tagged with the task it came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StateActionSample {
    pub state: usize,
    pub action: usize,
    pub task: usize,
}

/// One environment transition: `s' ~ P_k(·|s,a)` and the deterministic reward `r_k(s,a)`.
pub fn step<R: Rng + ?Sized>(
    mdp: &MultiTaskMdp,
    task: usize,
    state: usize,
    action: usize,
    rng: &mut R,
) -> (usize, f64) {
    mdp.check_indices(task, state, action);
    let next = sample_categorical(mdp.transition_row(task, state, action), rng);
    (next, mdp.reward(task, state, action))
}

/// Draws `(s, a) ~ d^k_π` by a geometric-horizon rollout: start from `ξ_0^k`,
/// and after each action stop with probability `1 − γ`.
pub fn sample_visitation<R: Rng + ?Sized>(
    mdp: &MultiTaskMdp,
    task: usize,
    policy: &ActionTable,
    rng: &mut R,
) -> StateActionSample {
    assert!(task < mdp.num_tasks(), "task {task} out of range");
    let stop = 1.0 - mdp.gamma();
    let mut state = sample_categorical(mdp.initial_dist(task), rng);
    loop {
        let action = sample_categorical(policy.probs(state), rng);
        if rng.random::<f64>() < stop {
            return StateActionSample { state, action, task };
        }
        state = sample_categorical(mdp.transition_row(task, state, action), rng);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::PolicyParams;

    #[test]
    fn mixing_one_gives_uniform_rows() {
        let mdp = build_random_mdp(3, 4, 2, 2, 0.9, 1.0).unwrap();
        for k in 0..2 {
            for s in 0..4 {
                for a in 0..2 {
                    assert!(mdp.transition_row(k, s, a).iter().all(|&p| p == 0.25));
                }
            }
        }
    }

    #[test]
    fn random_mdp_is_deterministic_in_seed() {
        let a = build_random_mdp(11, 5, 3, 2, 0.9, 0.2).unwrap();
        let b = build_random_mdp(11, 5, 3, 2, 0.9, 0.2).unwrap();
        assert_eq!(a, b);
        let c = build_random_mdp(12, 5, 3, 2, 0.9, 0.2).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn mixing_floor_holds() {
        let mdp = build_random_mdp(7, 5, 3, 2, 0.9, 0.1).unwrap();
        let mut min = f64::INFINITY;
        for k in 0..2 {
            for s in 0..5 {
                for a in 0..3 {
                    min = mdp.transition_row(k, s, a).iter().copied().fold(min, f64::min);
                }
            }
        }
        assert!(min >= 0.02 - 1e-15, "min entry {min}");
    }

    #[test]
    fn invalid_configurations_are_rejected() {
        assert!(build_random_mdp(0, 0, 2, 1, 0.5, 0.5).is_err());
        assert!(build_random_mdp(0, 2, 2, 1, 1.0, 0.5).is_err());
        assert!(build_random_mdp(0, 2, 2, 1, 0.5, 0.0).is_err());
        let bad_row = MultiTaskMdp::new(1, 1, 0.5, vec![vec![0.9]], vec![vec![0.0]], vec![vec![1.0]]);
        assert!(matches!(bad_row, Err(Error::Config(_))));
        let bad_reward = MultiTaskMdp::new(1, 1, 0.5, vec![vec![1.0]], vec![vec![1.5]], vec![vec![1.0]]);
        assert!(bad_reward.is_err());
    }

    #[test]
    fn one_hot_layout() {
        let mdp = build_random_mdp(0, 2, 2, 1, 0.5, 0.5).unwrap();
        let f = build_one_hot_features(&mdp);
        assert_eq!(f.dim(), 4);
        assert_eq!(f.task(0).get(0, 0), &[1.0, 0.0, 0.0, 0.0]);
        assert_eq!(f.task(0).get(1, 1), &[0.0, 0.0, 0.0, 1.0]);
        assert_eq!(f.c_phi_bound(), 1.0);
    }

    #[test]
    fn step_from_point_mass_row() {
        let mut p = vec![0.0; 4 * 4];
        for s in 0..4 {
            p[s * 4 + 3] = 1.0;
        }
        let mdp = MultiTaskMdp::new(4, 1, 0.9, vec![p], vec![vec![0.1, 0.2, 0.3, 0.4]], vec![vec![0.25; 4]])
            .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for s in 0..4 {
            let (next, r) = step(&mdp, 0, s, 0, &mut rng);
            assert_eq!(next, 3);
            assert_eq!(r, mdp.reward(0, s, 0));
        }
    }

    #[test]
    fn step_frequencies_match_row() {
        let mdp = build_random_mdp(5, 4, 2, 1, 0.9, 0.3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = 100_000;
        let mut counts = [0usize; 4];
        for _ in 0..n {
            counts[step(&mdp, 0, 1, 1, &mut rng).0] += 1;
        }
        let row = mdp.transition_row(0, 1, 1);
        for s in 0..4 {
            assert!((counts[s] as f64 / n as f64 - row[s]).abs() < 0.01);
        }
    }

    #[test]
    fn zero_discount_samples_the_start() {
        let mut mdp = build_random_mdp(5, 4, 2, 1, 0.0, 0.3).unwrap();
        mdp.initial_dist[0] = vec![0.0, 0.0, 1.0, 0.0];
        let policy = PolicyParams::one_hot(4, 2);
        let table = policy.tabulate().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            assert_eq!(sample_visitation(&mdp, 0, &table, &mut rng).state, 2);
        }
    }

    #[test]
    fn single_state_visitation() {
        let mdp = MultiTaskMdp::new(1, 3, 0.9, vec![vec![1.0; 3]], vec![vec![0.5; 3]], vec![vec![1.0]]).unwrap();
        let table = PolicyParams::one_hot(1, 3).tabulate().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        assert!((0..500).all(|_| sample_visitation(&mdp, 0, &table, &mut rng).state == 0));
    }

    #[test]
    fn json_round_trip_validates() {
        let mdp = conflict_chain();
        let text = serde_json::to_string(&mdp).unwrap();
        let back: MultiTaskMdp = serde_json::from_str(&text).unwrap();
        assert_eq!(mdp, back);
        let broken = text.replacen("\"gamma\":0.5", "\"gamma\":1.5", 1);
        assert!(serde_json::from_str::<MultiTaskMdp>(&broken).is_err());
    }

    #[test]
    fn duplicated_features_have_extra_column() {
        let mdp = conflict_chain();
        let f = build_duplicated_one_hot(&mdp, 3).unwrap();
        assert_eq!(f.dim(), 11);
        assert_eq!(f.task(1).get(1, 1)[10], 1.0);
    }
}
