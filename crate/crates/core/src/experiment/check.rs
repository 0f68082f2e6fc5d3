use std::fmt;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{ExperimentSpec, FeatureSpec};
use crate::direction::TaskWeights;
use crate::error::Result;
use crate::oracle::{self, exact_gradients, exact_lambda_star, pair_kernel};
use crate::policy::PolicyParams;

const RESIDUAL_TOL: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    /// Worst value of the checked quantity, when it is numeric.
    pub value: Option<f64>,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OracleReport {
    pub checks: Vec<CheckResult>,
}

impl OracleReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &CheckResult> {
        self.checks.iter().filter(|c| !c.passed)
    }
}

impl fmt::Display for OracleReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            let value = c.value.map(|v| format!(" value={v:.3e}")).unwrap_or_default();
            writeln!(f, "{} {}{value}  {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail)?;
        }
        Ok(())
    }
}

struct Checker {
    checks: Vec<CheckResult>,
}

impl Checker {
    fn record(&mut self, name: &str, outcome: Result<(f64, f64)>, what: &str) {
        // `outcome` is (worst value, tolerance).
        let result = match outcome {
            Ok((value, tol)) => CheckResult {
                name: name.into(),
                passed: value <= tol,
                value: Some(value),
                detail: format!("{what} (tolerance {tol:.0e})"),
            },
            Err(e) => CheckResult { name: name.into(), passed: false, value: None, detail: e.to_string() },
        };
        self.checks.push(result);
    }
}

fn policies(spec: &ExperimentSpec, ns: usize, na: usize) -> Vec<PolicyParams> {
    let base = PolicyParams::one_hot(ns, na);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seeds[0]);
    let mut out = vec![base.clone()];
    for _ in 0..3 {
        let theta = DVector::from_fn(base.dim(), |_, _| 2.0 * rng.random::<f64>() - 1.0);
        out.push(base.with_theta(theta).expect("same dimension"));
    }
    out
}

/// Runs the oracle invariant suite on the spec's MDP and features at θ = 0
/// and three seeded random policies. Read-only and deterministic.
pub fn oracle_check(spec: &ExperimentSpec) -> Result<OracleReport> {
    let mdp = spec.build_mdp()?;
    let features = spec.build_features(&mdp)?;
    let (ns, na, k) = (mdp.num_states(), mdp.num_actions(), mdp.num_tasks());
    let gamma = mdp.gamma();
    let policies = policies(spec, ns, na);
    let mut checker = Checker { checks: Vec::new() };

    let bellman = (|| -> Result<(f64, f64)> {
        let mut worst = 0.0f64;
        for p in &policies {
            let table = p.tabulate()?;
            for task in 0..k {
                let q = oracle::exact_q(&mdp, task, &table)?;
                let r = DVector::from_column_slice(mdp.rewards(task));
                let res = (&q - r - pair_kernel(&mdp, task, &table) * &q * gamma).amax();
                worst = worst.max(res / q.amax().max(1.0));
            }
        }
        Ok((worst, RESIDUAL_TOL))
    })();
    checker.record("bellman_residual", bellman, "relative max |Q - r - gamma P Q|");

    let visitation = (|| -> Result<(f64, f64)> {
        let mut worst = 0.0f64;
        for p in &policies {
            let table = p.tabulate()?;
            for task in 0..k {
                let d = oracle::exact_visitation(&mdp, task, &table)?;
                let xi = mdp.initial_dist(task);
                let mut next = pair_kernel(&mdp, task, &table).transpose() * &d * gamma;
                for (i, x) in next.iter_mut().enumerate() {
                    *x += (1.0 - gamma) * xi[i / na] * table.prob(i / na, i % na);
                }
                worst = worst
                    .max((next - &d).amax())
                    .max((d.sum() - 1.0).abs())
                    .max(-d.min());
            }
        }
        Ok((worst, RESIDUAL_TOL))
    })();
    checker.record("visitation", visitation, "stationarity residual, normalization and sign");

    let td = (|| -> Result<(f64, f64)> {
        let mut worst = 0.0f64;
        for p in &policies {
            for task in 0..k {
                let fp = oracle::exact_td_fixed_point(&mdp, task, p, &features)?;
                worst = worst.max((&fp.a * &fp.w_star + &fp.b).norm());
            }
        }
        Ok((worst, RESIDUAL_TOL))
    })();
    checker.record("td_fixed_point", td, "max |A w* + b|");

    let negdef = (|| -> Result<(f64, f64)> {
        let mut worst = f64::NEG_INFINITY;
        for p in &policies {
            for task in 0..k {
                let fp = oracle::exact_td_fixed_point(&mdp, task, p, &features)?;
                let sym = (&fp.a + fp.a.transpose()) * 0.5;
                worst = worst.max(sym.symmetric_eigenvalues().max());
            }
        }
        Ok((worst, 0.0))
    })();
    checker.record("a_negative_definite", negdef, "largest eigenvalue of sym(A)");

    let eps_tol = if spec.features == FeatureSpec::OneHot { 1e-8 } else { f64::MAX };
    let eps = (|| -> Result<(f64, f64)> {
        let mut worst = 0.0f64;
        for p in &policies {
            worst = worst.max(oracle::function_approx_error(&mdp, p, &features)?);
        }
        Ok((worst, eps_tol))
    })();
    let what = if eps_tol < 1.0 { "one-hot features represent Q exactly" } else { "reported, not bounded" };
    checker.record("approximation_error", eps, what);

    let lambda = (|| -> Result<(f64, f64)> {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seeds[0] ^ 0x5eed);
        let mut worst = f64::NEG_INFINITY;
        for p in &policies {
            let g = exact_gradients(&mdp, p)?;
            let sol = exact_lambda_star(&g);
            let scale = g.gram().diagonal().max().max(f64::MIN_POSITIVE);
            worst = worst.max(sol.certificate / scale - 1e-9);
            for _ in 0..1000 {
                let raw: Vec<f64> = (0..k).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
                let total: f64 = raw.iter().sum();
                let lam = TaskWeights::new(raw.iter().map(|x| x / total).collect())?;
                let excess = (sol.gap - g.combine(&lam).norm_squared()) / scale;
                worst = worst.max(excess - 1e-12);
            }
        }
        Ok((worst.max(0.0), 0.0))
    })();
    checker.record("lambda_star_optimality", lambda, "certificate and gap against 1000 random weights");

    let fd = (|| -> Result<(f64, f64)> {
        let h = 1e-5;
        let mut worst = 0.0f64;
        for p in &policies {
            for task in 0..k {
                let exact = oracle::exact_policy_gradient(&mdp, task, p)?;
                let mut fd = DVector::zeros(p.dim());
                for i in 0..p.dim() {
                    let mut plus = p.theta().clone();
                    let mut minus = plus.clone();
                    plus[i] += h;
                    minus[i] -= h;
                    let jp = oracle::exact_j(&mdp, task, &p.with_theta(plus)?.tabulate()?)?;
                    let jm = oracle::exact_j(&mdp, task, &p.with_theta(minus)?.tabulate()?)?;
                    fd[i] = (1.0 - gamma) * (jp - jm) / (2.0 * h);
                }
                let denom = exact.norm().max(1e-8);
                worst = worst.max((fd - exact).norm() / denom);
            }
        }
        Ok((worst, 1e-4))
    })();
    checker.record("gradient_finite_difference", fd, "relative error against (1-gamma) dJ/dtheta");

    Ok(OracleReport { checks: checker.checks })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(features: &str) -> ExperimentSpec {
        ExperimentSpec::from_toml_str(&format!("[mdp]\nbuilder = \"conflict_chain\"\n[features]\n{features}\n"), None)
            .unwrap()
    }

    #[test]
    fn golden_suite_passes() {
        let report = oracle_check(&spec("kind = \"one_hot\"")).unwrap();
        assert!(report.passed(), "{report}");
        let eps = report.checks.iter().find(|c| c.name == "approximation_error").unwrap();
        assert!(eps.value.unwrap() <= 1e-8);
        assert_eq!(report.checks.len(), 7);
    }

    #[test]
    fn duplicate_column_is_named() {
        let report = oracle_check(&spec("kind = \"duplicated_one_hot\"\ncolumn = 3")).unwrap();
        let failed: Vec<&str> = report.failures().map(|c| c.name.as_str()).collect();
        assert!(failed.contains(&"td_fixed_point"));
        let td = report.checks.iter().find(|c| c.name == "td_fixed_point").unwrap();
        assert!(td.detail.contains("rank deficient"), "{}", td.detail);
    }
}
