//! Property tests over randomly generated problem instances.

use mtac::critic::{run_td0_observed, td_error_bound, CriticWeights, TdStepSchedule};
use mtac::direction::{ca_update_with, fc_update_with, simplex_project, FixedGradients, GradientMatrix, TaskWeights, VisitationSampler};
use mtac::experiment::ExperimentSpec;
use mtac::mdp::{build_one_hot_features, build_random_features, build_random_mdp, sample_visitation, step, MultiTaskMdp};
use mtac::oracle::{exact_lambda_star, exact_q, exact_td_fixed_point, exact_visitation, pair_kernel};
use mtac::policy::PolicyParams;
use mtac::Error;
use nalgebra::DVector;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn mdp_strategy() -> impl Strategy<Value = MultiTaskMdp> {
    (any::<u64>(), 1usize..6, 1usize..4, 1usize..4, 0.0f64..0.95, 0.05f64..1.0)
        .prop_map(|(seed, ns, na, k, gamma, mixing)| build_random_mdp(seed, ns, na, k, gamma, mixing).unwrap())
}

fn policy_for(mdp: &MultiTaskMdp, seed: u64, scale: f64) -> PolicyParams {
    let base = PolicyParams::one_hot(mdp.num_states(), mdp.num_actions());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    base.with_theta(DVector::from_fn(base.dim(), |_, _| scale * (2.0 * rng.random::<f64>() - 1.0))).unwrap()
}

fn random_simplex(k: usize, rng: &mut ChaCha8Rng) -> TaskWeights {
    let raw: Vec<f64> = (0..k).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
    let total: f64 = raw.iter().sum();
    TaskWeights::new(raw.iter().map(|x| x / total).collect()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn generated_mdps_are_well_formed(mdp in mdp_strategy()) {
        let ns = mdp.num_states();
        for k in 0..mdp.num_tasks() {
            prop_assert!((mdp.initial_dist(k).iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!(mdp.rewards(k).iter().all(|r| (0.0..=1.0).contains(r)));
            for s in 0..ns {
                for a in 0..mdp.num_actions() {
                    let row = mdp.transition_row(k, s, a);
                    prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                    prop_assert!(row.iter().all(|p| *p > 0.0));
                }
            }
        }
    }

    #[test]
    fn sampling_is_a_function_of_the_rng_state(mdp in mdp_strategy(), seed in any::<u64>()) {
        let table = policy_for(&mdp, seed, 1.0).tabulate().unwrap();
        let draw = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let sa = sample_visitation(&mdp, 0, &table, &mut rng);
            (sa, step(&mdp, 0, sa.state, sa.action, &mut rng))
        };
        prop_assert_eq!(draw(seed), draw(seed));
    }

    #[test]
    fn score_is_centred_and_bounded(mdp in mdp_strategy(), seed in any::<u64>(), scale in 0.0f64..8.0) {
        let policy = policy_for(&mdp, seed, scale);
        for s in 0..mdp.num_states() {
            let probs = policy.action_probs(s).unwrap();
            let mut mean = DVector::zeros(policy.dim());
            for (a, p) in probs.iter().enumerate() {
                let psi = policy.score(s, a).unwrap();
                prop_assert!(psi.norm() <= policy.score_bound() + 1e-12);
                mean += psi * *p;
            }
            prop_assert!(mean.amax() < 1e-10);
        }
    }

    #[test]
    fn score_matches_log_probability_differences(mdp in mdp_strategy(), seed in any::<u64>()) {
        let policy = policy_for(&mdp, seed, 2.0);
        let h = 1e-5;
        let (s, a) = (seed as usize % mdp.num_states(), (seed >> 8) as usize % mdp.num_actions());
        let psi = policy.score(s, a).unwrap();
        let fd = DVector::from_fn(policy.dim(), |i, _| {
            let mut plus = policy.theta().clone();
            let mut minus = plus.clone();
            plus[i] += h;
            minus[i] -= h;
            (policy.with_theta(plus).unwrap().log_prob(s, a).unwrap() - policy.with_theta(minus).unwrap().log_prob(s, a).unwrap()) / (2.0 * h)
        });
        prop_assert!((fd - &psi).norm() <= 1e-5 * psi.norm().max(1e-3));
    }

    #[test]
    fn oracle_residuals_are_tiny(mdp in mdp_strategy(), seed in any::<u64>()) {
        let policy = policy_for(&mdp, seed, 1.5);
        let table = policy.tabulate().unwrap();
        let features = build_one_hot_features(&mdp);
        let (gamma, na) = (mdp.gamma(), mdp.num_actions());
        for k in 0..mdp.num_tasks() {
            let p = pair_kernel(&mdp, k, &table);
            let q = exact_q(&mdp, k, &table).unwrap();
            let bellman = &q - DVector::from_column_slice(mdp.rewards(k)) - &p * &q * gamma;
            prop_assert!(bellman.amax() <= 1e-10 * q.amax().max(1.0));

            let d = exact_visitation(&mdp, k, &table).unwrap();
            let mut next = p.transpose() * &d * gamma;
            for (i, x) in next.iter_mut().enumerate() {
                *x += (1.0 - gamma) * mdp.initial_dist(k)[i / na] * table.prob(i / na, i % na);
            }
            prop_assert!((next - &d).amax() <= 1e-10);

            let fp = exact_td_fixed_point(&mdp, k, &policy, &features).unwrap();
            prop_assert!((&fp.a * &fp.w_star + &fp.b).amax() <= 1e-10);
        }
    }

    #[test]
    fn critic_respects_ball_and_delta_bound(
        mdp in mdp_strategy(),
        seed in any::<u64>(),
        radius in 0.05f64..20.0,
        dim in 1usize..6,
    ) {
        let policy = policy_for(&mdp, seed, 1.0);
        let table = policy.tabulate().unwrap();
        let features = build_random_features(&mdp, dim, seed).unwrap();
        let bound = td_error_bound(mdp.gamma(), features.c_phi_bound(), radius);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let start = DVector::zeros(dim);
        let mut ok = true;
        run_td0_observed(&mdp, 0, &table, features.task(0), 300, TdStepSchedule::new(0.3).unwrap(), radius, &start, &mut rng, |st| {
            ok &= st.w.norm() <= radius * (1.0 + 1e-12) && st.delta.abs() <= bound;
        })
        .unwrap();
        prop_assert!(ok);
    }

    #[test]
    fn weight_updates_stay_on_the_simplex(
        k in 1usize..6,
        dim in 1usize..6,
        seed in any::<u64>(),
        c in 0.01f64..5.0,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cols: Vec<DVector<f64>> = (0..k).map(|_| DVector::from_fn(dim, |_, _| 4.0 * rng.random::<f64>() - 2.0)).collect();
        let source = FixedGradients(GradientMatrix::from_columns(&cols).unwrap());
        let start = random_simplex(k, &mut rng);
        for out in [
            ca_update_with(&start, &source, 50, c, &mut rng).unwrap(),
            fc_update_with(&start, &source, 3, c, &mut rng).unwrap(),
        ] {
            prop_assert!(out.as_slice().iter().all(|x| *x >= 0.0));
            prop_assert!((out.as_slice().iter().sum::<f64>() - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn sampled_updates_stay_on_the_simplex(mdp in mdp_strategy(), seed in any::<u64>()) {
        let policy = policy_for(&mdp, seed, 1.0);
        let table = policy.tabulate().unwrap();
        let features = build_one_hot_features(&mdp);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w = (0..mdp.num_tasks()).map(|_| DVector::from_fn(features.dim(), |_, _| rng.random::<f64>())).collect();
        let critic = CriticWeights::new(w, 1e3).unwrap();
        let sampler = VisitationSampler { mdp: &mdp, policy: &policy, table: &table, features: &features, critic: &critic };
        let out = ca_update_with(&TaskWeights::uniform(mdp.num_tasks()), &sampler, 40, 0.5, &mut rng).unwrap();
        prop_assert!((out.as_slice().iter().sum::<f64>() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn min_norm_weights_beat_random_weights(k in 1usize..=5, dim in 1usize..=8, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cols: Vec<DVector<f64>> = (0..k).map(|_| DVector::from_fn(dim, |_, _| 2.0 * rng.random::<f64>() - 1.0)).collect();
        let g = GradientMatrix::from_columns(&cols).unwrap();
        let sol = exact_lambda_star(&g);
        let scale = g.gram().diagonal().max();
        for _ in 0..1000 {
            let other = g.combine(&random_simplex(k, &mut rng)).norm_squared();
            prop_assert!(sol.gap <= other + 1e-12 * scale);
        }
    }

    #[test]
    fn projection_is_idempotent(v in prop::collection::vec(-10.0f64..10.0, 1..8)) {
        let once = simplex_project(&v).unwrap();
        let twice = simplex_project(once.as_slice()).unwrap();
        prop_assert!(once.distance(&twice) < 1e-12);
    }

    #[test]
    fn unknown_spec_keys_are_named(key in "[a-z]{3,12}_x") {
        let text = format!("{key} = 1\n[mdp]\nbuilder = \"conflict_chain\"\n");
        match ExperimentSpec::from_toml_str(&text, None) {
            Err(Error::Config(msg)) | Err(Error::Parse(msg)) => prop_assert!(msg.contains(&key), "{}", msg),
            other => prop_assert!(false, "expected a schema error, got {:?}", other.map(|s| s.name)),
        }
    }
}
