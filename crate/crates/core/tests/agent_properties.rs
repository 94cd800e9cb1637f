use nalgebra::{DMatrix, DVector};
use privlin_core::agents::{
    backward_pass, default_eta, run_po, run_po_observed, run_vi, run_vi_observed, AgentConfig,
    ValueRule,
};
use privlin_core::benchmark::three_state_benchmark;
use privlin_core::calib::{NoiseCalibration, PrivacyBudget};
use privlin_core::estimation::Widths;
use privlin_core::mdp::{exact_optimal_values, policy_value, LinearMixtureMdp, Policy};
use privlin_core::regularizer::{FixedRidge, Privatizer, RegularizedStats, StepStats};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

const NO_WIDTH: Widths = Widths {
    beta_p: 0.0,
    beta_r: 0.0,
};

/// `Λ = I`, `u = θ` so that the estimator returns the true parameters.
fn oracle_stats(mdp: &LinearMixtureMdp) -> RegularizedStats {
    let steps = (0..mdp.horizon())
        .map(|h| StepStats {
            lambda_p: DMatrix::identity(mdp.d1(), mdp.d1()),
            u_p: DVector::from_column_slice(mdp.theta_p(h)),
            lambda_r: DMatrix::identity(mdp.d2(), mdp.d2()),
            u_r: DVector::from_column_slice(mdp.theta_r(h)),
        })
        .collect();
    RegularizedStats { steps }
}

#[test]
fn oracle_parameters_reproduce_bellman_backup() {
    let mdp = three_state_benchmark();
    let est = backward_pass(&mdp, &oracle_stats(&mdp), NO_WIDTH, ValueRule::Greedy).unwrap();
    let opt = exact_optimal_values(&mdp);
    for h in 0..5 {
        for s in 0..3 {
            for a in 0..2 {
                assert!((est.q(h, s, a) - opt.q(h, s, a)).abs() < 1e-9);
            }
        }
    }
}

#[test]
fn deterministic_expectation_is_policy_evaluation() {
    let mdp = three_state_benchmark();
    let actions: Vec<usize> = (0..15).map(|i| (i * 7 / 3) % 2).collect();
    let pi = Policy::deterministic(5, 3, 2, &actions).unwrap();
    let est = backward_pass(
        &mdp,
        &oracle_stats(&mdp),
        NO_WIDTH,
        ValueRule::Expectation(&pi),
    )
    .unwrap();
    let exact = policy_value(&mdp, &pi).unwrap();
    for h in 0..5 {
        for s in 0..3 {
            assert!((est.v(h, s) - exact[h * 3 + s]).abs() < 1e-9);
            assert_eq!(est.v(h, s), est.q(h, s, actions[h * 3 + s]));
        }
    }
}

fn ridge(k: usize, lambda: f64) -> FixedRidge {
    FixedRidge::new(lambda, 18, 6, 5, k).unwrap()
}

fn zero_noise(k: usize, floor: f64) -> Privatizer<ChaCha20Rng> {
    Privatizer::new(
        NoiseCalibration::zero_noise(k),
        18,
        6,
        5,
        k,
        ChaCha20Rng::seed_from_u64(999),
    )
    .unwrap()
    .with_floor(floor)
    .unwrap()
}

#[test]
fn zero_noise_privatizer_is_bit_identical_to_ridge() {
    let mdp = three_state_benchmark();
    let k = 60;
    let cfg = AgentConfig::new(k, 0.1);
    for seed in 0..3 {
        for lambda in [1.0, 0.25] {
            let a = run_vi(
                &mdp,
                &mut ridge(k, lambda),
                &cfg,
                &mut ChaCha20Rng::seed_from_u64(seed),
            )
            .unwrap();
            let b = run_vi(
                &mdp,
                &mut zero_noise(k, lambda),
                &cfg,
                &mut ChaCha20Rng::seed_from_u64(seed),
            )
            .unwrap();
            assert_eq!(a, b);
            let eta = default_eta(2, 5, k);
            let a = run_po(
                &mdp,
                &mut ridge(k, lambda),
                &cfg,
                eta,
                &mut ChaCha20Rng::seed_from_u64(seed),
            )
            .unwrap();
            let b = run_po(
                &mdp,
                &mut zero_noise(k, lambda),
                &cfg,
                eta,
                &mut ChaCha20Rng::seed_from_u64(seed),
            )
            .unwrap();
            assert_eq!(a, b);
        }
    }
}

#[test]
fn runs_are_reproducible() {
    let mdp = three_state_benchmark();
    let k = 40;
    let cfg = AgentConfig::new(k, 0.1);
    let cal =
        NoiseCalibration::for_run(PrivacyBudget::new(1.0, 0.1).unwrap(), 0.1, k, 5, 18, 6).unwrap();
    let run = || {
        let mut reg = Privatizer::new(cal, 18, 6, 5, k, ChaCha20Rng::seed_from_u64(8)).unwrap();
        run_vi(&mdp, &mut reg, &cfg, &mut ChaCha20Rng::seed_from_u64(8)).unwrap()
    };
    assert_eq!(run(), run());
}

#[test]
fn estimates_respect_truncation_and_value_rule() {
    let mdp = three_state_benchmark();
    let k = 50;
    let cfg = AgentConfig::new(k, 0.1);
    let check = |est: &privlin_core::agents::ValueEstimates, pi: &Policy, greedy: bool| {
        for h in 0..5 {
            let cap = (5 - h) as f64;
            for s in 0..3 {
                let row = [est.q(h, s, 0), est.q(h, s, 1)];
                assert!(row.iter().all(|q| (0.0..=cap).contains(q)));
                let v = est.v(h, s);
                assert!((0.0..=cap).contains(&v));
                let want = if greedy {
                    row[0].max(row[1])
                } else {
                    pi.row(h, s)[0] * row[0] + pi.row(h, s)[1] * row[1]
                };
                assert!((v - want).abs() <= 1e-12);
            }
        }
        assert!(est.v_layer(5).iter().all(|&v| v == 0.0));
    };
    run_vi_observed(
        &mdp,
        &mut ridge(k, 1.0),
        &cfg,
        &mut ChaCha20Rng::seed_from_u64(1),
        |v| {
            check(v.estimates, v.policy, true);
            Ok(())
        },
    )
    .unwrap();
    let cal =
        NoiseCalibration::for_run(PrivacyBudget::new(2.0, 0.1).unwrap(), 0.1, k, 5, 18, 6).unwrap();
    let mut noisy = Privatizer::new(cal, 18, 6, 5, k, ChaCha20Rng::seed_from_u64(2)).unwrap();
    run_po_observed(
        &mdp,
        &mut noisy,
        &cfg,
        0.5,
        &mut ChaCha20Rng::seed_from_u64(1),
        |v| {
            check(v.estimates, v.policy, false);
            Ok(())
        },
    )
    .unwrap();
}

#[test]
fn po_policies_stay_valid() {
    let mdp = three_state_benchmark();
    let k = 80;
    let cfg = AgentConfig::new(k, 0.1);
    let mut first = true;
    // a large step size pushes rows toward one-hot without breaking them
    run_po_observed(
        &mdp,
        &mut ridge(k, 1.0),
        &cfg,
        50.0,
        &mut ChaCha20Rng::seed_from_u64(4),
        |v| {
            if first {
                assert_eq!(v.policy, &Policy::uniform(5, 3, 2));
                first = false;
            }
            for h in 0..5 {
                for s in 0..3 {
                    let row = v.policy.row(h, s);
                    assert!(row.iter().all(|p| *p >= 0.0));
                    assert!((row.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
                }
            }
            Ok(())
        },
    )
    .unwrap();
}

#[test]
fn regret_is_non_negative_and_bounded() {
    let mdp = three_state_benchmark();
    let k = 30;
    let cfg = AgentConfig::new(k, 0.1);
    let best = exact_optimal_values(&mdp).v(0, 0);
    let out = run_vi(
        &mdp,
        &mut ridge(k, 1.0),
        &cfg,
        &mut ChaCha20Rng::seed_from_u64(0),
    )
    .unwrap();
    assert_eq!(out.regrets.len(), k);
    assert!(out
        .regrets
        .iter()
        .all(|r| *r >= -1e-12 && *r <= best + 1e-12));
    let cum = out.cumulative();
    assert!((cum[k - 1] - out.total()).abs() < 1e-9);
}

#[test]
fn widths_follow_the_regularizer() {
    let mdp = three_state_benchmark();
    let cfg = AgentConfig::new(100, 0.1);
    let r = cfg.resolve_widths(&mdp, &ridge(100, 1.0)).unwrap();
    let cal = NoiseCalibration::for_run(PrivacyBudget::new(2.0, 0.1).unwrap(), 0.1, 100, 5, 18, 6)
        .unwrap();
    let p = Privatizer::new(cal, 18, 6, 5, 100, ChaCha20Rng::seed_from_u64(0)).unwrap();
    let q = cfg.resolve_widths(&mdp, &p).unwrap();
    assert!(q.beta_p > r.beta_p && q.beta_r > r.beta_r);
    assert!(AgentConfig::new(0, 0.1)
        .resolve_widths(&mdp, &ridge(1, 1.0))
        .is_err());
}
