//! Acceptance criteria, one line of output per criterion. Exits non-zero if
//! any criterion fails.

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};
use std::path::Path;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use privlin::compare::{compare, Summary};
use privlin::config::{AgentKind, MdpSource, RegularizerSpec, RunConfig};
use privlin::experiment::{csv_bytes, run_experiment, run_seed};
use privlin::mdp_json::BUILTIN_THREE_STATE;
use privlin_core::agents::{default_eta, run_po, run_vi, run_vi_observed, AgentConfig};
use privlin_core::benchmark::three_state_benchmark;
use privlin_core::calib::{vector_noise_bound, NoiseCalibration, PrivacyBudget};
use privlin_core::estimation::solve_estimator;
use privlin_core::linalg::{sym_op_norm, weighted_norm};
use privlin_core::mdp::exact_optimal_values;
use privlin_core::regularizer::{FixedRidge, Privatizer, Regularizer, StepIncrement};
use privlin_core::tree::{tree_depth, NoisyPSumTree, Shape};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::Deserialize;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn within(limit: Duration, elapsed: Duration) -> bool {
    elapsed < limit
}

/// Normal equations solved by Gaussian elimination with partial pivoting.
fn gauss_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let d = b.len();
    for c in 0..d {
        let p = (c..d)
            .max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs()))
            .unwrap();
        a.swap(c, p);
        b.swap(c, p);
        for r in c + 1..d {
            let f = a[r][c] / a[c][c];
            for k in c..d {
                a[r][k] -= f * a[c][k];
            }
            b[r] -= f * b[c];
        }
    }
    let mut x = vec![0.0; d];
    for i in (0..d).rev() {
        let s: f64 = (i + 1..d).map(|j| a[i][j] * x[j]).sum();
        x[i] = (b[i] - s) / a[i][i];
    }
    x
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha20Rng::seed_from_u64(101);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let d = rng.random_range(1..=5);
        let n = rng.random_range(0..=20);
        let lambda = rng.random_range(0.1..3.0);
        let mut normal = vec![vec![0.0; d]; d];
        let mut rhs = vec![0.0; d];
        let mut gram = DMatrix::from_diagonal_element(d, d, lambda);
        let mut u = DVector::zeros(d);
        for i in 0..d {
            normal[i][i] = lambda;
        }
        for _ in 0..n {
            let x: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
            let y: f64 = rng.random_range(-2.0..2.0);
            for i in 0..d {
                for j in 0..d {
                    normal[i][j] += x[i] * x[j];
                }
                rhs[i] += x[i] * y;
            }
            let v = DVector::from_vec(x);
            gram += &v * v.transpose();
            u += v * y;
        }
        let got = solve_estimator(&gram, &u).unwrap();
        let want = gauss_solve(normal, rhs);
        for (a, b) in got.iter().zip(&want) {
            worst = worst.max((a - b).abs());
        }
    }
    let t = start.elapsed();
    outcome(
        worst <= 1e-9 && within(Duration::from_secs(1), t),
        format!("max |Δθ| = {worst:.2e} over 100 instances in {t:.2?}"),
    )
}

fn criterion_2() -> Outcome {
    let start = Instant::now();
    let k = 4096;
    let m = tree_depth(k);
    let mut rng = ChaCha20Rng::seed_from_u64(202);
    let mut exact = true;
    let mut max_cover = 0;
    for shape in [Shape::Scalar, Shape::Vector(4), Shape::SymMatrix(3)] {
        let mut tree = NoisyPSumTree::exact(shape, k).unwrap();
        let mut running = vec![0.0; shape.len()];
        for i in 1..=k {
            let mut item: Vec<f64> = (0..shape.len())
                .map(|_| rng.random_range(-100i32..=100) as f64)
                .collect();
            if let Shape::SymMatrix(d) = shape {
                for p in 0..d {
                    for q in 0..p {
                        item[p * d + q] = item[q * d + p];
                    }
                }
            }
            tree.append_exact(&item).unwrap();
            for (r, x) in running.iter_mut().zip(&item) {
                *r += x;
            }
            exact &= tree.private_prefix(i + 1).unwrap() == running;
            max_cover = max_cover.max(tree.cover_size(i + 1).unwrap());
        }
        if shape == Shape::Scalar {
            let mut membership = vec![0usize; k + 1];
            for iv in tree.materialized() {
                for e in iv.start..=iv.end {
                    membership[e] += 1;
                }
            }
            let max_member = *membership[1..].iter().max().unwrap();
            if max_member > m {
                return outcome(false, format!("an item sits in {max_member} > {m} nodes"));
            }
        }
    }
    let covers_ok = (1..=k).all(|q| NoisyPSumTree::cover(q).len() <= m);
    let t = start.elapsed();
    outcome(
        exact && max_cover <= m && covers_ok && within(Duration::from_secs(10), t),
        format!("exact={exact}, max cover {max_cover} <= {m}, membership <= {m}, {t:.2?}"),
    )
}

fn noise_hash(tree: &NoisyPSumTree) -> u64 {
    let mut h = DefaultHasher::new();
    for (iv, _, noise) in tree.nodes() {
        iv.hash(&mut h);
        noise.iter().for_each(|z| z.to_bits().hash(&mut h));
    }
    h.finish()
}

fn criterion_3() -> Outcome {
    let mut tree = NoisyPSumTree::new(Shape::SymMatrix(3), 5.0, 128).unwrap();
    let mut rng = ChaCha20Rng::seed_from_u64(303);
    for _ in 0..77 {
        tree.append(&[1.0; 9], &mut rng).unwrap();
    }
    let before = noise_hash(&tree);
    let first = tree.private_prefix(78).unwrap();
    let stable = (0..10_000).all(|_| tree.private_prefix(78).unwrap() == first);
    let hash_ok = noise_hash(&tree) == before;

    let (k, h) = (40, 3);
    let cal =
        NoiseCalibration::for_run(PrivacyBudget::new(1.0, 0.1).unwrap(), 0.1, k, h, 4, 2).unwrap();
    let mut p = Privatizer::new(cal, 4, 2, h, k, ChaCha20Rng::seed_from_u64(304)).unwrap();
    let inc = StepIncrement {
        phi: vec![0.5, 0.1, 0.0, 0.2],
        target: 1.5,
        varphi: vec![0.6, 0.8],
        reward: 1.0,
    };
    let mut releases_ok = true;
    for e in 1..=k {
        p.ingest(e, &vec![inc.clone(); h]).unwrap();
        let a = p.release(e).unwrap();
        releases_ok &= (0..100).all(|_| p.release(e).unwrap() == a);
    }
    outcome(
        stable && hash_ok && releases_ok,
        format!("10^4 prefix queries stable={stable}, noise hash unchanged={hash_ok}, repeated releases identical={releases_ok}"),
    )
}

#[derive(Deserialize)]
struct CalibrationRow {
    epsilon: f64,
    delta: f64,
    #[serde(rename = "K")]
    episodes: usize,
    #[serde(rename = "H")]
    horizon: usize,
    d1: usize,
    d2: usize,
    alpha: f64,
    m: usize,
    sigma_p1: f64,
    sigma_p2: f64,
    sigma_r1: f64,
    sigma_r2: f64,
    #[serde(rename = "Sigma_p1")]
    shift_p1: f64,
    #[serde(rename = "Sigma_r")]
    shift_r: f64,
    lambda_min_p: f64,
    lambda_max_p: f64,
    lambda_min_r: f64,
    lambda_max_r: f64,
    nu_p: f64,
    nu_r: f64,
}

fn criterion_4() -> Outcome {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data/calibration_reference.json");
    let rows: Vec<CalibrationRow> =
        serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
    let mut worst = 0.0f64;
    let mut m_ok = true;
    for r in &rows {
        let budget = PrivacyBudget::new(r.epsilon, r.delta).unwrap();
        let c =
            NoiseCalibration::for_run(budget, r.alpha, r.episodes, r.horizon, r.d1, r.d2).unwrap();
        m_ok &= c.m == r.m;
        for (got, want) in [
            (c.sigma_p1, r.sigma_p1),
            (c.sigma_p2, r.sigma_p2),
            (c.sigma_r1, r.sigma_r1),
            (c.sigma_r2, r.sigma_r2),
            (c.shift_p1, r.shift_p1),
            (c.shift_r, r.shift_r),
            (c.lambda_min_p, r.lambda_min_p),
            (c.lambda_max_p, r.lambda_max_p),
            (c.lambda_min_r, r.lambda_min_r),
            (c.lambda_max_r, r.lambda_max_r),
            (c.nu_p, r.nu_p),
            (c.nu_r, r.nu_r),
        ] {
            worst = worst.max((got - want).abs() / want.abs());
        }
    }
    outcome(
        rows.len() == 50 && m_ok && worst <= 1e-12,
        format!("{} tuples, max relative error {worst:.2e}", rows.len()),
    )
}

fn criterion_5() -> Outcome {
    let start = Instant::now();
    let (k, h, d, alpha) = (256, 3, 2, 0.1);
    let cal = NoiseCalibration::for_run(PrivacyBudget::new(1.0, 0.1).unwrap(), alpha, k, h, d, d)
        .unwrap();
    let vec_bound = vector_noise_bound(cal.sigma_p2, cal.m, d, k, h, alpha);
    let mut rng = ChaCha20Rng::seed_from_u64(505);
    let draws = 1000;
    let (mut mat_ok, mut vec_ok) = (0, 0);
    for _ in 0..draws {
        // a release sums at most m node noises
        let mut n = DMatrix::zeros(d, d);
        let mut z = DVector::zeros(d);
        for _ in 0..cal.m {
            n += DMatrix::from_row_slice(
                d,
                d,
                &Shape::SymMatrix(d).sample_noise(cal.sigma_p1, &mut rng),
            );
            z += DVector::from_vec(Shape::Vector(d).sample_noise(cal.sigma_p2, &mut rng));
        }
        mat_ok += (sym_op_norm(&n) <= cal.shift_p1) as usize;
        vec_ok += (z.norm() <= vec_bound) as usize;
    }
    let t = start.elapsed();
    let (fm, fv) = (mat_ok as f64 / draws as f64, vec_ok as f64 / draws as f64);
    outcome(
        fm >= 0.9 && fv >= 0.9 && within(Duration::from_secs(30), t),
        format!(
            "operator-norm bound held {fm:.3}, vector bound held {fv:.3} of {draws} draws, {t:.2?}"
        ),
    )
}

fn bench_config(
    agent: AgentKind,
    regularizer: RegularizerSpec,
    episodes: usize,
    seeds: Vec<u64>,
) -> RunConfig {
    RunConfig {
        mdp: MdpSource::Reference(BUILTIN_THREE_STATE.into()),
        agent,
        regularizer,
        alpha: 0.1,
        episodes,
        seeds,
        eta_override: None,
        output_dir: None,
    }
}

fn criterion_6() -> Outcome {
    let mdp = three_state_benchmark();
    let k = 200;
    let cfg = AgentConfig::new(k, 0.1);
    let eta = default_eta(2, 5, k);
    let mut identical = true;
    for seed in 1..=5u64 {
        let ridge = || FixedRidge::new(1.0, 18, 6, 5, k).unwrap();
        let zero = || {
            Privatizer::new(
                NoiseCalibration::zero_noise(k),
                18,
                6,
                5,
                k,
                ChaCha20Rng::seed_from_u64(seed + 77),
            )
            .unwrap()
            .with_floor(1.0)
            .unwrap()
        };
        let rng = || ChaCha20Rng::seed_from_u64(seed);
        identical &= run_vi(&mdp, &mut ridge(), &cfg, &mut rng()).unwrap()
            == run_vi(&mdp, &mut zero(), &cfg, &mut rng()).unwrap();
        identical &= run_po(&mdp, &mut ridge(), &cfg, eta, &mut rng()).unwrap()
            == run_po(&mdp, &mut zero(), &cfg, eta, &mut rng()).unwrap();
        for agent in [AgentKind::Vi, AgentKind::Po] {
            let a = bench_config(
                agent,
                RegularizerSpec::FixedRidge { lambda: 1.0 },
                k,
                vec![seed],
            );
            let b = bench_config(
                agent,
                RegularizerSpec::PrivatizerZeroNoise { floor: 1.0 },
                k,
                vec![seed],
            );
            let la = run_seed(&a, &mdp, seed).unwrap();
            let lb = run_seed(&b, &mdp, seed).unwrap();
            identical &= la.rows == lb.rows && csv_bytes(&la) == csv_bytes(&lb);
        }
    }
    outcome(
        identical,
        format!("VI and PO, seeds 1..=5, K = 200: trajectories, regret logs and CSV bytes identical = {identical}"),
    )
}

fn criterion_7() -> Outcome {
    let mdp = three_state_benchmark();
    let opt = exact_optimal_values(&mdp);
    let k = 500;
    let cfg = AgentConfig::new(k, 0.1);
    let runs = 200;
    let mut held = 0;
    for seed in 0..runs {
        let mut ok = true;
        let mut reg = FixedRidge::new(1.0, 18, 6, 5, k).unwrap();
        run_vi_observed(
            &mdp,
            &mut reg,
            &cfg,
            &mut ChaCha20Rng::seed_from_u64(seed),
            |v| {
                for h in 0..5 {
                    for s in 0..3 {
                        ok &= v.estimates.v(h, s) >= opt.v(h, s);
                    }
                }
                Ok(())
            },
        )
        .unwrap();
        held += ok as usize;
    }
    let freq = held as f64 / runs as f64;
    outcome(
        freq >= 0.95,
        format!("optimism held in {held}/{runs} runs ({freq:.3})"),
    )
}

fn criterion_8(scratch: &Path) -> Outcome {
    let start = Instant::now();
    let k = 2000;
    let seeds: Vec<u64> = (1..=5).collect();
    let private = RegularizerSpec::Privatizer {
        epsilon: 2.0,
        delta: 0.1,
    };
    let ridge = RegularizerSpec::FixedRidge { lambda: 1.0 };
    let mut pass = true;
    let mut parts = Vec::new();
    for agent in [AgentKind::Vi, AgentKind::Po] {
        let name = if agent == AgentKind::Vi { "vi" } else { "po" };
        let mut dirs = Vec::new();
        for (tag, reg) in [("ridge", ridge), ("private", private)] {
            let dir = scratch.join(format!("{name}_{tag}"));
            run_experiment(&bench_config(agent, reg, k, seeds.clone()), &dir).unwrap();
            dirs.push(dir);
        }
        let s: Vec<Summary> = compare(&dirs).unwrap();
        for (tag, sm) in ["ridge", "private"].iter().zip(&s) {
            let falling = sm.tail_mean < sm.head_mean;
            pass &= falling;
            parts.push(format!(
                "{name}/{tag}: head {:.4} tail {:.4}{}",
                sm.head_mean,
                sm.tail_mean,
                if falling { "" } else { " (not decreasing)" }
            ));
        }
        let ordered = s[0].final_mean() <= s[1].final_mean();
        pass &= ordered;
        parts.push(format!(
            "{name}: R(K) ridge {:.1} vs private {:.1}{}",
            s[0].final_mean(),
            s[1].final_mean(),
            if ordered {
                ""
            } else {
                " (ridge exceeds private)"
            }
        ));
    }
    let t = start.elapsed();
    pass &= within(Duration::from_secs(15 * 60), t);
    parts.push(format!("{t:.1?}"));
    outcome(pass, parts.join("; "))
}

fn criterion_9() -> Outcome {
    let start = Instant::now();
    let mdp = three_state_benchmark();
    let k = 500;
    let cfg = AgentConfig::new(k, 0.1);
    let runs = 200;
    let mut held = 0;
    let theta_p: Vec<DVector<f64>> = (0..5)
        .map(|h| DVector::from_column_slice(mdp.theta_p(h)))
        .collect();
    let theta_r: Vec<DVector<f64>> = (0..5)
        .map(|h| DVector::from_column_slice(mdp.theta_r(h)))
        .collect();
    for seed in 0..runs {
        let mut ok = true;
        let mut reg = FixedRidge::new(1.0, 18, 6, 5, k).unwrap();
        run_vi_observed(
            &mdp,
            &mut reg,
            &cfg,
            &mut ChaCha20Rng::seed_from_u64(10_000 + seed),
            |v| {
                for h in 0..5 {
                    let st = &v.stats.steps[h];
                    ok &= weighted_norm(&(v.estimates.theta_p(h) - &theta_p[h]), &st.lambda_p)
                        <= v.widths.beta_p;
                    ok &= weighted_norm(&(v.estimates.theta_r(h) - &theta_r[h]), &st.lambda_r)
                        <= v.widths.beta_r;
                }
                Ok(())
            },
        )
        .unwrap();
        held += ok as usize;
    }
    let t = start.elapsed();
    let freq = held as f64 / runs as f64;
    outcome(
        freq >= 0.95 && within(Duration::from_secs(300), t),
        format!("confidence sets covered the true parameters in {held}/{runs} runs ({freq:.3}), {t:.1?}"),
    )
}

fn main() {
    if std::env::args().any(|a| a == "--list") {
        return;
    }
    let scratch = tempfile::tempdir().unwrap();
    type Check<'a> = Box<dyn Fn() -> Outcome + 'a>;
    let criteria: Vec<(&str, Check)> = vec![
        ("1 estimator oracle equivalence", Box::new(criterion_1)),
        ("2 tree exactness and bounds", Box::new(criterion_2)),
        ("3 write-once node noise", Box::new(criterion_3)),
        ("4 calibration conformance", Box::new(criterion_4)),
        ("5 concentration realization", Box::new(criterion_5)),
        ("6 zero-noise degeneration", Box::new(criterion_6)),
        ("7 empirical optimism", Box::new(criterion_7)),
        (
            "8 regret trend and privacy cost",
            Box::new(|| criterion_8(scratch.path())),
        ),
        ("9 confidence coverage", Box::new(criterion_9)),
    ];
    let mut failed = 0;
    for (name, check) in &criteria {
        let o = check();
        failed += (!o.pass) as usize;
        println!(
            "criterion {name}: {} | {}",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail
        );
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        criteria.len() - failed
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
