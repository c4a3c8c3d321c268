//! Simulation-based checks: test sizes under the null, coverage of the
//! interval and range bounds, and consistency between the harness outputs.

use linapprox::data::BoundsPair;
use linapprox::estimator::{lemma1_range_bound, GroundTruth};
use linapprox::inference::{coefficient_test_raw, model_test_raw};
use linapprox::numerics::{MatrixD, SimRng, VectorD};
use linapprox::sim::{aggregate, export_results, run_experiment, Method, Metric, RunOptions, ScenarioConfig};
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal, StudentsT};

#[test]
fn rejection_rate_under_the_null_matches_delta() {
    let mut rng = SimRng::new(42);
    let delta = 0.05;
    // Σ = L Lᵀ with a fixed lower-triangular L.
    let l = MatrixD::from_row_slice(3, 3, &[0.5, 0.0, 0.0, 0.2, 0.3, 0.0, -0.1, 0.4, 0.2]);
    let cov = &l * l.transpose();
    let w_t = VectorD::from_vec(vec![1.0, -2.0, 0.5]);
    let reps = 10_000;
    let (mut model, mut coef) = (0, 0);
    for _ in 0..reps {
        let e = VectorD::from_fn(3, |_, _| rng.standard_normal());
        let w = &w_t + &l * e;
        model += usize::from(model_test_raw(&w, &cov, &w_t, delta).unwrap().reject);
        coef += usize::from(coefficient_test_raw(&w, &cov, 1, w_t[1], delta).unwrap().reject);
    }
    let (m, c) = (model as f64 / reps as f64, coef as f64 / reps as f64);
    assert!((m - delta).abs() <= 0.02, "model test size {m}");
    assert!((c - delta).abs() <= 0.02, "coefficient test size {c}");
}

/// With `u ~ U(LB, LB + R)`, the sample range over `R` is `Beta(n−1, 2)`, so
/// the bound covers `R` with probability `1 − δ₀(n − (n−1)δ₀^{1/(n−1)})`.
#[test]
fn range_bound_coverage_matches_its_exact_value() {
    let (n, delta0) = (10usize, 0.1f64);
    let t = delta0.powf(1.0 / (n as f64 - 1.0));
    let exact = 1.0 - delta0 * (n as f64 - (n as f64 - 1.0) * t);
    let mut rng = SimRng::new(7);
    let reps = 100_000;
    let mut covered = 0;
    for _ in 0..reps {
        let range = rng.uniform();
        let lb = rng.uniform_range(-1.0, 1.0);
        let u: Vec<f64> = (0..n).map(|_| lb + range * rng.uniform()).collect();
        let lo = u.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = u.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let bound = lemma1_range_bound(&BoundsPair::assumed(lo, hi).unwrap(), n, delta0).unwrap();
        covered += usize::from(range <= bound);
    }
    let freq = covered as f64 / reps as f64;
    assert!((exact - 0.6968).abs() < 1e-3);
    assert!((freq - exact).abs() < 0.005, "simulated {freq}, exact {exact}");
}

/// `mean ± 1.96·σ_pop/√6` covers the true mean of six normal draws with
/// probability `P(|t₅| ≤ 1.96·√(5/6))`.
#[test]
fn six_repetition_interval_coverage() {
    let t5 = StudentsT::new(0.0, 1.0, 5.0).unwrap();
    let c = 1.96 * (5.0f64 / 6.0).sqrt();
    let exact = t5.cdf(c) - t5.cdf(-c);
    let mut rng = SimRng::new(11);
    let reps = 20_000;
    let mut hits = 0;
    for _ in 0..reps {
        let v: Vec<f64> = (0..6).map(|_| rng.normal(3.0, 0.5)).collect();
        hits += usize::from(aggregate(&v).contains(3.0));
    }
    let freq = hits as f64 / reps as f64;
    assert!((exact - 0.87).abs() < 0.01, "exact {exact}");
    assert!((freq - exact).abs() < 0.01, "simulated {freq}, exact {exact}");
}

fn square(method: Method, repetitions: usize, trials: usize) -> ScenarioConfig {
    ScenarioConfig {
        repetitions,
        trials,
        ..ScenarioConfig::paper(GroundTruth::Square, method)
    }
}

#[test]
fn corrected_statistic_is_chi_squared_at_scale() {
    let run = run_experiment(&square(Method::OursL, 1, 1000), RunOptions::default()).unwrap();
    let ks = run.table.summary(Metric::KsChi2, 0).mean;
    assert!(ks <= 0.08, "KS against chi2(2) over 1000 trials: {ks}");
}

#[test]
fn corrected_estimator_beats_baseline_on_w1_calibration() {
    let ours = run_experiment(&square(Method::OursL, 6, 1000), RunOptions::default()).unwrap();
    let base = run_experiment(&square(Method::BaselineLse, 6, 1000), RunOptions::default()).unwrap();
    let a = ours.table.series(Metric::KsNormal, 1);
    let b = base.table.series(Metric::KsNormal, 1);
    let wins = a.iter().zip(&b).filter(|(x, y)| x < y).count();
    assert!(wins >= 5, "ours-L {a:?} vs baseline {b:?}");
}

#[test]
fn default_configs_rarely_fail() {
    for gt in [GroundTruth::Square, GroundTruth::Linear] {
        for method in [Method::BaselineLse, Method::OursL] {
            let cfg = ScenarioConfig {
                repetitions: 1,
                trials: 1000,
                ..ScenarioConfig::paper(gt, method)
            };
            let run = run_experiment(&cfg, RunOptions::default()).unwrap();
            let rate = run.table.total_failed() as f64 / 1000.0;
            assert!(rate < 0.01, "{gt} {method}: failure rate {rate}");
        }
    }
}

/// Sorted-sample KS distance, written out independently of the library.
fn ks_distance(mut xs: Vec<f64>, cdf: impl Fn(f64) -> f64) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).max((i as f64 + 1.0) / n - f)
        })
        .fold(0.0, f64::max)
}

#[test]
fn metrics_recompute_from_the_trials_file() {
    let cfg = square(Method::OursL, 3, 200);
    let run = run_experiment(&cfg, RunOptions::default()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    export_results(&run, dir.path()).unwrap();

    let mut trials = csv::Reader::from_path(dir.path().join("trials.csv")).unwrap();
    let headers = trials.headers().unwrap().clone();
    let col = |name: &str| headers.iter().position(|h| h == name).unwrap();
    let (rep_c, w0_c, w1_c, s0_c, s1_c, u0_c, u1_c, chi_c, rej_c) = (
        col("repetition"),
        col("w0"),
        col("w1"),
        col("std0"),
        col("std1"),
        col("u0"),
        col("u1"),
        col("chi2"),
        col("reject_w1"),
    );
    let mut per_rep: Vec<Vec<[f64; 8]>> = vec![Vec::new(); 3];
    for row in trials.records() {
        let row = row.unwrap();
        let f = |c: usize| row[c].parse::<f64>().unwrap();
        let rej = if &row[rej_c] == "true" { 1.0 } else { 0.0 };
        let rep: usize = row[rep_c].parse().unwrap();
        per_rep[rep].push([f(w0_c), f(w1_c), f(s0_c), f(s1_c), f(u0_c), f(u1_c), f(chi_c), rej]);
    }

    // metric,coordinate,repetition,value
    let mut reported = std::collections::HashMap::new();
    let mut metrics = csv::Reader::from_path(dir.path().join("metrics.csv")).unwrap();
    for row in metrics.records() {
        let row = row.unwrap();
        if let Ok(rep) = row[2].parse::<usize>() {
            reported.insert((row[0].to_string(), row[1].to_string(), rep), row[3].parse::<f64>().unwrap());
        }
    }

    let chi2 = ChiSquared::new(2.0).unwrap();
    let normal = Normal::new(0.0, 1.0).unwrap();
    let w_star = [-1.0 / 6.0, 1.0];
    for (rep, rows) in per_rep.iter().enumerate() {
        let n = rows.len() as f64;
        let column = |k: usize| rows.iter().map(|r| r[k]).collect::<Vec<_>>();
        let avg = |k: usize| column(k).iter().sum::<f64>() / n;
        let expected = [
            ("ks_chi2", "", ks_distance(column(6), |x| chi2.cdf(x))),
            ("ks_normal", "0", ks_distance(column(4), |x| normal.cdf(x))),
            ("ks_normal", "1", ks_distance(column(5), |x| normal.cdf(x))),
            ("efficiency", "0", avg(2)),
            ("efficiency", "1", avg(3)),
            ("bias", "0", avg(0) - w_star[0]),
            ("bias", "1", avg(1) - w_star[1]),
            ("reject_coef", "1", avg(7)),
        ];
        for (metric, coord, value) in expected {
            let got = reported[&(metric.to_string(), coord.to_string(), rep)];
            assert!((got - value).abs() <= 1e-9, "{metric}[{coord}] rep {rep}: {got} vs {value}");
        }
    }
}
