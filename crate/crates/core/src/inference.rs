//! Significance tests on an asymptotically normal estimate `w ~ N(w*, Σ)`:
//! the joint χ² model test and the per-coordinate normal test, plus the
//! classical least-squares baseline that uses the homoskedastic covariance.

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::estimator::CorrectedEstimate;
use crate::models::{train_linear, TrainConfig};
use crate::numerics::linalg::{serde_matrix, serde_vector};
use crate::numerics::{
    chi2_quantile, chi2_sf, invert_spd, normal_quantile, normal_sf, second_moment, MatrixD,
    VectorD,
};

/// Standard errors at or below this fraction of `max(1, |w_j|)` are treated
/// as zero.
const DEGENERATE_STD: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "scope", content = "coordinate", rename_all = "kebab-case")]
pub enum Scope {
    Model,
    Coefficient(usize),
}

/// `H₀: w* = w_t`, either jointly or for one coordinate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hypothesis {
    #[serde(with = "serde_vector")]
    pub w_t: VectorD,
    pub scope: Scope,
}

impl Hypothesis {
    /// All coefficients zero.
    pub fn zero(d: usize, scope: Scope) -> Self {
        Self {
            w_t: VectorD::zeros(d),
            scope,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TestKind {
    /// `(w - w_t)ᵀ Σ⁻¹ (w - w_t)` against `χ²_d`.
    Model,
    /// `|w_j - w_tj| / sqrt(Σ_jj)` against the two-sided normal.
    Coefficient,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub kind: TestKind,
    /// Tested coordinate for coefficient tests.
    pub coordinate: Option<usize>,
    pub statistic: f64,
    pub threshold: f64,
    pub p_value: f64,
    /// `statistic > threshold`
    pub reject: bool,
    pub delta: f64,
}

fn check_delta(delta: f64) -> Result<()> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::invalid(format!("delta must lie in (0,1), got {delta}")));
    }
    Ok(())
}

fn check_dims(w: &VectorD, cov: &MatrixD, w_t: Option<&VectorD>) -> Result<()> {
    let d = w.len();
    if cov.nrows() != d || cov.ncols() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: cov.nrows(),
        });
    }
    if let Some(w_t) = w_t {
        if w_t.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: w_t.len(),
            });
        }
    }
    Ok(())
}

fn coordinate_std(w: &VectorD, cov: &MatrixD, j: usize) -> Result<f64> {
    let var = cov[(j, j)];
    let std = var.max(0.0).sqrt();
    if !(std > DEGENERATE_STD * w[j].abs().max(1.0)) {
        return Err(Error::DegenerateCovariance(format!(
            "variance of coordinate {j} is {var:e}"
        )));
    }
    Ok(std)
}

/// Model test on an estimate and its covariance.
pub fn model_test_raw(w: &VectorD, cov: &MatrixD, w_t: &VectorD, delta: f64) -> Result<TestResult> {
    check_delta(delta)?;
    check_dims(w, cov, Some(w_t))?;
    for j in 0..w.len() {
        coordinate_std(w, cov, j)?;
    }
    let precision = invert_spd(cov).map_err(|e| Error::DegenerateCovariance(e.to_string()))?;
    let diff = w - w_t;
    let statistic = diff.dot(&(&precision * &diff)).max(0.0);
    let d = w.len() as u32;
    let threshold = chi2_quantile(1.0 - delta, d)?;
    Ok(TestResult {
        kind: TestKind::Model,
        coordinate: None,
        statistic,
        threshold,
        p_value: chi2_sf(statistic, d)?,
        reject: statistic > threshold,
        delta,
    })
}

/// Coefficient test on coordinate `j` of an estimate and its covariance.
pub fn coefficient_test_raw(
    w: &VectorD,
    cov: &MatrixD,
    j: usize,
    w_tj: f64,
    delta: f64,
) -> Result<TestResult> {
    check_delta(delta)?;
    check_dims(w, cov, None)?;
    if j >= w.len() {
        return Err(Error::invalid(format!("coordinate {j} out of range for d = {}", w.len())));
    }
    let statistic = (w[j] - w_tj).abs() / coordinate_std(w, cov, j)?;
    Ok(coefficient_result(statistic, j, delta)?)
}

fn coefficient_result(statistic: f64, j: usize, delta: f64) -> Result<TestResult> {
    let threshold = normal_quantile(1.0 - delta / 2.0)?;
    Ok(TestResult {
        kind: TestKind::Coefficient,
        coordinate: Some(j),
        statistic,
        threshold,
        p_value: (2.0 * normal_sf(statistic)).min(1.0),
        reject: statistic > threshold,
        delta,
    })
}

pub fn model_test(est: &CorrectedEstimate, h: &Hypothesis, delta: f64) -> Result<TestResult> {
    model_test_raw(&est.w_e, &est.sigma_e_sq, &h.w_t, delta)
}

pub fn coefficient_test(est: &CorrectedEstimate, j: usize, w_tj: f64, delta: f64) -> Result<TestResult> {
    coefficient_test_raw(&est.w_e, &est.sigma_e_sq, j, w_tj, delta)
}

/// Run whichever test `h.scope` names.
pub fn test_hypothesis(w: &VectorD, cov: &MatrixD, h: &Hypothesis, delta: f64) -> Result<TestResult> {
    match h.scope {
        Scope::Model => model_test_raw(w, cov, &h.w_t, delta),
        Scope::Coefficient(j) => {
            check_dims(w, cov, Some(&h.w_t))?;
            if j >= w.len() {
                return Err(Error::invalid(format!("coordinate {j} out of range")));
            }
            coefficient_test_raw(w, cov, j, h.w_t[j], delta)
        }
    }
}

/// The model test followed by every coefficient test, all against `w_t`.
pub fn test_all(w: &VectorD, cov: &MatrixD, w_t: &VectorD, delta: f64) -> Result<Vec<TestResult>> {
    let mut out = vec![model_test_raw(w, cov, w_t, delta)?];
    for j in 0..w.len() {
        out.push(coefficient_test_raw(w, cov, j, w_t[j], delta)?);
    }
    Ok(out)
}

/// Least-squares fit on all labeled samples with the classical covariance
/// `σ̂²(Σxxᵀ)⁻¹`, `σ̂² = RSS/(N - d)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LseFit {
    #[serde(with = "serde_vector")]
    pub w: VectorD,
    #[serde(with = "serde_matrix")]
    pub cov: MatrixD,
    pub sigma_sq: f64,
    pub n: usize,
}

impl LseFit {
    pub fn std_errors(&self) -> Vec<f64> {
        (0..self.w.len()).map(|j| self.cov[(j, j)].max(0.0).sqrt()).collect()
    }
}

/// Fit by the normal equations, or by gradient descent when `cfg` is given
/// without `closed_form`.
pub fn baseline_lse_fit(data: &Dataset, cfg: Option<&TrainConfig>) -> Result<LseFit> {
    let n = data.n();
    let d = data.dim();
    if n <= d {
        return Err(Error::invalid(format!("least squares needs N > d, got N = {n}, d = {d}")));
    }
    let closed = TrainConfig {
        closed_form: true,
        ..Default::default()
    };
    let predictor = train_linear(data, cfg.unwrap_or(&closed))?;
    let w = predictor.weights_vector();
    let rss: f64 = data
        .labeled()
        .iter()
        .map(|s| {
            let r = s.label - w.as_slice().iter().zip(s.features.values()).map(|(a, b)| a * b).sum::<f64>();
            r * r
        })
        .sum();
    let sigma_sq = rss / (n - d) as f64;
    let inv_moment = invert_spd(&second_moment(data.labeled_features().map(|f| f.values()))?)?;
    Ok(LseFit {
        w,
        cov: inv_moment * (sigma_sq / n as f64),
        sigma_sq,
        n,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineInference {
    pub fit: LseFit,
    pub model: TestResult,
    pub coefficients: Vec<TestResult>,
}

/// Classical least-squares inference: fit on all of `data`, then the model
/// test and every coefficient test against `h.w_t`.
pub fn baseline_lse_inference(data: &Dataset, delta: f64, h: &Hypothesis) -> Result<BaselineInference> {
    baseline_lse_inference_with(data, delta, h, None)
}

pub fn baseline_lse_inference_with(
    data: &Dataset,
    delta: f64,
    h: &Hypothesis,
    cfg: Option<&TrainConfig>,
) -> Result<BaselineInference> {
    let fit = baseline_lse_fit(data, cfg)?;
    let mut tests = test_all(&fit.w, &fit.cov, &h.w_t, delta)?;
    let model = tests.remove(0);
    Ok(BaselineInference {
        fit,
        model,
        coefficients: tests,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{featurize, Sample};
    use crate::numerics::SimRng;

    fn v(x: &[f64]) -> VectorD {
        VectorD::from_column_slice(x)
    }

    fn identity2() -> MatrixD {
        MatrixD::identity(2, 2)
    }

    #[test]
    fn model_test_at_null() {
        let r = model_test_raw(&v(&[0.3, 0.4]), &identity2(), &v(&[0.3, 0.4]), 0.05).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert_eq!(r.p_value, 1.0);
        assert!(!r.reject);
    }

    #[test]
    fn model_test_two_dof_examples() {
        // Identity covariance: statistic = ‖w‖².
        let r = model_test_raw(&v(&[5f64.sqrt(), 0.0]), &identity2(), &v(&[0.0, 0.0]), 0.05).unwrap();
        assert!((r.statistic - 5.0).abs() < 1e-12);
        assert!((r.threshold - 5.991465).abs() < 1e-4);
        assert!(!r.reject);
        assert!((r.p_value - (-2.5f64).exp()).abs() < 1e-10);

        let r = model_test_raw(&v(&[7f64.sqrt(), 0.0]), &identity2(), &v(&[0.0, 0.0]), 0.05).unwrap();
        assert!(r.reject);
        assert!((r.p_value - (-3.5f64).exp()).abs() < 1e-10);
        assert!((r.p_value - 0.0302).abs() < 1e-4);
    }

    #[test]
    fn coefficient_examples() {
        let r = coefficient_test_raw(&v(&[1.0, 2.0]), &identity2(), 1, 2.0, 0.05).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert_eq!(r.p_value, 1.0);

        let r = coefficient_test_raw(&v(&[0.0, 3.0]), &identity2(), 1, 0.0, 0.05).unwrap();
        assert!(r.reject);
        assert!((r.p_value - 0.0027).abs() < 1e-4);
    }

    #[test]
    fn coefficient_boundary_is_not_rejected() {
        let q = normal_quantile(0.975).unwrap();
        assert!((q - 1.959964).abs() < 1e-5);
        let r = coefficient_test_raw(&v(&[q]), &MatrixD::identity(1, 1), 0, 0.0, 0.05).unwrap();
        assert!(!r.reject);
        assert!((r.p_value - 0.05).abs() < 1e-6);
    }

    #[test]
    fn zero_covariance_is_degenerate() {
        let zero = MatrixD::zeros(2, 2);
        assert!(matches!(
            model_test_raw(&v(&[1.0, 2.0]), &zero, &v(&[0.0, 0.0]), 0.05),
            Err(Error::DegenerateCovariance(_))
        ));
        assert!(matches!(
            coefficient_test_raw(&v(&[1.0, 2.0]), &zero, 0, 0.0, 0.05),
            Err(Error::DegenerateCovariance(_))
        ));
        let rank_one = MatrixD::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        assert!(matches!(
            model_test_raw(&v(&[1.0, 2.0]), &rank_one, &v(&[0.0, 0.0]), 0.05),
            Err(Error::DegenerateCovariance(_))
        ));
    }

    #[test]
    fn bad_delta() {
        assert!(model_test_raw(&v(&[1.0]), &MatrixD::identity(1, 1), &v(&[0.0]), 0.0).is_err());
        assert!(coefficient_test_raw(&v(&[1.0]), &MatrixD::identity(1, 1), 0, 0.0, 1.0).is_err());
    }

    #[test]
    fn test_result_json() {
        let r = coefficient_test_raw(&v(&[0.0, 3.0]), &identity2(), 1, 0.0, 0.05).unwrap();
        let json = serde_json::to_value(&r).unwrap();
        assert_eq!(json["kind"], "coefficient");
        assert_eq!(json["reject"], true);
        assert_eq!(json["delta"], 0.05);
    }

    fn line_data(n: usize, sigma: f64, seed: u64) -> Dataset {
        let mut rng = SimRng::new(seed);
        Dataset::labeled_only(
            (0..n)
                .map(|_| {
                    let x = rng.uniform();
                    let y = x + sigma * rng.standard_normal();
                    Sample::new(featurize(&[x], true).unwrap(), y).unwrap()
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn noiseless_baseline_is_degenerate() {
        let h = Hypothesis::zero(2, Scope::Model);
        assert!(matches!(
            baseline_lse_inference(&line_data(50, 0.0, 1), 0.05, &h),
            Err(Error::DegenerateCovariance(_))
        ));
    }

    #[test]
    fn baseline_std_matches_classical_formula() {
        // σ·sqrt(12/N) for the slope of U(0,1) inputs.
        let mut stds = Vec::new();
        for seed in 0..50 {
            let fit = baseline_lse_fit(&line_data(100, 0.01, seed), None).unwrap();
            stds.push(fit.std_errors()[1]);
        }
        let mean = stds.iter().sum::<f64>() / stds.len() as f64;
        assert!((mean - 0.0035).abs() < 0.4 * 0.0035, "mean std {mean}");
    }

    #[test]
    fn baseline_needs_more_than_d_samples() {
        let h = Hypothesis::zero(2, Scope::Model);
        assert!(baseline_lse_inference(&line_data(2, 0.1, 3), 0.05, &h).is_err());
    }

    #[test]
    fn baseline_gradient_descent_agrees_with_closed_form() {
        let data = line_data(100, 0.05, 9);
        let closed = baseline_lse_fit(&data, None).unwrap();
        let cfg = TrainConfig {
            learning_rate: 0.5,
            epochs: 20_000,
            ..Default::default()
        };
        let gd = baseline_lse_fit(&data, Some(&cfg)).unwrap();
        assert!((closed.w - gd.w).amax() < 1e-6);
    }
}
