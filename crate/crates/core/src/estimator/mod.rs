//! The corrected estimator `wᵉ = w¹ + Â z̄` and its covariance
//! `Σ̂ₑ² = Â D̂ Â / N₂`.

mod analytic;
mod bounds;

pub use analytic::{
    exact_linear_approx_analytic, exact_linear_approx_polynomial, exact_linear_approx_rational,
    uniform_a_exact, uniform_a_matrix, uniform_second_moment_exact, GroundTruth,
};
pub use bounds::{
    bias_bound, bias_bound_from_parts, bias_report, lemma1_range_bound, mse_bound, second_moment_concentration_bound,
    BoundInputs, BoundReport, ConcentrationConstants, ConfidenceParams,
};

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, FeatureVector};
use crate::error::{Error, Result};
use crate::models::Predict;
use crate::numerics::linalg::{self, serde_matrix, serde_vector, serde_vectors};
use crate::numerics::{eigen_bounds, invert_spd, second_moment, EigenBounds, MatrixD, VectorD};

/// Which samples produced `Â`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MomentSource {
    ValidationOnly,
    /// Labeled and unlabeled features together (`Â_{N_t}`).
    AllData,
    /// The population inverse for `x ~ U(0,1)` with intercept.
    ExactAnalytic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SecondMomentEstimate {
    #[serde(with = "serde_matrix")]
    pub a_hat: MatrixD,
    pub source: MomentSource,
    pub n_used: usize,
    /// Eigenvalue bounds of `Â` itself, i.e. `m̂` and `M̂`.
    pub eigen: EigenBounds,
}

impl SecondMomentEstimate {
    /// `A = [[4, -6], [-6, 12]]`.
    pub fn exact_uniform() -> Self {
        let a_hat = uniform_a_matrix();
        let eigen = eigen_bounds(&a_hat).expect("exact A is symmetric");
        Self {
            a_hat,
            source: MomentSource::ExactAnalytic,
            n_used: 0,
            eigen,
        }
    }

    pub fn dim(&self) -> usize {
        self.a_hat.nrows()
    }
}

/// `Â = [mean xxᵀ]⁻¹` over `features`.
pub fn estimate_second_moment_inverse<'a, I>(
    features: I,
    source: MomentSource,
) -> Result<SecondMomentEstimate>
where
    I: IntoIterator<Item = &'a FeatureVector>,
{
    let features: Vec<&FeatureVector> = features.into_iter().collect();
    let n = features.len();
    let d = features.first().map_or(0, |f| f.dim());
    if n < d {
        return Err(Error::SingularMatrix(format!(
            "{n} feature vectors cannot determine a {d}x{d} second moment"
        )));
    }
    let moment = second_moment(features.iter().map(|f| f.values()))?;
    let a_hat = invert_spd(&moment)?;
    let eigen = eigen_bounds(&a_hat)?;
    Ok(SecondMomentEstimate {
        a_hat,
        source,
        n_used: n,
        eigen,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ApproxProvenance {
    /// The predictor is linear; `w¹` is its weight vector.
    Passthrough,
    /// `E[x f¹(x)]` averaged over a feature pool of this size.
    FeaturePool { n: usize },
}

/// `g¹(x) = w¹ᵀx`
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearApprox {
    #[serde(with = "serde_vector")]
    pub w1: VectorD,
    pub provenance: ApproxProvenance,
}

/// `w¹ = Â·mean(x f¹(x))` over `features`, or the weights themselves for a
/// linear predictor.
pub fn linear_approx_of_predictor<'a, P, I>(
    predictor: &P,
    features: I,
    a_hat: &SecondMomentEstimate,
) -> Result<LinearApprox>
where
    P: Predict + ?Sized,
    I: IntoIterator<Item = &'a FeatureVector>,
{
    if let Some(lin) = predictor.as_linear() {
        if lin.weights.len() != a_hat.dim() {
            return Err(Error::DimensionMismatch {
                expected: a_hat.dim(),
                found: lin.weights.len(),
            });
        }
        return Ok(LinearApprox {
            w1: lin.weights_vector(),
            provenance: ApproxProvenance::Passthrough,
        });
    }
    let d = a_hat.dim();
    let pool: Vec<&FeatureVector> = features.into_iter().collect();
    if let Some(x) = pool.iter().find(|x| x.dim() != d) {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: x.dim(),
        });
    }
    let fs = predictor.predict_many(&pool)?;
    let mut xf = vec![0.0; d];
    for (x, f) in pool.iter().zip(&fs) {
        for (acc, v) in xf.iter_mut().zip(x.values()) {
            *acc += v * f;
        }
    }
    let n = pool.len();
    if n == 0 {
        return Err(Error::invalid(
            "linear approximation of a nonlinear predictor needs a non-empty feature pool",
        ));
    }
    let mean = VectorD::from_vec(xf) / n as f64;
    Ok(LinearApprox {
        w1: &a_hat.a_hat * mean,
        provenance: ApproxProvenance::FeaturePool { n },
    })
}

/// `z⁽ⁱ⁾ = x⁽ⁱ⁾(y⁽ⁱ⁾ - f¹(x⁽ⁱ⁾))` on the validation side, their mean and
/// `D̂ = Σ (z - z̄)(z - z̄)ᵀ / (N₂ - d)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualStats {
    #[serde(with = "serde_vectors")]
    pub z_samples: Vec<VectorD>,
    #[serde(with = "serde_vector")]
    pub z_bar: VectorD,
    #[serde(with = "serde_matrix")]
    pub d_hat: MatrixD,
    pub n: usize,
}

impl ResidualStats {
    pub fn from_z(z_samples: Vec<VectorD>) -> Result<Self> {
        let n = z_samples.len();
        let d = z_samples.first().map_or(0, |z| z.len());
        if d == 0 || n <= d {
            return Err(Error::invalid(format!(
                "need more than d = {d} validation samples, got {n}"
            )));
        }
        if let Some(bad) = z_samples.iter().find(|z| z.len() != d) {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: bad.len(),
            });
        }
        let mut z_bar = VectorD::zeros(d);
        for z in &z_samples {
            z_bar += z;
        }
        z_bar /= n as f64;
        let mut d_hat = MatrixD::zeros(d, d);
        for z in &z_samples {
            let c = z - &z_bar;
            d_hat += &c * c.transpose();
        }
        d_hat /= (n - d) as f64;
        Ok(Self {
            z_samples,
            z_bar,
            d_hat: linalg::symmetrize(&d_hat),
            n,
        })
    }

    pub fn dim(&self) -> usize {
        self.z_bar.len()
    }

    /// `max ‖z⁽ⁱ⁾‖₂`
    pub fn max_norm(&self) -> f64 {
        self.z_samples.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }
}

pub fn residuals_z<P: Predict + ?Sized>(predictor: &P, validation: &Dataset) -> Result<ResidualStats> {
    let samples = validation.labeled();
    let xs: Vec<&FeatureVector> = samples.iter().map(|s| &s.features).collect();
    let fs = predictor.predict_many(&xs)?;
    let z = samples
        .iter()
        .zip(fs)
        .map(|(s, f)| VectorD::from_column_slice(s.features.values()) * (s.label - f))
        .collect();
    ResidualStats::from_z(z)
}

/// `Σ̂ₑ² = Â D̂ Â / N₂`
pub fn estimator_covariance(rs: &ResidualStats, a_hat: &SecondMomentEstimate) -> Result<MatrixD> {
    check_dims(rs.dim(), a_hat.dim())?;
    let a = &a_hat.a_hat;
    Ok(linalg::symmetrize(&(a * &rs.d_hat * a)) / rs.n as f64)
}

fn check_dims(found: usize, expected: usize) -> Result<()> {
    if found != expected {
        return Err(Error::DimensionMismatch { expected, found });
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrectedEstimate {
    #[serde(with = "serde_vector")]
    pub w_e: VectorD,
    #[serde(with = "serde_matrix")]
    pub sigma_e_sq: MatrixD,
    pub w1: LinearApprox,
    pub residuals: ResidualStats,
    pub a_hat: SecondMomentEstimate,
}

impl CorrectedEstimate {
    pub fn dim(&self) -> usize {
        self.w_e.len()
    }

    /// `sqrt((Σ̂ₑ²)_jj)` per coordinate.
    pub fn std_errors(&self) -> Vec<f64> {
        (0..self.dim()).map(|j| self.sigma_e_sq[(j, j)].max(0.0).sqrt()).collect()
    }
}

pub fn corrected_estimator(
    w1: LinearApprox,
    rs: ResidualStats,
    a_hat: SecondMomentEstimate,
) -> Result<CorrectedEstimate> {
    check_dims(w1.w1.len(), a_hat.dim())?;
    let sigma_e_sq = estimator_covariance(&rs, &a_hat)?;
    let w_e = &w1.w1 + &a_hat.a_hat * &rs.z_bar;
    Ok(CorrectedEstimate {
        w_e,
        sigma_e_sq,
        w1,
        residuals: rs,
        a_hat,
    })
}
