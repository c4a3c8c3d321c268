//! Exact `w* = A·E[x f*(x)]` for polynomial ground truths on `x ~ U(0,1)`
//! with intercept features `(1, x)`, in rational arithmetic.

use std::fmt;
use std::str::FromStr;

use num_rational::Rational64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{MatrixD, VectorD};

/// Built-in ground truths. Inputs are always `U(0,1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GroundTruth {
    /// `f*(x) = x²`, noiseless.
    Square,
    /// `f*(x) = x`, plus optional Gaussian label noise.
    Linear,
}

impl GroundTruth {
    pub fn eval(self, x: f64) -> f64 {
        match self {
            GroundTruth::Square => x * x,
            GroundTruth::Linear => x,
        }
    }

    /// Coefficients `c₀, c₁, …` of `f*(x) = Σ c_k x^k`.
    pub fn polynomial(self) -> Vec<Rational64> {
        match self {
            GroundTruth::Square => vec![0.into(), 0.into(), 1.into()],
            GroundTruth::Linear => vec![0.into(), 1.into()],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            GroundTruth::Square => "square",
            GroundTruth::Linear => "linear",
        }
    }
}

impl fmt::Display for GroundTruth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for GroundTruth {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "square" => Ok(GroundTruth::Square),
            "linear" => Ok(GroundTruth::Linear),
            other => Err(Error::UnsupportedScenario(format!(
                "unknown ground truth {other:?}; expected square or linear"
            ))),
        }
    }
}

fn r(n: i64, d: i64) -> Rational64 {
    Rational64::new(n, d)
}

/// `E[(1,x)(1,x)ᵀ]` for `x ~ U(0,1)`.
pub fn uniform_second_moment_exact() -> [[Rational64; 2]; 2] {
    [[r(1, 1), r(1, 2)], [r(1, 2), r(1, 3)]]
}

/// `A = [E(xxᵀ)]⁻¹ = [[4, -6], [-6, 12]]`.
pub fn uniform_a_exact() -> [[Rational64; 2]; 2] {
    let [[a, b], [c, d]] = uniform_second_moment_exact();
    let det = a * d - b * c;
    [[d / det, -b / det], [-c / det, a / det]]
}

pub fn uniform_a_matrix() -> MatrixD {
    let a = uniform_a_exact();
    MatrixD::from_fn(2, 2, |i, j| to_f64(a[i][j]))
}

fn to_f64(q: Rational64) -> f64 {
    // Correctly rounded whenever numerator and denominator are exact in f64.
    *q.numer() as f64 / *q.denom() as f64
}

/// Exact `(w₀, w₁)` for `f*(x) = Σ c_k x^k`, using `E[x^k] = 1/(k+1)`.
pub fn exact_linear_approx_polynomial(coeffs: &[Rational64]) -> [Rational64; 2] {
    let mut ef = r(0, 1);
    let mut exf = r(0, 1);
    for (k, &c) in coeffs.iter().enumerate() {
        let k = k as i64;
        ef += c * r(1, k + 1);
        exf += c * r(1, k + 2);
    }
    let a = uniform_a_exact();
    [
        a[0][0] * ef + a[0][1] * exf,
        a[1][0] * ef + a[1][1] * exf,
    ]
}

pub fn exact_linear_approx_rational(truth: GroundTruth) -> [Rational64; 2] {
    exact_linear_approx_polynomial(&truth.polynomial())
}

/// `w*` of a built-in scenario as a vector.
pub fn exact_linear_approx_analytic(truth: GroundTruth) -> VectorD {
    let w = exact_linear_approx_rational(truth);
    VectorD::from_vec(vec![to_f64(w[0]), to_f64(w[1])])
}
