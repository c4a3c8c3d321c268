//! Finite-sample bound calculators. These only produce reports; nothing in
//! the estimator or the tests depends on them.

use serde::{Deserialize, Serialize};

use crate::data::{empirical_bounds, BoundsPair, FeatureVector};
use crate::error::{Error, Result};
use crate::estimator::{ResidualStats, SecondMomentEstimate};
use crate::models::LossSummary;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceParams {
    pub delta: f64,
    pub delta0: f64,
}

impl ConfidenceParams {
    pub fn new(delta: f64, delta0: f64) -> Result<Self> {
        let cp = Self { delta, delta0 };
        cp.validate()?;
        Ok(cp)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("delta", self.delta), ("delta0", self.delta0)] {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::invalid(format!("{name} must lie in (0,1), got {v}")));
            }
        }
        Ok(())
    }
}

/// `K`, `C`, the assumed range `R`, and eigenvalue bounds `m ≤ M`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConcentrationConstants {
    #[serde(rename = "K")]
    pub k: f64,
    /// Absolute constant of the second-moment concentration; unknown, 1 by
    /// default.
    #[serde(rename = "C")]
    pub c: f64,
    pub range: BoundsPair,
    pub m: f64,
    #[serde(rename = "M")]
    pub big_m: f64,
}

impl ConcentrationConstants {
    /// `K̂ = max‖x‖ / sqrt(mean ‖x‖²)` over `features`, `m̂, M̂` from the
    /// eigenvalues of `Â`, and `C = 1`.
    pub fn estimate<'a, I>(features: I, a_hat: &SecondMomentEstimate, range: BoundsPair) -> Result<Self>
    where
        I: IntoIterator<Item = &'a FeatureVector>,
    {
        let (mut max_sq, mut sum_sq, mut n) = (0f64, 0f64, 0usize);
        for x in features {
            let sq: f64 = x.values().iter().map(|v| v * v).sum();
            max_sq = max_sq.max(sq);
            sum_sq += sq;
            n += 1;
        }
        if n == 0 || sum_sq == 0.0 {
            return Err(Error::invalid("cannot estimate K from an empty or all-zero pool"));
        }
        let cc = Self {
            k: (max_sq / (sum_sq / n as f64)).sqrt().max(1.0),
            c: 1.0,
            range,
            m: a_hat.eigen.smallest,
            big_m: a_hat.eigen.largest,
        };
        cc.validate()?;
        Ok(cc)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.k >= 1.0 && self.k.is_finite()) {
            return Err(Error::invalid(format!("K must be at least 1, got {}", self.k)));
        }
        if !(self.c >= 0.0 && self.c.is_finite()) {
            return Err(Error::invalid(format!("C must be non-negative, got {}", self.c)));
        }
        if !(self.m > 0.0 && self.m <= self.big_m && self.big_m.is_finite()) {
            return Err(Error::invalid(format!(
                "need 0 < m <= M, got m = {}, M = {}",
                self.m, self.big_m
            )));
        }
        Ok(())
    }
}

/// Inputs echoed into every report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundInputs {
    pub n2: usize,
    pub n_t: Option<usize>,
    pub d: usize,
    pub delta: f64,
    pub delta0: Option<f64>,
    pub constants: ConcentrationConstants,
    /// The range actually plugged in (assumed, or Lemma-1 inflated).
    pub range_used: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub epsilon: Option<f64>,
    pub g_gap_bound: Option<f64>,
    pub w_gap_bound: Option<f64>,
    pub coordinate_bounds: Vec<f64>,
    /// Probability with which the bounds hold.
    pub confidence: f64,
    pub inputs: BoundInputs,
    /// Set when the report depends on the unknown constant `C`.
    pub depends_on_c: bool,
}

/// `(UB - LB)·δ₀^(-1/(n-1))`
pub fn lemma1_range_bound(empirical: &BoundsPair, n: usize, delta0: f64) -> Result<f64> {
    if n < 2 {
        return Err(Error::invalid(format!("range bound needs n >= 2, got {n}")));
    }
    if !(delta0 > 0.0 && delta0 < 1.0) {
        return Err(Error::invalid(format!("delta0 must lie in (0,1), got {delta0}")));
    }
    Ok(empirical.range() * delta0.powf(-1.0 / (n - 1) as f64))
}

/// `ε = sqrt(mean l + R·sqrt(ln(1/δ)/(2N₂)))` with the gap bounds
/// `√d·(M/m)·ε` on `g` and `√d·(M/√m)·ε` on `w`. With
/// `use_empirical_range`, `R` is the Lemma-1 inflation of the observed loss
/// range and the confidence drops to `1 - δ - δ₀`.
pub fn mse_bound(
    losses: &LossSummary,
    cc: &ConcentrationConstants,
    cp: &ConfidenceParams,
    d: usize,
    use_empirical_range: bool,
) -> Result<BoundReport> {
    cp.validate()?;
    cc.validate()?;
    let n2 = losses.losses.len();
    if n2 == 0 {
        return Err(Error::invalid("loss summary is empty"));
    }
    let (range, confidence) = if use_empirical_range {
        let emp = empirical_bounds(&losses.losses)?;
        (lemma1_range_bound(&emp, n2, cp.delta0)?, 1.0 - cp.delta - cp.delta0)
    } else {
        (cc.range.range(), 1.0 - cp.delta)
    };
    let epsilon = (losses.mean + range * ((1.0 / cp.delta).ln() / (2.0 * n2 as f64)).sqrt()).sqrt();
    let root_d = (d as f64).sqrt();
    Ok(BoundReport {
        epsilon: Some(epsilon),
        g_gap_bound: Some(root_d * cc.big_m / cc.m * epsilon),
        w_gap_bound: Some(root_d * cc.big_m / cc.m.sqrt() * epsilon),
        coordinate_bounds: Vec::new(),
        confidence,
        inputs: BoundInputs {
            n2,
            n_t: None,
            d,
            delta: cp.delta,
            delta0: use_empirical_range.then_some(cp.delta0),
            constants: *cc,
            range_used: Some(range),
        },
        depends_on_c: false,
    })
}

/// `C·(M²/m)·(sqrt(K²d·ln(4d/δ)/n) + K²d·ln(4d/δ)/n)`.
///
/// `δ` may be any value in `(0, 4d)`, where the logarithm stays positive.
pub fn second_moment_concentration_bound(
    n: usize,
    d: usize,
    cc: &ConcentrationConstants,
    delta: f64,
) -> Result<f64> {
    if n == 0 || d == 0 {
        return Err(Error::invalid("n and d must be positive"));
    }
    let four_d = 4.0 * d as f64;
    if !(delta > 0.0 && delta < four_d) {
        return Err(Error::invalid(format!("delta must lie in (0, 4d), got {delta}")));
    }
    cc.validate()?;
    let t = cc.k * cc.k * d as f64 * (four_d / delta).ln() / n as f64;
    Ok(cc.c * cc.big_m * cc.big_m / cc.m * (t.sqrt() + t))
}

/// Bound on `|w*_j - w¹_j - (Â z̄)_j|`, using `N_t = a_hat.n_used`.
///
/// Without `use_empirical_range` the range of `Aʲz` is the assumed
/// `cc.range`. With it, the observed range of `Âʲz⁽ⁱ⁾` is widened by `2b`
/// and inflated by `δ₀^(-1/(N₂-1))`, and the concentration term becomes
/// `b = C·(M²/m)·max‖z⁽ⁱ⁾‖·(…)`.
pub fn bias_bound(
    rs: &ResidualStats,
    a_hat: &SecondMomentEstimate,
    cc: &ConcentrationConstants,
    cp: &ConfidenceParams,
    j: usize,
    use_empirical_range: bool,
) -> Result<f64> {
    cp.validate()?;
    let d = rs.dim();
    if j >= d {
        return Err(Error::invalid(format!("coordinate {j} out of range for d = {d}")));
    }
    if a_hat.dim() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: a_hat.dim(),
        });
    }
    let n_t = a_hat.n_used;
    if !use_empirical_range {
        return bias_bound_from_parts(cc.range.range(), rs.n, n_t, rs.z_bar.norm(), d, cc, cp.delta);
    }
    let hoeffding = hoeffding_term(rs.n, cp.delta);
    let factor = second_moment_concentration_bound(n_t, d, cc, cp.delta)?;
    if rs.n < 2 {
        return Err(Error::invalid("empirical range needs at least 2 validation samples"));
    }
    let row = a_hat.a_hat.row(j);
    let projected: Vec<f64> = rs.z_samples.iter().map(|z| row.dot(&z.transpose())).collect();
    let emp = empirical_bounds(&projected)?;
    let b = factor * rs.max_norm();
    let inflation = cp.delta0.powf(-1.0 / (rs.n - 1) as f64);
    Ok((emp.range() + 2.0 * b) * inflation * hoeffding + b)
}

fn hoeffding_term(n2: usize, delta: f64) -> f64 {
    ((4.0 / delta).ln() / (2.0 * n2 as f64)).sqrt()
}

/// The assumed-range bound from its scalar ingredients:
/// `range·sqrt(ln(4/δ)/(2N₂)) + C·(M²/m)·‖z̄‖·(…N_t…)`.
pub fn bias_bound_from_parts(
    range: f64,
    n2: usize,
    n_t: usize,
    z_bar_norm: f64,
    d: usize,
    cc: &ConcentrationConstants,
    delta: f64,
) -> Result<f64> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::invalid(format!("delta must lie in (0,1), got {delta}")));
    }
    if n2 == 0 || !(range >= 0.0) || !(z_bar_norm >= 0.0) {
        return Err(Error::invalid("need N₂ >= 1, range >= 0 and ‖z̄‖ >= 0"));
    }
    let factor = second_moment_concentration_bound(n_t, d, cc, delta)?;
    Ok(range * hoeffding_term(n2, delta) + factor * z_bar_norm)
}

/// [`bias_bound`] for every coordinate.
pub fn bias_report(
    rs: &ResidualStats,
    a_hat: &SecondMomentEstimate,
    cc: &ConcentrationConstants,
    cp: &ConfidenceParams,
    use_empirical_range: bool,
) -> Result<BoundReport> {
    let coordinate_bounds = (0..rs.dim())
        .map(|j| bias_bound(rs, a_hat, cc, cp, j, use_empirical_range))
        .collect::<Result<Vec<_>>>()?;
    let confidence = if use_empirical_range {
        1.0 - 3.0 * cp.delta - cp.delta0
    } else {
        1.0 - cp.delta
    };
    Ok(BoundReport {
        epsilon: None,
        g_gap_bound: None,
        w_gap_bound: None,
        coordinate_bounds,
        confidence,
        inputs: BoundInputs {
            n2: rs.n,
            n_t: Some(a_hat.n_used),
            d: rs.dim(),
            delta: cp.delta,
            delta0: use_empirical_range.then_some(cp.delta0),
            constants: *cc,
            range_used: (!use_empirical_range).then(|| cc.range.range()),
        },
        depends_on_c: true,
    })
}
