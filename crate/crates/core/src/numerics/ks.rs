use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsResult {
    pub statistic: f64,
    pub n: usize,
}

/// Exact one-sample two-sided Kolmogorov–Smirnov statistic
/// `sup_x |F_n(x) - G(x)|`.
///
/// The supremum is attained at a jump of the empirical CDF, so it suffices to
/// compare `G(x₍ᵢ₎)` with both `i/n` and `(i-1)/n` over the order statistics.
pub fn ks_statistic<G>(samples: &[f64], cdf: G) -> Result<KsResult>
where
    G: Fn(f64) -> f64,
{
    if samples.is_empty() {
        return Err(Error::invalid("KS statistic of an empty sample"));
    }
    if samples.iter().any(|v| v.is_nan()) {
        return Err(Error::invalid("KS sample contains NaN"));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let mut stat: f64 = 0.0;
    for (i, &x) in sorted.iter().enumerate() {
        let g = cdf(x);
        let above = (i + 1) as f64 / n - g;
        let below = g - i as f64 / n;
        stat = stat.max(above.abs()).max(below.abs());
    }
    Ok(KsResult {
        statistic: stat.clamp(0.0, 1.0),
        n: sorted.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::dist::{normal_cdf, normal_quantile};

    #[test]
    fn single_median_sample() {
        let r = ks_statistic(&[0.0], normal_cdf).unwrap();
        assert!((r.statistic - 0.5).abs() < 1e-15);
        assert_eq!(r.n, 1);
    }

    #[test]
    fn exact_midpoint_quantiles() {
        for n in [1usize, 5, 40, 333] {
            let samples: Vec<f64> = (1..=n)
                .map(|i| normal_quantile((i as f64 - 0.5) / n as f64).unwrap())
                .collect();
            let r = ks_statistic(&samples, normal_cdf).unwrap();
            assert!((r.statistic - 0.5 / n as f64).abs() < 1e-9, "n={n}");
        }
    }

    #[test]
    fn agrees_with_grid_scan() {
        let uniform = |x: f64| x.clamp(0.0, 1.0);
        let samples = [0.13, 0.71, 0.52];
        let exact = ks_statistic(&samples, uniform).unwrap().statistic;

        // Brute force: evaluate |F_n - G| on a dense grid.
        let m = 1_000_000;
        let mut brute: f64 = 0.0;
        for k in 0..=m {
            let x = k as f64 / m as f64;
            let f = samples.iter().filter(|&&s| s <= x).count() as f64 / 3.0;
            brute = brute.max((f - uniform(x)).abs());
        }
        assert!((exact - brute).abs() < 1e-5, "{exact} vs {brute}");
    }

    #[test]
    fn invariant_under_monotone_transform() {
        let samples = [-1.2, 0.4, 0.9, 2.2, -0.3, 0.05];
        let base = ks_statistic(&samples, normal_cdf).unwrap().statistic;
        let mapped: Vec<f64> = samples.iter().map(|x| x.exp()).collect();
        let r = ks_statistic(&mapped, |y: f64| normal_cdf(y.ln())).unwrap();
        assert!((r.statistic - base).abs() < 1e-15);
    }

    #[test]
    fn rejects_empty_and_nan() {
        assert!(ks_statistic(&[], normal_cdf).is_err());
        assert!(ks_statistic(&[f64::NAN], normal_cdf).is_err());
    }
}
