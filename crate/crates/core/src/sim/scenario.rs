use crate::data::{featurize, Dataset, Sample};
use crate::error::Result;
use crate::numerics::SimRng;
use crate::sim::ScenarioConfig;

/// `N` labeled samples `x ~ U(0,1)`, `y = f*(x) + σε`, then `N_u`
/// unlabeled inputs from the same law, all featurized with an intercept.
pub fn generate_scenario_data(cfg: &ScenarioConfig, seed: u64) -> Result<Dataset> {
    generate_scenario_data_with(cfg, &mut SimRng::new(seed), true)
}

/// Draw from `rng`. Labeled samples are drawn first, so leaving out the
/// unlabeled pool does not change them.
pub fn generate_scenario_data_with(
    cfg: &ScenarioConfig,
    rng: &mut SimRng,
    include_unlabeled: bool,
) -> Result<Dataset> {
    let sigma = cfg.noise();
    let truth = cfg.ground_truth;
    let mut labeled = Vec::with_capacity(cfg.n_labeled);
    for _ in 0..cfg.n_labeled {
        let x = rng.uniform();
        let mut y = truth.eval(x);
        if sigma > 0.0 {
            y += sigma * rng.standard_normal();
        }
        labeled.push(Sample::new(featurize(&[x], true)?, y)?);
    }
    let n_u = if include_unlabeled { cfg.n_unlabeled } else { 0 };
    let unlabeled = (0..n_u)
        .map(|_| featurize(&[rng.uniform()], true))
        .collect::<Result<Vec<_>>>()?;
    Dataset::new(labeled, unlabeled)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimator::GroundTruth;
    use crate::sim::Method;

    fn small(truth: GroundTruth, sigma: Option<f64>, n: usize) -> ScenarioConfig {
        ScenarioConfig {
            noise_sigma: sigma,
            n_labeled: n,
            n_unlabeled: 7,
            ..ScenarioConfig::paper(truth, Method::OursL)
        }
    }

    #[test]
    fn square_is_noiseless() {
        let ds = generate_scenario_data(&small(GroundTruth::Square, None, 200), 1).unwrap();
        assert_eq!((ds.n(), ds.n_unlabeled()), (200, 7));
        for s in ds.labeled() {
            let x = s.features.raw()[0];
            assert_eq!(s.label, x * x);
            assert!((0.0..1.0).contains(&x));
        }
    }

    #[test]
    fn noiseless_linear() {
        let ds = generate_scenario_data(&small(GroundTruth::Linear, Some(0.0), 50), 2).unwrap();
        assert!(ds.labeled().iter().all(|s| s.label == s.features.raw()[0]));
    }

    #[test]
    fn linear_noise_variance() {
        let ds = generate_scenario_data(&small(GroundTruth::Linear, Some(0.01), 100_000), 3).unwrap();
        let r: Vec<f64> = ds.labeled().iter().map(|s| s.label - s.features.raw()[0]).collect();
        let mean = r.iter().sum::<f64>() / r.len() as f64;
        let var = r.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (r.len() - 1) as f64;
        assert!((var / 1e-4 - 1.0).abs() < 0.05, "variance {var}");
    }

    #[test]
    fn deterministic_and_pool_independent() {
        let cfg = small(GroundTruth::Square, None, 30);
        assert_eq!(generate_scenario_data(&cfg, 9).unwrap(), generate_scenario_data(&cfg, 9).unwrap());
        let full = generate_scenario_data(&cfg, 9).unwrap();
        let bare = generate_scenario_data_with(&cfg, &mut SimRng::new(9), false).unwrap();
        assert_eq!(full.labeled(), bare.labeled());
        assert_eq!(bare.n_unlabeled(), 0);
    }
}
