use serde::{Deserialize, Serialize};

use crate::data::split_dataset;
use crate::error::Result;
use crate::estimator::{
    corrected_estimator, estimate_second_moment_inverse, exact_linear_approx_analytic,
    linear_approx_of_predictor, residuals_z, MomentSource, SecondMomentEstimate,
};
use crate::inference::{baseline_lse_fit, test_all};
use crate::models::{mse_loss, train_linear, train_mlp, Predictor, TrainConfig};
use crate::numerics::linalg::matrix_rows;
use crate::numerics::{MatrixD, SimRng, VectorD};
use crate::sim::scenario::generate_scenario_data_with;
use crate::sim::{Method, ScenarioConfig};

/// Outcome of a successful trial. Tests are all against the analytic `w*`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialStats {
    pub w: Vec<f64>,
    pub cov: Vec<Vec<f64>>,
    /// `sqrt(Σ_jj)`
    pub std: Vec<f64>,
    /// `(w_j - w*_j) / sqrt(Σ_jj)`
    pub u: Vec<f64>,
    /// `(w - w*)ᵀ Σ⁻¹ (w - w*)`
    pub chi2: f64,
    pub reject_model: bool,
    pub reject_coef: Vec<bool>,
    /// Mean squared error of `f¹` (or the baseline fit) on its training data.
    pub train_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub repetition: usize,
    pub trial: usize,
    pub seed: u64,
    pub method: Method,
    pub stats: Option<TrialStats>,
    /// Why the trial produced no estimate, e.g. a degenerate covariance.
    pub failure: Option<String>,
}

impl TrialRecord {
    pub fn failed(&self) -> bool {
        self.stats.is_none()
    }
}

/// One full pipeline run on freshly generated data. Errors inside the
/// pipeline become a failed record rather than an error.
pub fn run_trial(cfg: &ScenarioConfig, trial_seed: u64) -> TrialRecord {
    let (stats, failure) = match trial_stats(cfg, trial_seed) {
        Ok(s) => (Some(s), None),
        Err(e) => (None, Some(e.to_string())),
    };
    TrialRecord {
        repetition: 0,
        trial: 0,
        seed: trial_seed,
        method: cfg.method,
        stats,
        failure,
    }
}

fn trial_stats(cfg: &ScenarioConfig, trial_seed: u64) -> Result<TrialStats> {
    let mut rng = SimRng::new(trial_seed);
    let data = generate_scenario_data_with(cfg, &mut rng, cfg.needs_unlabeled())?;
    let split_seed = rng.next_u64();
    let train = TrainConfig {
        seed: rng.next_u64(),
        ..cfg.train.clone()
    };
    let w_star = exact_linear_approx_analytic(cfg.ground_truth);

    let (w, cov, train_loss) = match cfg.method {
        Method::BaselineLse => {
            let fit = baseline_lse_fit(&data, Some(&train))?;
            let loss = fit.sigma_sq * (fit.n - w_star.len()) as f64 / fit.n as f64;
            (fit.w, fit.cov, loss)
        }
        Method::OursL | Method::OursNn => {
            let split = split_dataset(&data, cfg.split_ratio, split_seed)?;
            let predictor = if cfg.method == Method::OursL {
                Predictor::Linear(train_linear(&split.train, &train)?)
            } else {
                Predictor::Mlp(train_mlp(&split.train, &train)?)
            };
            let a_hat = match cfg.moment_source() {
                MomentSource::ValidationOnly => estimate_second_moment_inverse(
                    split.validation.labeled_features(),
                    MomentSource::ValidationOnly,
                )?,
                MomentSource::AllData => {
                    estimate_second_moment_inverse(data.all_features(), MomentSource::AllData)?
                }
                MomentSource::ExactAnalytic => SecondMomentEstimate::exact_uniform(),
            };
            let w1 = linear_approx_of_predictor(&predictor, data.unlabeled(), &a_hat)?;
            let rs = residuals_z(&predictor, &split.validation)?;
            let est = corrected_estimator(w1, rs, a_hat)?;
            let loss = mse_loss(&predictor, &split.train)?.mean;
            (est.w_e, est.sigma_e_sq, loss)
        }
    };
    stats_against(&w, &cov, &w_star, cfg.delta, train_loss)
}

fn stats_against(
    w: &VectorD,
    cov: &MatrixD,
    w_star: &VectorD,
    delta: f64,
    train_loss: f64,
) -> Result<TrialStats> {
    let tests = test_all(w, cov, w_star, delta)?;
    let d = w.len();
    let std: Vec<f64> = (0..d).map(|j| cov[(j, j)].sqrt()).collect();
    Ok(TrialStats {
        w: w.as_slice().to_vec(),
        cov: matrix_rows(cov),
        u: (0..d).map(|j| (w[j] - w_star[j]) / std[j]).collect(),
        std,
        chi2: tests[0].statistic,
        reject_model: tests[0].reject,
        reject_coef: tests[1..].iter().map(|t| t.reject).collect(),
        train_loss,
    })
}
