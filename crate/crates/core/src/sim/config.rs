use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::{GroundTruth, MomentSource};
use crate::models::TrainConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// Least squares on all labeled data with the classical covariance.
    BaselineLse,
    /// Corrected estimator over a linear `f¹`.
    OursL,
    /// Corrected estimator over an MLP `f¹`.
    OursNn,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::BaselineLse => "baseline-lse",
            Method::OursL => "ours-l",
            Method::OursNn => "ours-nn",
        }
    }

    /// `Â` source used when the config leaves it unset.
    pub fn default_moment_source(self) -> MomentSource {
        match self {
            Method::OursNn => MomentSource::AllData,
            Method::BaselineLse | Method::OursL => MomentSource::ValidationOnly,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "baseline-lse" | "baseline" => Ok(Method::BaselineLse),
            "ours-l" => Ok(Method::OursL),
            "ours-nn" => Ok(Method::OursNn),
            other => Err(Error::Config(format!(
                "unknown method {other:?}; expected baseline-lse, ours-l or ours-nn"
            ))),
        }
    }
}

/// One experiment: ground truth, sample sizes, method, protocol and
/// training settings. Inputs are always `x ~ U(0,1)` with an intercept
/// feature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub ground_truth: GroundTruth,
    /// Label noise standard deviation; `None` means 0 for the square
    /// scenario and 0.01 for the linear one.
    pub noise_sigma: Option<f64>,
    pub n_labeled: usize,
    pub n_unlabeled: usize,
    pub split_ratio: f64,
    pub method: Method,
    /// `None` picks the method's default.
    pub a_hat_source: Option<MomentSource>,
    pub trials: usize,
    pub repetitions: usize,
    pub base_seed: u64,
    pub delta: f64,
    /// Training settings for `f¹` and the baseline. The initialization
    /// seed is replaced per trial.
    pub train: TrainConfig,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self::paper(GroundTruth::Square, Method::OursL)
    }
}

pub const LINEAR_NOISE_SIGMA: f64 = 0.01;

impl ScenarioConfig {
    /// The main protocol: N = 100, N_u = 50000, split 0.7, 6 × 1000 trials,
    /// δ = 0.05. Linear models are fitted in closed form.
    pub fn paper(ground_truth: GroundTruth, method: Method) -> Self {
        Self {
            ground_truth,
            noise_sigma: None,
            n_labeled: 100,
            n_unlabeled: 50_000,
            split_ratio: 0.7,
            method,
            a_hat_source: None,
            trials: 1000,
            repetitions: 6,
            base_seed: 20_210_611,
            delta: 0.05,
            train: TrainConfig {
                closed_form: method != Method::OursNn,
                ..Default::default()
            },
        }
    }

    /// Small-sample bias protocol: N = 20, split 0.5. `Â` for the linear
    /// corrected estimator comes from all data, as in the main protocol's
    /// unlabeled-pool estimate.
    pub fn bias_protocol(ground_truth: GroundTruth, method: Method) -> Self {
        Self {
            n_labeled: 20,
            split_ratio: 0.5,
            a_hat_source: (method == Method::OursL).then_some(MomentSource::AllData),
            ..Self::paper(ground_truth, method)
        }
    }

    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: Self = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn noise(&self) -> f64 {
        self.noise_sigma.unwrap_or(match self.ground_truth {
            GroundTruth::Square => 0.0,
            GroundTruth::Linear => LINEAR_NOISE_SIGMA,
        })
    }

    pub fn moment_source(&self) -> MomentSource {
        self.a_hat_source
            .unwrap_or_else(|| self.method.default_moment_source())
    }

    /// Whether trials need the unlabeled pool at all.
    pub fn needs_unlabeled(&self) -> bool {
        self.method == Method::OursNn || self.moment_source() == MomentSource::AllData
    }

    /// Feature dimension: intercept plus one raw input.
    pub fn dim(&self) -> usize {
        2
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        let sigma = self.noise();
        if !(sigma >= 0.0 && sigma.is_finite()) {
            return fail(format!("noise_sigma must be non-negative, got {sigma}"));
        }
        if self.ground_truth == GroundTruth::Square && sigma != 0.0 {
            return fail("the square scenario is noiseless; noise_sigma must be 0".into());
        }
        if self.trials == 0 || self.repetitions == 0 {
            return fail("trials and repetitions must be at least 1".into());
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return fail(format!("delta must lie in (0,1), got {}", self.delta));
        }
        let d = self.dim();
        if self.method == Method::BaselineLse {
            if self.n_labeled <= d {
                return fail(format!("baseline needs n_labeled > {d}"));
            }
        } else {
            if !(self.split_ratio > 0.0 && self.split_ratio < 1.0) {
                return fail(format!("split_ratio must lie in (0,1), got {}", self.split_ratio));
            }
            let n1 = (self.split_ratio * self.n_labeled as f64).round() as usize;
            if n1 < 1 || n1 >= self.n_labeled {
                return fail("split leaves an empty side".into());
            }
            if self.n_labeled - n1 <= d {
                return fail(format!("validation side must exceed d = {d} samples"));
            }
            if self.method == Method::OursNn && self.n_unlabeled == 0 {
                return fail("ours-nn needs an unlabeled pool".into());
            }
        }
        self.train
            .validate()
            .map_err(|e| Error::Config(format!("train: {e}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn paper_defaults() {
        let cfg = ScenarioConfig::paper(GroundTruth::Square, Method::OursL);
        assert_eq!((cfg.n_labeled, cfg.n_unlabeled), (100, 50_000));
        assert_eq!((cfg.trials, cfg.repetitions), (1000, 6));
        assert_eq!(cfg.split_ratio, 0.7);
        assert_eq!(cfg.delta, 0.05);
        assert_eq!(cfg.moment_source(), MomentSource::ValidationOnly);
        assert_eq!(cfg.noise(), 0.0);
        assert!(cfg.validate().is_ok());
        let lin = ScenarioConfig::paper(GroundTruth::Linear, Method::OursNn);
        assert_eq!(lin.noise(), 0.01);
        assert_eq!(lin.moment_source(), MomentSource::AllData);
    }

    #[test]
    fn bias_protocol() {
        let cfg = ScenarioConfig::bias_protocol(GroundTruth::Square, Method::OursL);
        assert_eq!((cfg.n_labeled, cfg.split_ratio), (20, 0.5));
        assert_eq!(cfg.moment_source(), MomentSource::AllData);
        assert!(cfg.validate().is_ok());
    }

    #[test]
    fn square_must_be_noiseless() {
        let cfg = ScenarioConfig {
            noise_sigma: Some(0.1),
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn json_round_trip_and_unknown_keys() {
        let cfg = ScenarioConfig::paper(GroundTruth::Linear, Method::BaselineLse);
        let text = serde_json::to_string(&cfg).unwrap();
        let back: ScenarioConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back, cfg);
        let partial: ScenarioConfig =
            serde_json::from_str(r#"{"ground_truth": "linear", "method": "ours-nn", "trials": 5}"#).unwrap();
        assert_eq!(partial.trials, 5);
        assert_eq!(partial.n_labeled, 100);
        assert!(serde_json::from_str::<ScenarioConfig>(r#"{"trails": 5}"#).is_err());
    }

    #[test]
    fn method_names() {
        for m in [Method::BaselineLse, Method::OursL, Method::OursNn] {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
            assert_eq!(serde_json::to_value(m).unwrap(), m.name());
        }
        assert!("ours".parse::<Method>().is_err());
    }
}
