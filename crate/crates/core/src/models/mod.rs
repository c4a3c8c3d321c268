//! Trainable predictors `f¹`.

mod linear;
mod mlp;

pub use linear::{train_linear, LinearPredictor};
pub use mlp::{
    mlp_gradient, train_mlp, train_mlp_traced, MlpGradient, MlpPredictor, TrainingMeta,
};

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, FeatureVector};
use crate::error::{Error, Result};

/// Anything that maps a raw input to a real prediction.
pub trait Predict {
    fn predict(&self, raw: &[f64]) -> Result<f64>;

    /// Predict from a featurized input. The default strips the intercept
    /// coordinate and predicts on the raw part.
    fn predict_features(&self, x: &FeatureVector) -> Result<f64> {
        self.predict(x.raw())
    }

    /// Predictions for many featurized inputs, in order.
    fn predict_many(&self, xs: &[&FeatureVector]) -> Result<Vec<f64>> {
        xs.iter().map(|x| self.predict_features(x)).collect()
    }

    /// Linear predictors are their own best linear approximation.
    fn as_linear(&self) -> Option<&LinearPredictor> {
        None
    }
}

/// A closure used as a predictor, e.g. a known ground truth in oracle tests.
pub struct FnPredictor<F>(pub F);

impl<F> Predict for FnPredictor<F>
where
    F: Fn(&[f64]) -> f64,
{
    fn predict(&self, raw: &[f64]) -> Result<f64> {
        Ok((self.0)(raw))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Predictor {
    Linear(LinearPredictor),
    Mlp(MlpPredictor),
}

impl Predict for Predictor {
    fn predict(&self, raw: &[f64]) -> Result<f64> {
        match self {
            Predictor::Linear(p) => p.predict(raw),
            Predictor::Mlp(p) => p.predict(raw),
        }
    }

    fn predict_features(&self, x: &FeatureVector) -> Result<f64> {
        match self {
            Predictor::Linear(p) => p.predict_features(x),
            Predictor::Mlp(p) => p.predict_features(x),
        }
    }

    fn predict_many(&self, xs: &[&FeatureVector]) -> Result<Vec<f64>> {
        match self {
            Predictor::Linear(p) => p.predict_many(xs),
            Predictor::Mlp(p) => p.predict_many(xs),
        }
    }

    fn as_linear(&self) -> Option<&LinearPredictor> {
        match self {
            Predictor::Linear(p) => Some(p),
            Predictor::Mlp(_) => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Activation {
    Tanh,
    Sigmoid,
}

impl Activation {
    #[inline]
    pub(crate) fn apply(self, z: f64) -> f64 {
        match self {
            // Via exp, which is about twice as fast as libm tanh here; the
            // absolute error stays near machine epsilon.
            Activation::Tanh => 1.0 - 2.0 / ((2.0 * z).exp() + 1.0),
            Activation::Sigmoid => 1.0 / (1.0 + (-z).exp()),
        }
    }

    /// Derivative expressed through the activation's output `a`.
    #[inline]
    pub(crate) fn derivative_from_output(self, a: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - a * a,
            Activation::Sigmoid => a * (1.0 - a),
        }
    }
}

/// Hyperparameters for both model families. `hidden` and `activation` only
/// apply to the MLP; `closed_form` only to the linear model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub hidden: [usize; 2],
    pub activation: Activation,
    /// Seed for the MLP weight initialization.
    pub seed: u64,
    /// Solve the normal equations instead of running gradient descent.
    pub closed_form: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.05,
            epochs: 3000,
            hidden: [16, 16],
            activation: Activation::Tanh,
            seed: 0,
            closed_form: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if self.hidden.contains(&0) {
            return Err(Error::Config("hidden layer sizes must be positive".into()));
        }
        Ok(())
    }
}

/// Per-sample squared errors `l⁽ⁱ⁾ = (f¹(x⁽ⁱ⁾) - y⁽ⁱ⁾)²` and their mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossSummary {
    pub losses: Vec<f64>,
    pub mean: f64,
}

pub fn mse_loss<P: Predict + ?Sized>(predictor: &P, data: &Dataset) -> Result<LossSummary> {
    if data.n() == 0 {
        return Err(Error::invalid("loss over an empty labeled set"));
    }
    let losses = data
        .labeled()
        .iter()
        .map(|s| predictor.predict_features(&s.features).map(|f| (f - s.label).powi(2)))
        .collect::<Result<Vec<f64>>>()?;
    let mean = losses.iter().sum::<f64>() / losses.len() as f64;
    Ok(LossSummary { losses, mean })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{featurize, Sample};

    fn dataset(xs: &[f64], ys: &[f64]) -> Dataset {
        Dataset::labeled_only(
            xs.iter()
                .zip(ys)
                .map(|(&x, &y)| Sample::new(featurize(&[x], true).unwrap(), y).unwrap())
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn perfect_predictor_has_zero_loss() {
        let ds = dataset(&[0.1, 0.5, 0.9], &[0.01, 0.25, 0.81]);
        let square = FnPredictor(|x: &[f64]| x[0] * x[0]);
        let loss = mse_loss(&square, &ds).unwrap();
        assert!(loss.losses.iter().all(|&l| l < 1e-30));
        assert!(loss.mean < 1e-30);
    }

    #[test]
    fn hand_computed_losses() {
        let ds = dataset(&[0.0, 1.0], &[1.0, 3.0]);
        let zero = FnPredictor(|_: &[f64]| 0.0);
        let loss = mse_loss(&zero, &ds).unwrap();
        assert_eq!(loss.losses, vec![1.0, 9.0]);
        assert_eq!(loss.mean, 5.0);
    }

    #[test]
    fn loss_matches_naive_recomputation() {
        let mut rng = crate::numerics::SimRng::new(8);
        let xs: Vec<f64> = (0..50).map(|_| rng.uniform()).collect();
        let ys: Vec<f64> = xs.iter().map(|x| x.sin() + 0.1 * rng.standard_normal()).collect();
        let ds = dataset(&xs, &ys);
        let p = LinearPredictor::new(vec![0.1, 0.8], true).unwrap();
        let loss = mse_loss(&p, &ds).unwrap();
        let mut naive = 0.0;
        for (x, y) in xs.iter().zip(&ys) {
            let r = 0.1 + 0.8 * x - y;
            naive += r * r;
        }
        naive /= xs.len() as f64;
        assert!((loss.mean - naive).abs() < 1e-12);
    }

    #[test]
    fn empty_loss_is_error() {
        let p = LinearPredictor::new(vec![1.0], false).unwrap();
        assert!(mse_loss(&p, &Dataset::default()).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        let bad = TrainConfig {
            learning_rate: 0.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = TrainConfig {
            epochs: 0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn predictor_json_is_tagged() {
        let p = Predictor::Linear(LinearPredictor::new(vec![1.0, 2.0], true).unwrap());
        let json = serde_json::to_value(&p).unwrap();
        assert_eq!(json["kind"], "linear");
        let back: Predictor = serde_json::from_value(json).unwrap();
        assert_eq!(back, p);
    }
}
