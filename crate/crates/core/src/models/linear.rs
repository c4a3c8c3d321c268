use serde::{Deserialize, Serialize};

use crate::data::{featurize, Dataset, FeatureVector};
use crate::error::{Error, Result};
use crate::models::{Predict, TrainConfig};
use crate::numerics::{invert_spd, second_moment, VectorD};

/// `f(x) = wᵀ x` over the featurized input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearPredictor {
    pub weights: Vec<f64>,
    /// Whether coordinate 0 of the weights multiplies a constant 1.
    pub intercept: bool,
}

impl LinearPredictor {
    pub fn new(weights: Vec<f64>, intercept: bool) -> Result<Self> {
        if weights.is_empty() || weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::invalid("linear weights must be non-empty and finite"));
        }
        Ok(Self { weights, intercept })
    }

    pub fn weights_vector(&self) -> VectorD {
        VectorD::from_column_slice(&self.weights)
    }

    fn dot(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.weights.len() {
            return Err(Error::DimensionMismatch {
                expected: self.weights.len(),
                found: x.len(),
            });
        }
        Ok(self.weights.iter().zip(x).map(|(w, v)| w * v).sum())
    }
}

impl Predict for LinearPredictor {
    fn predict(&self, raw: &[f64]) -> Result<f64> {
        self.dot(featurize(raw, self.intercept)?.values())
    }

    fn predict_features(&self, x: &FeatureVector) -> Result<f64> {
        self.dot(x.values())
    }

    fn as_linear(&self) -> Option<&LinearPredictor> {
        Some(self)
    }
}

/// Least squares on the training side, either through the normal equations
/// or by full-batch gradient descent on the mean squared error from zero
/// weights.
pub fn train_linear(train: &Dataset, cfg: &TrainConfig) -> Result<LinearPredictor> {
    let n = train.n();
    if n == 0 {
        return Err(Error::invalid("cannot train on an empty training set"));
    }
    let d = train.dim();
    let intercept = train.intercept();

    if cfg.closed_form {
        let moment = second_moment(train.labeled_features())?;
        let inv = invert_spd(&moment)?;
        let mut xy = VectorD::zeros(d);
        for s in train.labeled() {
            xy += VectorD::from_column_slice(s.features.values()) * s.label;
        }
        xy /= n as f64;
        let w = inv * xy;
        return LinearPredictor::new(w.as_slice().to_vec(), intercept);
    }

    cfg.validate()?;
    let mut w = vec![0.0; d];
    let mut grad = vec![0.0; d];
    let scale = 2.0 / n as f64;
    for epoch in 0..cfg.epochs {
        grad.iter_mut().for_each(|g| *g = 0.0);
        let mut loss = 0.0;
        for s in train.labeled() {
            let x = s.features.values();
            let r: f64 = w.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() - s.label;
            loss += r * r;
            for (g, xi) in grad.iter_mut().zip(x) {
                *g += scale * r * xi;
            }
        }
        loss /= n as f64;
        if !loss.is_finite() {
            return Err(Error::TrainingDiverged { epoch, loss });
        }
        for (wi, g) in w.iter_mut().zip(&grad) {
            *wi -= cfg.learning_rate * g;
        }
    }
    if w.iter().any(|v| !v.is_finite()) {
        return Err(Error::TrainingDiverged {
            epoch: cfg.epochs,
            loss: f64::NAN,
        });
    }
    LinearPredictor::new(w, intercept)
}
