//! Assumption-free estimation of the best linear approximation of an unknown
//! ground-truth function.
//!
//! A machine-learning predictor `f¹` is fitted on a training split, its own
//! best linear approximation `w¹` is computed, and a residual correction
//! measured on the validation split turns `w¹` into an estimator `wᵉ` that is
//! asymptotically normal whether or not the ground truth is linear. The crate
//! covers the whole pipeline:
//!
//! - [`data`]: datasets, featurization, seeded train/validation splits, CSV ingestion.
//! - [`numerics`]: small symmetric linear algebra, normal and χ² distribution
//!   functions, the exact one-sample KS statistic, and the seeded generator.
//! - [`models`]: linear and multilayer-perceptron predictors trained by full-batch
//!   gradient descent.
//! - [`estimator`]: the corrected estimator, its covariance, and the
//!   concentration-bound calculators.
//! - [`inference`]: model (χ²) and coefficient (normal) significance tests, plus
//!   the classical least-squares baseline.
//! - [`sim`]: the Monte Carlo harness that regenerates the linear and square
//!   scenarios and reports KS, efficiency, bias and rejection metrics.

pub mod data;
pub mod error;
pub mod estimator;
pub mod inference;
pub mod models;
pub mod numerics;
pub mod sim;

pub use error::{Error, Result};
