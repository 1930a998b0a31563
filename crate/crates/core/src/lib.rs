//! Closed-form, data-dependent initialization for softmax linear
//! classifier heads.
//!
//! Given feature vectors and labels, the library estimates per-class means
//! and a pooled covariance, solves a ridge-regularized Gaussian model for
//! classifier weights in closed form, and optionally calibrates them
//! against a reference weight set so downstream loss magnitudes match.
//! Supporting machinery covers bit-exact tensor file formats, a
//! deterministic logistic-regression trainer for convergence and
//! over-fitting studies, a covariance-similarity analysis, and seeded
//! synthetic Gaussian data with exact ground truth.
//!
//! Every operation is deterministic: fixed seeds pin datasets,
//! initializations, and training runs bit for bit.

pub mod calibration;
pub mod cmd;
mod error;
pub mod logreg;
pub mod numerics;
pub mod rng;
pub mod solver;
pub mod stats;
pub mod store;
pub mod synth;
pub mod types;

pub use error::{Error, Result};
pub use types::{
    CalibrationRecord, Dtype, FeatureMatrix, LabelVector, LinearClassifier, ModelMetadata,
};
