//! Closed-form classifiers from class statistics: the ridge-regularized
//! Gaussian classifier and its nearest-centroid limit.
//!
//! Weights solve `(Sigma + eps*I) w_k = mu_k` through one shared
//! factorization; the covariance is never inverted explicitly. Biases are
//! `b_k = -0.5 * w_k . mu_k`, so prediction is a plain argmax over affine
//! scores.

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};
use crate::numerics::{self, stable_sum};
use crate::stats::ClassStatistics;
use crate::types::{FeatureMatrix, LabelVector, LinearClassifier, ModelMetadata};

/// How `epsilon` translates into the ridge added to the covariance diagonal.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EpsilonMode {
    /// The ridge is `epsilon` itself.
    Absolute,
    /// The ridge is `epsilon * trace(Sigma) / d`, i.e. epsilon in units of
    /// the mean covariance eigenvalue. Useful when feature scale is
    /// arbitrary.
    RelativeToMeanEigenvalue,
}

/// Ridge configuration for [`fit_rgc`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RgcConfig {
    pub epsilon: f64,
    pub epsilon_mode: EpsilonMode,
}

impl Default for RgcConfig {
    fn default() -> Self {
        RgcConfig {
            epsilon: 0.1,
            epsilon_mode: EpsilonMode::Absolute,
        }
    }
}

impl RgcConfig {
    pub fn absolute(epsilon: f64) -> Self {
        RgcConfig {
            epsilon,
            epsilon_mode: EpsilonMode::Absolute,
        }
    }

    pub fn relative(epsilon: f64) -> Self {
        RgcConfig {
            epsilon,
            epsilon_mode: EpsilonMode::RelativeToMeanEigenvalue,
        }
    }

    /// Ridge actually added to the diagonal.
    pub fn effective_epsilon(&self, s: &ClassStatistics) -> f64 {
        match self.epsilon_mode {
            EpsilonMode::Absolute => self.epsilon,
            EpsilonMode::RelativeToMeanEigenvalue => {
                self.epsilon * s.pooled_cov().trace() / s.dim() as f64
            }
        }
    }
}

/// Fit the regularized Gaussian classifier from class statistics.
pub fn fit_rgc(s: &ClassStatistics, cfg: &RgcConfig) -> Result<LinearClassifier> {
    if !cfg.epsilon.is_finite() || cfg.epsilon < 0.0 {
        return Err(Error::Config(format!(
            "epsilon must be finite and non-negative, got {}",
            cfg.epsilon
        )));
    }
    let eps_eff = cfg.effective_epsilon(s);
    let k = s.num_classes();
    let d = s.dim();

    let ridged = s.pooled_cov().add_ridge(eps_eff);
    let factor = numerics::spd_factor(&ridged).map_err(|e| match e {
        Error::NotPositiveDefinite { pivot, detail } => Error::NotPositiveDefinite {
            pivot,
            detail: format!(
                "{detail}; covariance + ridge {eps_eff} is singular, set epsilon > 0"
            ),
        },
        other => other,
    })?;

    // all K right-hand sides in one solve: columns of mu^T
    let rhs: Array2<f64> = s.means().t().to_owned();
    let solution = numerics::spd_solve(&factor, &rhs)?; // d x K
    let weights: Array2<f64> = solution.t().to_owned(); // K x d

    let mut bias = Array1::zeros(k);
    for c in 0..k {
        let w = weights.row(c);
        let mu = s.mean(c);
        bias[c] = -0.5 * stable_sum((0..d).map(|j| w[j] * mu[j]));
    }

    LinearClassifier::new(weights, bias, ModelMetadata::with_epsilon("rgc", eps_eff))
}

/// Nearest-centroid classifier: `w_k = mu_k`, `b_k = -0.5 * |mu_k|^2`.
///
/// This is the infinite-ridge limit of [`fit_rgc`] up to a positive
/// class-independent scale, which leaves the argmax unchanged.
pub fn fit_ncc(s: &ClassStatistics) -> LinearClassifier {
    let k = s.num_classes();
    let d = s.dim();
    let weights = s.means().clone();
    let mut bias = Array1::zeros(k);
    for c in 0..k {
        let mu = s.mean(c);
        bias[c] = -0.5 * stable_sum((0..d).map(|j| mu[j] * mu[j]));
    }
    LinearClassifier::new(weights, bias, ModelMetadata::new("ncc"))
        .expect("statistics invariants guarantee finite parameters")
}

/// Predict the class of every row: argmax of scores, ties resolved to the
/// lowest class index.
pub fn predict(c: &LinearClassifier, x: &FeatureMatrix) -> Result<LabelVector> {
    if x.cols() != c.dim() {
        return Err(Error::Validation(format!(
            "feature dim {} does not match classifier dim {}",
            x.cols(),
            c.dim()
        )));
    }
    let scores = c.scores(x.as_array());
    let labels = argmax_rows(&scores);
    LabelVector::new(labels, c.num_classes())
}

/// Row-wise argmax with lowest-index tie breaking.
pub(crate) fn argmax_rows(scores: &Array2<f64>) -> Vec<u32> {
    scores
        .rows()
        .into_iter()
        .map(|row| {
            let mut best = 0usize;
            let mut best_v = row[0];
            for (j, &v) in row.iter().enumerate().skip(1) {
                if v > best_v {
                    best = j;
                    best_v = v;
                }
            }
            best as u32
        })
        .collect()
}
