//! Covariance similarity across classes via the correlation matrix
//! distance `1 - tr(R1 R2) / (|R1|_F |R2|_F)`: 0 for proportional
//! matrices, 1 for trace-orthogonal ones.
//!
//! The study pipeline quantifies how class-independent per-class
//! covariances are: center every row at its class mean, project to a small
//! PCA basis, estimate one covariance per class in that basis, and score
//! each against the unweighted mean covariance.

use serde::{Deserialize, Serialize};

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::numerics::{stable_mean, stable_sum, CompensatedSum, SymmetricMatrix};
use crate::stats;
use crate::types::{FeatureMatrix, LabelVector};

/// Per-class covariance distance scores and their summary moments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CmdReport {
    pub per_class_cmd: Vec<f64>,
    pub mean_cmd: f64,
    /// Population variance (1/K) of the per-class scores.
    pub var_cmd: f64,
    pub pca_dims: usize,
    pub explained_variance_ratio: f64,
}

impl CmdReport {
    pub fn write_json(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self)
            .map_err(|e| Error::Format(format!("report serialization failed: {e}")))?;
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn read_json(path: impl AsRef<std::path::Path>) -> Result<CmdReport> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text)
            .map_err(|e| Error::Format(format!("{}: invalid report: {e}", path.display())))
    }
}

/// Correlation matrix distance between two symmetric matrices of equal
/// dimension. Exactly symmetric in its arguments and invariant to positive
/// rescaling of either input; clamped into [0, 1].
pub fn cmd_distance(r1: &SymmetricMatrix, r2: &SymmetricMatrix) -> Result<f64> {
    if r1.dim() != r2.dim() {
        return Err(Error::Validation(format!(
            "dimension mismatch: {} vs {}",
            r1.dim(),
            r2.dim()
        )));
    }
    let n1 = r1.frobenius_norm();
    let n2 = r2.frobenius_norm();
    if n1 == 0.0 || n2 == 0.0 {
        return Err(Error::Validation(
            "distance is undefined for a zero matrix".into(),
        ));
    }
    // tr(R1 R2) = sum_ij R1_ij * R2_ij for symmetric inputs
    let mut acc = CompensatedSum::new();
    for (a, b) in r1.as_array().iter().zip(r2.as_array().iter()) {
        acc.add(a * b);
    }
    let d = 1.0 - acc.value() / (n1 * n2);
    Ok(d.clamp(0.0, 1.0))
}

/// Run the covariance-convergence study.
///
/// Requires every class to have at least `pca_dims + 1` samples so the
/// reduced-space covariances are meaningful.
pub fn cmd_study(x: &FeatureMatrix, y: &LabelVector, pca_dims: usize) -> Result<CmdReport> {
    let d = x.cols();
    if pca_dims == 0 || pca_dims > d {
        return Err(Error::Validation(format!(
            "pca_dims {pca_dims} must be in 1..={d}"
        )));
    }
    let s = stats::fit_statistics(x, y)?;
    let k = s.num_classes();
    for (c, &count) in s.counts().iter().enumerate() {
        if count < pca_dims + 1 {
            return Err(Error::Validation(format!(
                "class {c} has {count} samples, the study needs at least {}",
                pca_dims + 1
            )));
        }
    }

    let pca = stats::centered_pca(&s, pca_dims)?;
    let projected = stats::project_centered_with(x, y, &s, &pca)?;
    let z = projected.as_array();
    let n = z.nrows();

    // per-class covariance (1/|C_k|) in the reduced space, centered at the
    // class's own reduced-space mean
    let mut class_means = Array2::<f64>::zeros((k, pca_dims));
    for i in 0..n {
        let c = y.label(i);
        for j in 0..pca_dims {
            class_means[[c, j]] += z[[i, j]];
        }
    }
    for c in 0..k {
        for j in 0..pca_dims {
            class_means[[c, j]] /= s.counts()[c] as f64;
        }
    }
    let mut accs = vec![CompensatedSum::new(); k * pca_dims * pca_dims];
    let mut centered = vec![0.0f64; pca_dims];
    for i in 0..n {
        let c = y.label(i);
        for j in 0..pca_dims {
            centered[j] = z[[i, j]] - class_means[[c, j]];
        }
        let base = c * pca_dims * pca_dims;
        for a in 0..pca_dims {
            for b in a..pca_dims {
                accs[base + a * pca_dims + b].add(centered[a] * centered[b]);
            }
        }
    }
    let mut class_covs = Vec::with_capacity(k);
    for c in 0..k {
        let base = c * pca_dims * pca_dims;
        let mut m = Array2::<f64>::zeros((pca_dims, pca_dims));
        for a in 0..pca_dims {
            for b in a..pca_dims {
                m[[a, b]] = accs[base + a * pca_dims + b].value() / s.counts()[c] as f64;
            }
        }
        class_covs.push(SymmetricMatrix::from_upper(m)?);
    }

    // unweighted mean of the K covariance matrices
    let mut mean_arr = Array2::<f64>::zeros((pca_dims, pca_dims));
    for cov in &class_covs {
        mean_arr = mean_arr + cov.as_array();
    }
    mean_arr /= k as f64;
    let mean_cov = SymmetricMatrix::from_upper(mean_arr)?;

    let mut per_class_cmd = Vec::with_capacity(k);
    for cov in &class_covs {
        per_class_cmd.push(cmd_distance(cov, &mean_cov)?);
    }
    let mean_cmd = stable_mean(per_class_cmd.iter().copied());
    let var_cmd = stable_sum(
        per_class_cmd
            .iter()
            .map(|&v| (v - mean_cmd) * (v - mean_cmd)),
    ) / k as f64;

    Ok(CmdReport {
        per_class_cmd,
        mean_cmd,
        var_cmd,
        pca_dims,
        explained_variance_ratio: pca.explained_variance_ratio,
    })
}
