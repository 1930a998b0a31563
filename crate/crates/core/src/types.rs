//! Shared domain types: feature matrices, label vectors, linear classifiers.

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Element type a feature matrix was stored with on disk. All in-memory
/// math runs in f64; f32 data is upcast exactly on load and cast back on
/// write.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dtype {
    F32,
    F64,
}

impl Dtype {
    pub fn size_bytes(self) -> usize {
        match self {
            Dtype::F32 => 4,
            Dtype::F64 => 8,
        }
    }
}

/// N x d matrix of feature vectors, one sample per row.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    data: Array2<f64>,
    dtype: Dtype,
}

impl FeatureMatrix {
    /// Wrap an f64 array. Rejects empty shapes and non-finite elements.
    pub fn from_array(data: Array2<f64>) -> Result<Self> {
        Self::with_dtype(data, Dtype::F64)
    }

    /// Wrap an array, tagging the on-disk element type.
    pub fn with_dtype(data: Array2<f64>, dtype: Dtype) -> Result<Self> {
        let (n, d) = data.dim();
        if n == 0 || d == 0 {
            return Err(Error::Validation(format!(
                "feature matrix must have at least one row and one column, got {n}x{d}"
            )));
        }
        if let Some(idx) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Validation(format!(
                "non-finite feature element at index {idx} (row {}, col {})",
                idx / d,
                idx % d
            )));
        }
        Ok(FeatureMatrix { data, dtype })
    }

    /// Build from a row-major vec.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        let arr = Array2::from_shape_vec((rows, cols), data).map_err(|e| {
            Error::Validation(format!("data length does not match {rows}x{cols}: {e}"))
        })?;
        Self::from_array(arr)
    }

    /// Build from f32 samples; values upcast exactly, dtype tagged F32.
    pub fn from_f32(rows: usize, cols: usize, data: Vec<f32>) -> Result<Self> {
        let arr = Array2::from_shape_vec(
            (rows, cols),
            data.into_iter().map(f64::from).collect(),
        )
        .map_err(|e| {
            Error::Validation(format!("data length does not match {rows}x{cols}: {e}"))
        })?;
        Self::with_dtype(arr, Dtype::F32)
    }

    pub fn rows(&self) -> usize {
        self.data.nrows()
    }

    pub fn cols(&self) -> usize {
        self.data.ncols()
    }

    pub fn dtype(&self) -> Dtype {
        self.dtype
    }

    pub fn as_array(&self) -> &Array2<f64> {
        &self.data
    }

    pub fn into_array(self) -> Array2<f64> {
        self.data
    }
}

/// N class labels in [0, K).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelVector {
    labels: Vec<u32>,
    num_classes: usize,
}

impl LabelVector {
    /// Validates that labels are in range and the vector is non-empty.
    ///
    /// `num_classes == 1` is allowed in memory so degenerate single-class
    /// classifiers can emit predictions; the label file format and data
    /// pipelines require at least two classes.
    pub fn new(labels: Vec<u32>, num_classes: usize) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::Validation("label vector must be non-empty".into()));
        }
        if num_classes == 0 {
            return Err(Error::Validation("num_classes must be at least 1".into()));
        }
        if let Some((i, &l)) = labels
            .iter()
            .enumerate()
            .find(|(_, &l)| l as usize >= num_classes)
        {
            return Err(Error::Validation(format!(
                "label {l} at index {i} is out of range for {num_classes} classes"
            )));
        }
        Ok(LabelVector {
            labels,
            num_classes,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i] as usize
    }
}

/// Affine calibration applied to a classifier, kept for provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationRecord {
    pub alpha: f64,
    pub beta: f64,
    pub v: Vec<f64>,
    /// Scale factor the other variance-ratio convention would have given.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha_alternate: Option<f64>,
}

/// Free-form provenance carried by a classifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMetadata {
    /// Where the weights came from: "rgc", "ncc", "random", "trained", ...
    pub source: String,
    /// Effective ridge used by the solver, when applicable.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    /// Calibration applied on top of the raw weights, when applicable.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub calibration: Option<CalibrationRecord>,
}

impl ModelMetadata {
    pub fn new(source: impl Into<String>) -> Self {
        ModelMetadata {
            source: source.into(),
            epsilon: None,
            calibration: None,
        }
    }

    pub fn with_epsilon(source: impl Into<String>, epsilon: f64) -> Self {
        ModelMetadata {
            source: source.into(),
            epsilon: Some(epsilon),
            calibration: None,
        }
    }
}

/// Linear classifier: scores are `W x + b`, prediction is the argmax row.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearClassifier {
    weights: Array2<f64>,
    bias: Array1<f64>,
    metadata: ModelMetadata,
}

impl LinearClassifier {
    pub fn new(
        weights: Array2<f64>,
        bias: Array1<f64>,
        metadata: ModelMetadata,
    ) -> Result<Self> {
        let (k, d) = weights.dim();
        if k == 0 || d == 0 {
            return Err(Error::Validation(format!(
                "classifier must have at least one class and one dimension, got {k}x{d}"
            )));
        }
        if bias.len() != k {
            return Err(Error::Validation(format!(
                "bias length {} does not match {k} classes",
                bias.len()
            )));
        }
        if weights.iter().any(|v| !v.is_finite()) || bias.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation(
                "classifier parameters must be finite".into(),
            ));
        }
        Ok(LinearClassifier {
            weights,
            bias,
            metadata,
        })
    }

    pub fn num_classes(&self) -> usize {
        self.weights.nrows()
    }

    pub fn dim(&self) -> usize {
        self.weights.ncols()
    }

    pub fn weights(&self) -> &Array2<f64> {
        &self.weights
    }

    pub fn bias(&self) -> &Array1<f64> {
        &self.bias
    }

    pub fn metadata(&self) -> &ModelMetadata {
        &self.metadata
    }

    pub fn metadata_mut(&mut self) -> &mut ModelMetadata {
        &mut self.metadata
    }

    /// Raw per-class scores `x W^T + b` for a batch of rows.
    pub fn scores(&self, x: &Array2<f64>) -> Array2<f64> {
        let mut s = x.dot(&self.weights.t());
        for mut row in s.rows_mut() {
            row += &self.bias;
        }
        s
    }
}
