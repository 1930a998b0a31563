//! Error type shared across the crate.
//!
//! Variants are grouped so callers (notably the CLI) can map them to stable
//! exit-code classes: configuration errors, data/format errors, and
//! numerical failures.

use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// I/O failure, reported with the path involved.
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Malformed file header or document structure (bad magic, version,
    /// dtype, reserved bytes, unparseable model document).
    #[error("format error: {0}")]
    Format(String),

    /// Declared sizes do not match the actual payload.
    #[error("length error: {0}")]
    Length(String),

    /// Data fails an invariant (non-finite element, label out of range,
    /// shape mismatch, ragged CSV row, empty class, ...).
    #[error("validation error: {0}")]
    Validation(String),

    /// Invalid configuration or specification handed to an operation.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// A symmetric factorization hit a non-positive pivot.
    #[error("matrix is not positive definite (pivot {pivot}): {detail}")]
    NotPositiveDefinite { pivot: usize, detail: String },

    /// An iterative numerical method hit its iteration cap.
    #[error("no convergence: {0}")]
    NoConvergence(String),

    /// Weight rows have zero variance; calibration cannot rescale them.
    #[error("degenerate weights: {0}")]
    DegenerateWeights(String),

    /// Training produced a non-finite loss or parameters.
    #[error("training diverged at iteration {iteration} (learning rate {learning_rate})")]
    Diverged { iteration: usize, learning_rate: f64 },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
