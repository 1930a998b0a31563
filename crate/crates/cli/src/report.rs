//! JSON report documents emitted by the CLI.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

/// Iterations until the training loss first dropped below the shared
/// threshold, or the marker string "not-reached".
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ItersToThreshold {
    Reached(usize),
    Marker(String),
}

impl ItersToThreshold {
    pub fn not_reached() -> Self {
        ItersToThreshold::Marker("not-reached".to_string())
    }
}

impl fmt::Display for ItersToThreshold {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ItersToThreshold::Reached(n) => write!(f, "{n}"),
            ItersToThreshold::Marker(s) => write!(f, "{s}"),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MethodRecord {
    pub method: String,
    pub init_accuracy: f64,
    pub init_ce: f64,
    pub final_accuracy: f64,
    pub final_ce: f64,
    pub iters_to_threshold: ItersToThreshold,
    /// Wall-clock timing of the fit alone; the only non-deterministic
    /// field in the report.
    pub wallclock_fit_seconds: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchReport {
    pub seed: u64,
    pub threshold: f64,
    pub threshold_margin: f64,
    pub learning_rate: f64,
    pub iterations: usize,
    pub weight_decay: f64,
    pub epsilon: f64,
    pub methods: Vec<MethodRecord>,
}

impl BenchReport {
    pub fn write_json(&self, path: impl AsRef<Path>) -> rgc::Result<()> {
        write_json_doc(path.as_ref(), self)
    }
}

#[derive(Serialize)]
struct EvalReport {
    accuracy: f64,
    mean_ce: f64,
    samples: usize,
}

pub fn write_eval_json(
    path: &Path,
    accuracy: f64,
    mean_ce: f64,
    samples: usize,
) -> rgc::Result<()> {
    write_json_doc(
        path,
        &EvalReport {
            accuracy,
            mean_ce,
            samples,
        },
    )
}

fn write_json_doc<T: Serialize>(path: &Path, doc: &T) -> rgc::Result<()> {
    let text = serde_json::to_string_pretty(doc)
        .map_err(|e| rgc::Error::Format(format!("report serialization failed: {e}")))?;
    std::fs::write(path, text + "\n").map_err(|e| rgc::Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}
