//! Shared fixtures for the criterion benchmarks.

use rgc::synth::{generate, CovarianceMode, SynthSpec};
use rgc::types::{FeatureMatrix, LabelVector};

/// Deterministic shared-covariance dataset sized for benchmarking.
pub fn dataset(num_classes: usize, dim: usize, per_class: usize) -> (FeatureMatrix, LabelVector) {
    let spec = SynthSpec {
        num_classes,
        dim,
        samples_per_class: per_class,
        seed: 0xBE7C4,
        mean_scale: 0.2,
        covariance_mode: CovarianceMode::Shared,
        condition_number: 50.0,
    };
    let (x, y, _) = generate(&spec).expect("valid benchmark spec");
    (x, y)
}
