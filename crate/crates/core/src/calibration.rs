//! Affine calibration of classifier weights against a reference weight set.
//!
//! An affine map `w_k -> alpha*w_k + v`, `b_k -> alpha*b_k + beta` with
//! `alpha > 0` never changes the argmax, so prediction is preserved while
//! the score scale is brought in line with the reference. The scale is
//! chosen so the first moment and the row-norm variance of the calibrated
//! weights match the reference's:
//!
//! ```text
//! alpha = sqrt(Var(w_ref) / Var(w_new)),  Var(w) = E(|w|^2) - |E(w)|^2
//! v     = E(w_ref) - alpha * E(w_new)
//! beta  = E(b_ref) - alpha * E(b_new)
//! ```
//!
//! with expectations taken uniformly over each model's own class rows (the
//! two models may have different class counts). An inverted-ratio variant
//! `alpha = sqrt(Var(w_new) / Var(w_ref))` exists for comparison; it does
//! not satisfy the variance-matching constraint above.

use ndarray::Array1;

use crate::error::{Error, Result};
use crate::numerics::{stable_mean, stable_sum};
use crate::types::{CalibrationRecord, LinearClassifier};

/// Affine calibration parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationParams {
    pub alpha: f64,
    pub beta: f64,
    pub v: Array1<f64>,
}

struct WeightMoments {
    mean_row: Array1<f64>,
    /// E(|w|^2) - |E(w)|^2 over class rows.
    variance: f64,
    mean_bias: f64,
    mean_sq_norm: f64,
}

fn weight_moments(c: &LinearClassifier) -> WeightMoments {
    let d = c.dim();
    let mut mean_row = Array1::zeros(d);
    for j in 0..d {
        mean_row[j] = stable_mean(c.weights().column(j).iter().copied());
    }
    let mean_sq_norm = stable_mean(
        c.weights()
            .rows()
            .into_iter()
            .map(|r| stable_sum(r.iter().map(|v| v * v))),
    );
    let mean_norm_sq = stable_sum(mean_row.iter().map(|v| v * v));
    let variance = mean_sq_norm - mean_norm_sq;
    let mean_bias = stable_mean(c.bias().iter().copied());
    WeightMoments {
        mean_row,
        variance,
        mean_bias,
        mean_sq_norm,
    }
}

fn check_variance(var: f64, scale: f64, which: &str) -> Result<f64> {
    // identical rows give a variance of zero up to rounding noise
    if var <= 1e-12 * scale.max(f64::MIN_POSITIVE) {
        return Err(Error::DegenerateWeights(format!(
            "{which} weight rows have zero variance; cannot match scales"
        )));
    }
    Ok(var)
}

/// Variance of the reference divided by variance of the new model, i.e.
/// the direction that makes `Var(alpha*w_new + v) == Var(w_ref)`.
pub fn compute_calibration(
    new: &LinearClassifier,
    reference: &LinearClassifier,
) -> Result<CalibrationParams> {
    compute_with(new, reference, false)
}

/// Inverted-ratio variant, provided for comparison only: the resulting
/// `alpha` scales the new weights by `sqrt(Var(w_new)/Var(w_ref))`.
pub fn compute_calibration_inverted(
    new: &LinearClassifier,
    reference: &LinearClassifier,
) -> Result<CalibrationParams> {
    compute_with(new, reference, true)
}

fn compute_with(
    new: &LinearClassifier,
    reference: &LinearClassifier,
    inverted: bool,
) -> Result<CalibrationParams> {
    if new.dim() != reference.dim() {
        return Err(Error::Validation(format!(
            "model dim {} does not match reference dim {}",
            new.dim(),
            reference.dim()
        )));
    }
    let m_new = weight_moments(new);
    let m_ref = weight_moments(reference);
    let var_new = check_variance(m_new.variance, m_new.mean_sq_norm, "new")?;
    let var_ref = check_variance(m_ref.variance, m_ref.mean_sq_norm, "reference")?;
    let alpha = if inverted {
        (var_new / var_ref).sqrt()
    } else {
        (var_ref / var_new).sqrt()
    };
    let v = &m_ref.mean_row - &(&m_new.mean_row * alpha);
    let beta = m_ref.mean_bias - alpha * m_new.mean_bias;
    Ok(CalibrationParams { alpha, beta, v })
}

/// Apply `w_k -> alpha*w_k + v`, `b_k -> alpha*b_k + beta` and record the
/// calibration in the model metadata.
pub fn apply_calibration(
    c: &LinearClassifier,
    p: &CalibrationParams,
) -> Result<LinearClassifier> {
    if !(p.alpha > 0.0) || !p.alpha.is_finite() {
        return Err(Error::Config(format!(
            "alpha must be positive and finite, got {}; a non-positive scale \
             breaks argmax invariance",
            p.alpha
        )));
    }
    if p.v.len() != c.dim() {
        return Err(Error::Validation(format!(
            "shift vector length {} does not match model dim {}",
            p.v.len(),
            c.dim()
        )));
    }
    let mut weights = c.weights() * p.alpha;
    for mut row in weights.rows_mut() {
        row += &p.v;
    }
    let bias = c.bias() * p.alpha + p.beta;
    let mut metadata = c.metadata().clone();
    metadata.calibration = Some(CalibrationRecord {
        alpha: p.alpha,
        beta: p.beta,
        v: p.v.to_vec(),
        alpha_alternate: None,
    });
    LinearClassifier::new(weights, bias, metadata)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::GaussianSource;
    use crate::solver::predict;
    use crate::types::{FeatureMatrix, ModelMetadata};
    use approx::assert_abs_diff_eq;
    use ndarray::{Array1, Array2};

    fn classifier(rows: Vec<Vec<f64>>, bias: Vec<f64>) -> LinearClassifier {
        let k = rows.len();
        let d = rows[0].len();
        let flat: Vec<f64> = rows.into_iter().flatten().collect();
        LinearClassifier::new(
            Array2::from_shape_vec((k, d), flat).unwrap(),
            Array1::from_vec(bias),
            ModelMetadata::new("trained"),
        )
        .unwrap()
    }

    #[test]
    fn self_calibration_is_identity() {
        let c = classifier(vec![vec![1.0, 0.0], vec![-1.0, 2.0]], vec![0.5, -0.5]);
        let p = compute_calibration(&c, &c).unwrap();
        assert_abs_diff_eq!(p.alpha, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(p.beta, 0.0, epsilon = 1e-12);
        for &vj in p.v.iter() {
            assert_abs_diff_eq!(vj, 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn two_row_hand_computation() {
        // oracle: direct formula on the four vectors.
        // new {(1,0),(-1,0)}: E(w)=(0,0), Var=1
        // ref {(2,1),(-2,1)}: E(w')=(0,1), E|w'|^2=5, Var=4
        let new = classifier(vec![vec![1.0, 0.0], vec![-1.0, 0.0]], vec![0.25, -0.25]);
        let reference = classifier(vec![vec![2.0, 1.0], vec![-2.0, 1.0]], vec![1.0, 0.0]);
        let p = compute_calibration(&new, &reference).unwrap();
        assert_abs_diff_eq!(p.alpha, 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(p.v[0], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(p.v[1], 1.0, epsilon = 1e-12);
        // beta = E(b') - alpha E(b) = 0.5 - 2 * 0 = 0.5
        assert_abs_diff_eq!(p.beta, 0.5, epsilon = 1e-12);

        // inverted variant flips the ratio
        let q = compute_calibration_inverted(&new, &reference).unwrap();
        assert_abs_diff_eq!(q.alpha, 0.5, epsilon = 1e-12);
    }

    #[test]
    fn identical_rows_are_degenerate() {
        let new = classifier(vec![vec![1.0, 2.0], vec![1.0, 2.0]], vec![0.0, 0.0]);
        let reference = classifier(vec![vec![2.0, 1.0], vec![-2.0, 1.0]], vec![0.0, 0.0]);
        assert!(matches!(
            compute_calibration(&new, &reference),
            Err(Error::DegenerateWeights(_))
        ));
        assert!(matches!(
            compute_calibration(&reference, &new),
            Err(Error::DegenerateWeights(_))
        ));
    }

    #[test]
    fn apply_identity_is_noop() {
        let c = classifier(vec![vec![1.0, 0.0], vec![-1.0, 2.0]], vec![0.5, -0.5]);
        let p = CalibrationParams {
            alpha: 1.0,
            beta: 0.0,
            v: Array1::zeros(2),
        };
        let out = apply_calibration(&c, &p).unwrap();
        assert_eq!(out.weights(), c.weights());
        assert_eq!(out.bias(), c.bias());
        assert!(out.metadata().calibration.is_some());
    }

    #[test]
    fn apply_rejects_non_positive_alpha() {
        let c = classifier(vec![vec![1.0], vec![-1.0]], vec![0.0, 0.0]);
        for alpha in [0.0, -1.0, f64::NAN] {
            let p = CalibrationParams {
                alpha,
                beta: 0.0,
                v: Array1::zeros(1),
            };
            assert!(apply_calibration(&c, &p).is_err(), "alpha {alpha}");
        }
    }

    #[test]
    fn doubling_scale_doubles_weights() {
        let c = classifier(vec![vec![10.0, 0.0], vec![-10.0, 0.0]], vec![-5.0, -5.0]);
        let p = CalibrationParams {
            alpha: 2.0,
            beta: 0.0,
            v: Array1::zeros(2),
        };
        let out = apply_calibration(&c, &p).unwrap();
        assert_eq!(out.weights()[[0, 0]], 20.0);
        assert_eq!(out.weights()[[1, 0]], -20.0);
        assert_eq!(out.bias()[0], -10.0);
    }

    #[test]
    fn argmax_invariance_on_random_points() {
        let c = classifier(
            vec![vec![1.0, -0.5, 0.25], vec![-0.75, 0.3, 1.0], vec![0.1, 0.9, -1.1]],
            vec![0.2, -0.1, 0.05],
        );
        let p = CalibrationParams {
            alpha: 37.5,
            beta: -4.0,
            v: Array1::from_vec(vec![3.0, -2.0, 0.5]),
        };
        let cal = apply_calibration(&c, &p).unwrap();
        let mut g = GaussianSource::new(12);
        let mut data = vec![0.0; 500 * 3];
        g.fill_normal(&mut data);
        let x = FeatureMatrix::from_vec(500, 3, data).unwrap();
        // only compare points with a clear pre-calibration score gap
        let scores = c.scores(x.as_array());
        let before = predict(&c, &x).unwrap();
        let after = predict(&cal, &x).unwrap();
        for i in 0..500 {
            let mut row: Vec<f64> = scores.row(i).to_vec();
            row.sort_by(|a, b| b.partial_cmp(a).unwrap());
            if row[0] - row[1] > 1e-9 {
                assert_eq!(before.labels()[i], after.labels()[i], "row {i}");
            }
        }
    }

    #[test]
    fn moments_match_after_calibration() {
        let mut g = GaussianSource::new(55);
        let make = |g: &mut GaussianSource, k: usize, d: usize, scale: f64| {
            let mut w = vec![0.0; k * d];
            g.fill_normal(&mut w);
            let w: Vec<f64> = w.into_iter().map(|v| v * scale + 0.3).collect();
            let mut b = vec![0.0; k];
            g.fill_normal(&mut b);
            LinearClassifier::new(
                Array2::from_shape_vec((k, d), w).unwrap(),
                Array1::from_vec(b),
                ModelMetadata::new("random"),
            )
            .unwrap()
        };
        // different class counts on purpose
        let new = make(&mut g, 5, 4, 10.0);
        let reference = make(&mut g, 9, 4, 0.2);
        let p = compute_calibration(&new, &reference).unwrap();
        let cal = apply_calibration(&new, &p).unwrap();

        let m_cal = weight_moments(&cal);
        let m_ref = weight_moments(&reference);
        for j in 0..4 {
            assert!(
                (m_cal.mean_row[j] - m_ref.mean_row[j]).abs()
                    <= 1e-10 * m_ref.mean_row[j].abs().max(1.0)
            );
        }
        assert!(
            (m_cal.variance - m_ref.variance).abs() <= 1e-10 * m_ref.variance.abs(),
            "{} vs {}",
            m_cal.variance,
            m_ref.variance
        );
        assert!(
            (m_cal.mean_bias - m_ref.mean_bias).abs()
                <= 1e-10 * m_ref.mean_bias.abs().max(1.0)
        );

        // idempotence: calibrating the calibrated model again is identity
        let p2 = compute_calibration(&cal, &reference).unwrap();
        assert_abs_diff_eq!(p2.alpha, 1.0, epsilon = 1e-10);
        assert_abs_diff_eq!(p2.beta, 0.0, epsilon = 1e-10);
        for &vj in p2.v.iter() {
            assert_abs_diff_eq!(vj, 0.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn dim_mismatch_is_rejected() {
        let a = classifier(vec![vec![1.0, 0.0], vec![0.0, 1.0]], vec![0.0, 0.0]);
        let b = classifier(vec![vec![1.0], vec![-1.0]], vec![0.0, 0.0]);
        assert!(matches!(
            compute_calibration(&a, &b),
            Err(Error::Validation(_))
        ));
    }
}
