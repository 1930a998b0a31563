//! Per-class means and the pooled within-class covariance, plus PCA on
//! class-mean-centered data.

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};
use crate::numerics::{self, CompensatedSum, SymmetricMatrix};
use crate::types::{FeatureMatrix, LabelVector};

/// Sufficient statistics of labeled features: class means, counts, and a
/// single covariance pooled over all classes.
#[derive(Debug, Clone)]
pub struct ClassStatistics {
    means: Array2<f64>,
    counts: Vec<usize>,
    pooled_cov: SymmetricMatrix,
    total_count: usize,
    rank_warning: Option<String>,
}

impl ClassStatistics {
    pub fn num_classes(&self) -> usize {
        self.means.nrows()
    }

    pub fn dim(&self) -> usize {
        self.means.ncols()
    }

    /// K x d matrix of class means.
    pub fn means(&self) -> &Array2<f64> {
        &self.means
    }

    pub fn mean(&self, class: usize) -> ndarray::ArrayView1<'_, f64> {
        self.means.row(class)
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn pooled_cov(&self) -> &SymmetricMatrix {
        &self.pooled_cov
    }

    pub fn total_count(&self) -> usize {
        self.total_count
    }

    /// Set when the sample count cannot support a full-rank covariance;
    /// the ridge regularizer downstream still makes the solve well-posed.
    pub fn rank_warning(&self) -> Option<&str> {
        self.rank_warning.as_deref()
    }
}

/// Compute class means and the pooled covariance
/// `(1/N) * sum_i (x_i - mu_{y_i})(x_i - mu_{y_i})^T`.
///
/// Two passes: means first, then centered outer products, both with
/// compensated accumulation, so the result is insensitive to sample order.
pub fn fit_statistics(x: &FeatureMatrix, y: &LabelVector) -> Result<ClassStatistics> {
    let n = x.rows();
    let d = x.cols();
    let k = y.num_classes();
    if y.len() != n {
        return Err(Error::Validation(format!(
            "{} labels for {n} feature rows",
            y.len()
        )));
    }

    let mut counts = vec![0usize; k];
    for i in 0..n {
        counts[y.label(i)] += 1;
    }
    if let Some(empty) = counts.iter().position(|&c| c == 0) {
        return Err(Error::Validation(format!(
            "class {empty} has no samples"
        )));
    }

    // pass 1: means
    let data = x.as_array();
    let mut sums = vec![CompensatedSum::new(); k * d];
    for i in 0..n {
        let c = y.label(i);
        let row = data.row(i);
        for j in 0..d {
            sums[c * d + j].add(row[j]);
        }
    }
    let mut means = Array2::zeros((k, d));
    for c in 0..k {
        for j in 0..d {
            means[[c, j]] = sums[c * d + j].value() / counts[c] as f64;
        }
    }

    // pass 2: pooled covariance, upper triangle only, mirrored afterwards
    let mut cov_acc = vec![CompensatedSum::new(); d * d];
    let mut centered = vec![0.0f64; d];
    for i in 0..n {
        let c = y.label(i);
        let row = data.row(i);
        for j in 0..d {
            centered[j] = row[j] - means[[c, j]];
        }
        for a in 0..d {
            let ca = centered[a];
            for b in a..d {
                cov_acc[a * d + b].add(ca * centered[b]);
            }
        }
    }
    let mut cov = Array2::zeros((d, d));
    for a in 0..d {
        for b in a..d {
            cov[[a, b]] = cov_acc[a * d + b].value() / n as f64;
        }
    }
    let pooled_cov = SymmetricMatrix::from_upper(cov)?;

    // With K class means subtracted, the pooled covariance has rank at
    // most N - K; below d it is singular and only the downstream ridge
    // keeps the solve well-posed.
    let rank_warning = if n < k + d {
        Some(format!(
            "{n} samples over {k} classes in dimension {d}: pooled covariance is \
             rank-deficient (rank at most {})",
            n - k
        ))
    } else {
        None
    };

    Ok(ClassStatistics {
        means,
        counts,
        pooled_cov,
        total_count: n,
        rank_warning,
    })
}

/// PCA basis fitted on class-mean-centered data. The covariance of the
/// centered rows is exactly the pooled covariance, so the basis comes from
/// its eigendecomposition.
#[derive(Debug, Clone)]
pub struct CenteredPca {
    /// d x out_dim, orthonormal columns ordered by decreasing eigenvalue.
    pub basis: Array2<f64>,
    /// All d eigenvalues in decreasing order.
    pub eigenvalues: Array1<f64>,
    /// Fraction of total variance captured by the retained columns.
    pub explained_variance_ratio: f64,
}

pub fn centered_pca(s: &ClassStatistics, out_dim: usize) -> Result<CenteredPca> {
    let d = s.dim();
    if out_dim == 0 || out_dim > d {
        return Err(Error::Validation(format!(
            "out_dim {out_dim} must be in 1..={d}"
        )));
    }
    let eig = numerics::sym_eigen(s.pooled_cov())?;
    let basis = eig.eigenvectors.slice(ndarray::s![.., 0..out_dim]).to_owned();
    // covariance eigenvalues are >= 0 up to rounding; clamp for the ratio
    let total: f64 = numerics::stable_sum(eig.eigenvalues.iter().map(|v| v.max(0.0)));
    let kept: f64 = numerics::stable_sum(
        eig.eigenvalues.iter().take(out_dim).map(|v| v.max(0.0)),
    );
    let explained_variance_ratio = if total > 0.0 { kept / total } else { 1.0 };
    Ok(CenteredPca {
        basis,
        eigenvalues: eig.eigenvalues,
        explained_variance_ratio,
    })
}

/// Replace each row with `V^T (x_i - mu_{y_i})` where `V` holds the top
/// `out_dim` eigenvectors of the covariance of class-mean-centered data.
pub fn project_centered(
    x: &FeatureMatrix,
    y: &LabelVector,
    s: &ClassStatistics,
    out_dim: usize,
) -> Result<FeatureMatrix> {
    let pca = centered_pca(s, out_dim)?;
    project_centered_with(x, y, s, &pca)
}

/// Projection against an already-fitted basis.
pub fn project_centered_with(
    x: &FeatureMatrix,
    y: &LabelVector,
    s: &ClassStatistics,
    pca: &CenteredPca,
) -> Result<FeatureMatrix> {
    let n = x.rows();
    let d = x.cols();
    if d != s.dim() {
        return Err(Error::Validation(format!(
            "feature dim {d} does not match statistics dim {}",
            s.dim()
        )));
    }
    if y.len() != n {
        return Err(Error::Validation(format!(
            "{} labels for {n} feature rows",
            y.len()
        )));
    }
    if y.num_classes() != s.num_classes() {
        return Err(Error::Validation(format!(
            "labels declare {} classes, statistics were fitted on {}",
            y.num_classes(),
            s.num_classes()
        )));
    }
    let mut centered = x.as_array().clone();
    for i in 0..n {
        let mu = s.means.row(y.label(i));
        let mut row = centered.row_mut(i);
        row -= &mu;
    }
    let projected = centered.dot(&pca.basis);
    FeatureMatrix::from_array(projected)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::GaussianSource;
    use approx::assert_abs_diff_eq;

    fn four_point() -> (FeatureMatrix, LabelVector) {
        let x = FeatureMatrix::from_vec(
            4,
            2,
            vec![1.0, 1.0, 1.0, -1.0, -1.0, 1.0, -1.0, -1.0],
        )
        .unwrap();
        let y = LabelVector::new(vec![0, 0, 1, 1], 2).unwrap();
        (x, y)
    }

    #[test]
    fn four_point_hand_computation() {
        let (x, y) = four_point();
        let s = fit_statistics(&x, &y).unwrap();
        assert_eq!(s.means()[[0, 0]], 1.0);
        assert_eq!(s.means()[[0, 1]], 0.0);
        assert_eq!(s.means()[[1, 0]], -1.0);
        assert_eq!(s.means()[[1, 1]], 0.0);
        let cov = s.pooled_cov().as_array();
        assert_eq!(cov[[0, 0]], 0.0);
        assert_eq!(cov[[0, 1]], 0.0);
        assert_eq!(cov[[1, 1]], 1.0);
        assert_eq!(s.counts(), &[2, 2]);
        assert_eq!(s.total_count(), 4);
        assert!(s.rank_warning().is_none());
    }

    #[test]
    fn single_sample_per_class_gives_zero_covariance() {
        let x = FeatureMatrix::from_vec(2, 2, vec![3.0, 4.0, -1.0, 2.0]).unwrap();
        let y = LabelVector::new(vec![0, 1], 2).unwrap();
        let s = fit_statistics(&x, &y).unwrap();
        assert!(s.pooled_cov().as_array().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn translation_leaves_covariance_fixed() {
        let (x, y) = four_point();
        let s0 = fit_statistics(&x, &y).unwrap();
        let shifted = FeatureMatrix::from_array(x.as_array() + 7.5).unwrap();
        let s1 = fit_statistics(&shifted, &y).unwrap();
        assert_eq!(s0.pooled_cov().as_array(), s1.pooled_cov().as_array());
        for c in 0..2 {
            for j in 0..2 {
                assert_abs_diff_eq!(
                    s1.means()[[c, j]],
                    s0.means()[[c, j]] + 7.5,
                    epsilon = 1e-12
                );
            }
        }
    }

    #[test]
    fn empty_class_is_reported() {
        let x = FeatureMatrix::from_vec(2, 1, vec![0.0, 1.0]).unwrap();
        let y = LabelVector::new(vec![0, 0], 2).unwrap();
        match fit_statistics(&x, &y) {
            Err(Error::Validation(msg)) => assert!(msg.contains("class 1"), "{msg}"),
            other => panic!("expected empty-class error, got {other:?}"),
        }
    }

    #[test]
    fn rank_deficiency_is_flagged() {
        // N - K = 0 < d: covariance is all zeros, warning set
        let x = FeatureMatrix::from_vec(2, 3, vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
        let y = LabelVector::new(vec![0, 1], 2).unwrap();
        let s = fit_statistics(&x, &y).unwrap();
        assert!(s.rank_warning().is_some());

        // plenty of samples: no warning
        let mut g = GaussianSource::new(77);
        let mut data = vec![0.0; 40 * 2];
        g.fill_normal(&mut data);
        let x = FeatureMatrix::from_vec(40, 2, data).unwrap();
        let labels: Vec<u32> = (0..40).map(|i| i % 2).collect();
        let y = LabelVector::new(labels, 2).unwrap();
        assert!(fit_statistics(&x, &y).unwrap().rank_warning().is_none());
    }

    #[test]
    fn pooled_matches_brute_force_double_loop() {
        // count-weighted average of per-class (1/|C_k|) covariances
        let mut g = GaussianSource::new(11);
        let n = 30;
        let d = 3;
        let mut data = vec![0.0; n * d];
        g.fill_normal(&mut data);
        let x = FeatureMatrix::from_vec(n, d, data).unwrap();
        let labels: Vec<u32> = (0..n as u32).map(|i| i % 3).collect();
        let y = LabelVector::new(labels, 3).unwrap();
        let s = fit_statistics(&x, &y).unwrap();

        let mut brute = Array2::<f64>::zeros((d, d));
        for c in 0..3 {
            let rows: Vec<usize> = (0..n).filter(|&i| y.label(i) == c).collect();
            let m = rows.len() as f64;
            let mut mu = vec![0.0; d];
            for &i in &rows {
                for j in 0..d {
                    mu[j] += x.as_array()[[i, j]] / m;
                }
            }
            let mut cov_c = Array2::<f64>::zeros((d, d));
            for &i in &rows {
                for a in 0..d {
                    for b in 0..d {
                        cov_c[[a, b]] += (x.as_array()[[i, a]] - mu[a])
                            * (x.as_array()[[i, b]] - mu[b])
                            / m;
                    }
                }
            }
            brute = brute + cov_c * (m / n as f64);
        }
        for a in 0..d {
            for b in 0..d {
                assert_abs_diff_eq!(
                    s.pooled_cov().as_array()[[a, b]],
                    brute[[a, b]],
                    epsilon = 1e-12
                );
            }
        }
    }

    #[test]
    fn permutation_invariant_to_tolerance() {
        let mut g = GaussianSource::new(21);
        let n = 200;
        let d = 4;
        let mut data = vec![0.0; n * d];
        g.fill_normal(&mut data);
        let labels: Vec<u32> = (0..n as u32).map(|i| i % 5).collect();

        let x = FeatureMatrix::from_vec(n, d, data.clone()).unwrap();
        let y = LabelVector::new(labels.clone(), 5).unwrap();
        let s0 = fit_statistics(&x, &y).unwrap();

        // reverse the sample order
        let mut rev_data = Vec::with_capacity(n * d);
        for i in (0..n).rev() {
            rev_data.extend_from_slice(&data[i * d..(i + 1) * d]);
        }
        let rev_labels: Vec<u32> = labels.iter().rev().copied().collect();
        let xr = FeatureMatrix::from_vec(n, d, rev_data).unwrap();
        let yr = LabelVector::new(rev_labels, 5).unwrap();
        let s1 = fit_statistics(&xr, &yr).unwrap();

        for (a, b) in s0
            .pooled_cov()
            .as_array()
            .iter()
            .zip(s1.pooled_cov().as_array().iter())
        {
            assert!((a - b).abs() <= 1e-12, "{a} vs {b}");
        }
        for (a, b) in s0.means().iter().zip(s1.means().iter()) {
            assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn trace_equals_mean_squared_distance() {
        let mut g = GaussianSource::new(31);
        let n = 120;
        let d = 5;
        let mut data = vec![0.0; n * d];
        g.fill_normal(&mut data);
        let x = FeatureMatrix::from_vec(n, d, data).unwrap();
        let labels: Vec<u32> = (0..n as u32).map(|i| i % 4).collect();
        let y = LabelVector::new(labels, 4).unwrap();
        let s = fit_statistics(&x, &y).unwrap();

        let mut acc = CompensatedSum::new();
        for i in 0..n {
            let mu = s.means().row(y.label(i));
            for j in 0..d {
                let diff = x.as_array()[[i, j]] - mu[j];
                acc.add(diff * diff);
            }
        }
        let msd = acc.value() / n as f64;
        let tr = s.pooled_cov().trace();
        assert!((tr - msd).abs() <= 1e-10 * tr.abs().max(1.0));
    }

    #[test]
    fn full_dim_projection_preserves_distances() {
        let mut g = GaussianSource::new(41);
        let n = 40;
        let d = 4;
        let mut data = vec![0.0; n * d];
        g.fill_normal(&mut data);
        let x = FeatureMatrix::from_vec(n, d, data).unwrap();
        let labels: Vec<u32> = (0..n as u32).map(|i| i % 2).collect();
        let y = LabelVector::new(labels, 2).unwrap();
        let s = fit_statistics(&x, &y).unwrap();
        let p = project_centered(&x, &y, &s, d).unwrap();

        // centered rows, for reference distances
        let mut centered = x.as_array().clone();
        for i in 0..n {
            let mu = s.means().row(y.label(i));
            let mut row = centered.row_mut(i);
            row -= &mu;
        }
        for i in 0..5 {
            for j in 5..10 {
                let d0: f64 = (0..d)
                    .map(|t| (centered[[i, t]] - centered[[j, t]]).powi(2))
                    .sum::<f64>()
                    .sqrt();
                let d1: f64 = (0..d)
                    .map(|t| (p.as_array()[[i, t]] - p.as_array()[[j, t]]).powi(2))
                    .sum::<f64>()
                    .sqrt();
                assert!((d0 - d1).abs() <= 1e-10, "{d0} vs {d1}");
            }
        }
    }

    #[test]
    fn rank_one_data_explained_by_single_component() {
        // centered data lies on a line
        let n = 50;
        let mut data = Vec::with_capacity(n * 3);
        for i in 0..n {
            let t = i as f64 / n as f64 - 0.5;
            data.extend_from_slice(&[2.0 * t, -t, 0.5 * t]);
        }
        let x = FeatureMatrix::from_vec(n, 3, data).unwrap();
        let y = LabelVector::new(vec![0; n], 1).unwrap();
        let s = fit_statistics(&x, &y).unwrap();
        let pca = centered_pca(&s, 1).unwrap();
        assert!(pca.explained_variance_ratio > 1.0 - 1e-10);
        assert!(pca.eigenvalues[1].abs() <= 1e-12 * pca.eigenvalues[0]);
        let p = project_centered(&x, &y, &s, 1).unwrap();
        assert_eq!(p.cols(), 1);
    }

    #[test]
    fn projection_shape_contract() {
        let mut g = GaussianSource::new(51);
        let n = 64;
        let d = 32;
        let mut data = vec![0.0; n * d];
        g.fill_normal(&mut data);
        let x = FeatureMatrix::from_vec(n, d, data).unwrap();
        let labels: Vec<u32> = (0..n as u32).map(|i| i % 4).collect();
        let y = LabelVector::new(labels, 4).unwrap();
        let s = fit_statistics(&x, &y).unwrap();
        let p = project_centered(&x, &y, &s, 2).unwrap();
        assert_eq!((p.rows(), p.cols()), (n, 2));
        assert!(matches!(
            project_centered(&x, &y, &s, d + 1),
            Err(Error::Validation(_))
        ));
    }
}
