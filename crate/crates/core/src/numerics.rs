//! Deterministic dense linear algebra: SPD factorization and solve,
//! symmetric eigendecomposition, compensated summation.
//!
//! Everything here is plain `f64`, single-threaded, and branch-stable, so
//! identical inputs give bitwise identical outputs across runs and thread
//! counts.

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};

/// Square matrix that is symmetric by construction.
///
/// Constructors either verify exact symmetry or build both triangles from
/// one, so no "almost symmetric" state can exist.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricMatrix {
    data: Array2<f64>,
}

impl SymmetricMatrix {
    /// Wrap an exactly symmetric matrix. Rejects non-square shapes,
    /// non-finite entries, and any `a[i][j] != a[j][i]`.
    pub fn new(data: Array2<f64>) -> Result<Self> {
        let (r, c) = data.dim();
        if r != c {
            return Err(Error::Validation(format!(
                "symmetric matrix must be square, got {r}x{c}"
            )));
        }
        if r == 0 {
            return Err(Error::Validation("symmetric matrix must be non-empty".into()));
        }
        for i in 0..r {
            for j in 0..c {
                let v = data[[i, j]];
                if !v.is_finite() {
                    return Err(Error::Validation(format!(
                        "non-finite entry {v} at ({i}, {j})"
                    )));
                }
                if j > i && data[[i, j]].to_bits() != data[[j, i]].to_bits() {
                    return Err(Error::Validation(format!(
                        "matrix is not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        Ok(SymmetricMatrix { data })
    }

    /// Build from the upper triangle of `data`, mirroring it into the lower.
    pub fn from_upper(mut data: Array2<f64>) -> Result<Self> {
        let (r, c) = data.dim();
        if r != c {
            return Err(Error::Validation(format!(
                "symmetric matrix must be square, got {r}x{c}"
            )));
        }
        for i in 0..r {
            for j in (i + 1)..c {
                data[[j, i]] = data[[i, j]];
            }
        }
        SymmetricMatrix::new(data)
    }

    /// d x d matrix with `diag` on the diagonal, zero elsewhere.
    pub fn from_diagonal(diag: &[f64]) -> Result<Self> {
        let d = diag.len();
        let mut m = Array2::zeros((d, d));
        for (i, &v) in diag.iter().enumerate() {
            m[[i, i]] = v;
        }
        SymmetricMatrix::new(m)
    }

    pub fn identity(dim: usize) -> Self {
        SymmetricMatrix {
            data: Array2::eye(dim),
        }
    }

    pub fn dim(&self) -> usize {
        self.data.nrows()
    }

    pub fn as_array(&self) -> &Array2<f64> {
        &self.data
    }

    pub fn into_array(self) -> Array2<f64> {
        self.data
    }

    pub fn trace(&self) -> f64 {
        stable_sum(self.data.diag().iter().copied())
    }

    pub fn frobenius_norm(&self) -> f64 {
        stable_sum(self.data.iter().map(|v| v * v)).sqrt()
    }

    /// Copy with `shift` added to every diagonal entry.
    pub fn add_ridge(&self, shift: f64) -> SymmetricMatrix {
        let mut data = self.data.clone();
        for i in 0..data.nrows() {
            data[[i, i]] += shift;
        }
        SymmetricMatrix { data }
    }
}

/// Lower-triangular Cholesky factor of an SPD matrix.
#[derive(Debug, Clone)]
pub struct SpdFactorization {
    lower: Array2<f64>,
}

impl SpdFactorization {
    pub fn dim(&self) -> usize {
        self.lower.nrows()
    }

    pub fn lower(&self) -> &Array2<f64> {
        &self.lower
    }
}

/// Cholesky factorization `a = L * L^T`.
///
/// Fails with the pivot index when a diagonal pivot is not strictly
/// positive.
pub fn spd_factor(a: &SymmetricMatrix) -> Result<SpdFactorization> {
    let d = a.dim();
    let m = a.as_array();
    let mut lower = Array2::<f64>::zeros((d, d));
    for j in 0..d {
        let mut s = m[[j, j]];
        for k in 0..j {
            s -= lower[[j, k]] * lower[[j, k]];
        }
        if !(s > 0.0) {
            return Err(Error::NotPositiveDefinite {
                pivot: j,
                detail: format!("pivot value {s}"),
            });
        }
        let ljj = s.sqrt();
        lower[[j, j]] = ljj;
        for i in (j + 1)..d {
            let mut s = m[[i, j]];
            for k in 0..j {
                s -= lower[[i, k]] * lower[[j, k]];
            }
            lower[[i, j]] = s / ljj;
        }
    }
    Ok(SpdFactorization { lower })
}

/// Solve `a * X = rhs` for a d x m right-hand side given `a = L * L^T`.
///
/// One factorization serves any number of right-hand-side columns.
pub fn spd_solve(f: &SpdFactorization, rhs: &Array2<f64>) -> Result<Array2<f64>> {
    let d = f.dim();
    if rhs.nrows() != d {
        return Err(Error::Validation(format!(
            "rhs has {} rows, factorization dimension is {d}",
            rhs.nrows()
        )));
    }
    let m = rhs.ncols();
    let l = &f.lower;
    let mut x = rhs.clone();
    // forward: L y = rhs
    for col in 0..m {
        for i in 0..d {
            let mut s = x[[i, col]];
            for k in 0..i {
                s -= l[[i, k]] * x[[k, col]];
            }
            x[[i, col]] = s / l[[i, i]];
        }
        // back: L^T x = y
        for i in (0..d).rev() {
            let mut s = x[[i, col]];
            for k in (i + 1)..d {
                s -= l[[k, i]] * x[[k, col]];
            }
            x[[i, col]] = s / l[[i, i]];
        }
    }
    Ok(x)
}

/// Solve for a single right-hand-side vector.
pub fn spd_solve_vec(f: &SpdFactorization, rhs: &Array1<f64>) -> Result<Array1<f64>> {
    let col = rhs
        .view()
        .into_shape_with_order((rhs.len(), 1))
        .expect("vector reshape");
    let x = spd_solve(f, &col.to_owned())?;
    Ok(x.column(0).to_owned())
}

/// Eigendecomposition of a symmetric matrix.
#[derive(Debug, Clone)]
pub struct SymEigen {
    /// Eigenvalues, sorted descending.
    pub eigenvalues: Array1<f64>,
    /// Orthonormal eigenvectors as columns, matching `eigenvalues` order.
    /// Each column's largest-magnitude component is non-negative.
    pub eigenvectors: Array2<f64>,
}

const JACOBI_MAX_SWEEPS: usize = 100;

/// Symmetric eigendecomposition by cyclic Jacobi rotations.
pub fn sym_eigen(a: &SymmetricMatrix) -> Result<SymEigen> {
    let d = a.dim();
    let mut m = a.as_array().clone();
    let mut v = Array2::<f64>::eye(d);

    let norm = a.frobenius_norm();
    let tol = 1e-14 * norm.max(f64::MIN_POSITIVE);

    let mut converged = d <= 1 || off_diagonal_norm(&m) <= tol;
    if !converged {
        for _sweep in 0..JACOBI_MAX_SWEEPS {
            for p in 0..d - 1 {
                for q in (p + 1)..d {
                    let apq = m[[p, q]];
                    if apq == 0.0 {
                        continue;
                    }
                    let app = m[[p, p]];
                    let aqq = m[[q, q]];
                    // rotation that annihilates m[p][q]
                    let theta = (aqq - app) / (2.0 * apq);
                    let t = if theta >= 0.0 {
                        1.0 / (theta + (1.0 + theta * theta).sqrt())
                    } else {
                        1.0 / (theta - (1.0 + theta * theta).sqrt())
                    };
                    let c = 1.0 / (1.0 + t * t).sqrt();
                    let s = t * c;

                    for k in 0..d {
                        let mkp = m[[k, p]];
                        let mkq = m[[k, q]];
                        m[[k, p]] = c * mkp - s * mkq;
                        m[[k, q]] = s * mkp + c * mkq;
                    }
                    for k in 0..d {
                        let mpk = m[[p, k]];
                        let mqk = m[[q, k]];
                        m[[p, k]] = c * mpk - s * mqk;
                        m[[q, k]] = s * mpk + c * mqk;
                    }
                    m[[p, q]] = 0.0;
                    m[[q, p]] = 0.0;
                    for k in 0..d {
                        let vkp = v[[k, p]];
                        let vkq = v[[k, q]];
                        v[[k, p]] = c * vkp - s * vkq;
                        v[[k, q]] = s * vkp + c * vkq;
                    }
                }
            }
            if off_diagonal_norm(&m) <= tol {
                converged = true;
                break;
            }
        }
    }
    if !converged {
        return Err(Error::NoConvergence(format!(
            "Jacobi eigensolver did not converge in {JACOBI_MAX_SWEEPS} sweeps (dim {d})"
        )));
    }

    // sort descending, stable in index for ties
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&i, &j| {
        m[[j, j]]
            .partial_cmp(&m[[i, i]])
            .expect("finite eigenvalues")
    });

    let mut eigenvalues = Array1::zeros(d);
    let mut eigenvectors = Array2::zeros((d, d));
    for (out, &src) in order.iter().enumerate() {
        eigenvalues[out] = m[[src, src]];
        // sign convention: largest-magnitude component non-negative
        let mut max_abs = 0.0_f64;
        let mut max_idx = 0;
        for k in 0..d {
            let x = v[[k, src]].abs();
            if x > max_abs {
                max_abs = x;
                max_idx = k;
            }
        }
        let flip = if v[[max_idx, src]] < 0.0 { -1.0 } else { 1.0 };
        for k in 0..d {
            eigenvectors[[k, out]] = flip * v[[k, src]];
        }
    }

    Ok(SymEigen {
        eigenvalues,
        eigenvectors,
    })
}

fn off_diagonal_norm(m: &Array2<f64>) -> f64 {
    let d = m.nrows();
    let mut acc = CompensatedSum::new();
    for i in 0..d {
        for j in 0..d {
            if i != j {
                acc.add(m[[i, j]] * m[[i, j]]);
            }
        }
    }
    acc.value().sqrt()
}

/// Streaming compensated (Neumaier) summation.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    compensation: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        CompensatedSum::default()
    }

    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.compensation += (self.sum - t) + x;
        } else {
            self.compensation += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.compensation
    }
}

/// Compensated sum of a sequence. The result depends only on the element
/// order, never on any internal chunking.
pub fn stable_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut acc = CompensatedSum::new();
    for v in values {
        acc.add(v);
    }
    acc.value()
}

/// Mean via compensated summation; 0 for an empty slice.
pub(crate) fn stable_mean(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut acc = CompensatedSum::new();
    let mut n = 0usize;
    for v in values {
        acc.add(v);
        n += 1;
    }
    if n == 0 {
        0.0
    } else {
        acc.value() / n as f64
    }
}
