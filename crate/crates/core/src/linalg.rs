//! Dense linear-algebra kernel shared by all learners: economy SVD with a
//! deterministic sign convention, regularized symmetric solves, and
//! minimum-norm pseudo-inverse application.
//!
//! All operations are pure functions over immutable inputs and are safe to
//! call concurrently.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Asymmetry beyond this (relative to the largest entry) is rejected instead
/// of silently symmetrized.
const GROSS_ASYMMETRY: f64 = 1e-6;

/// Rank-truncated factorization of a data matrix: `m = u * diag(sigma) * v'`.
///
/// Singular values are strictly positive and non-increasing; `u` and `v` have
/// orthonormal columns. The sign of each factor pair is fixed so that the
/// largest-magnitude entry of every right singular vector is non-negative,
/// making factorizations reproducible across runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EconSvd {
    /// Left singular vectors, `n x r`.
    pub u: DMatrix<f64>,
    /// Singular values, length `r`, descending.
    pub sigma: DVector<f64>,
    /// Right singular vectors, `d x r`.
    pub v: DMatrix<f64>,
}

impl EconSvd {
    /// Number of retained singular values.
    pub fn rank(&self) -> usize {
        self.sigma.len()
    }

    /// Column dimension of the factored matrix.
    pub fn dim(&self) -> usize {
        self.v.nrows()
    }

    /// `u * diag(sigma) * v'`, for reconstruction checks.
    pub fn reconstruct(&self) -> DMatrix<f64> {
        let mut us = self.u.clone();
        for (j, s) in self.sigma.iter().enumerate() {
            us.column_mut(j).scale_mut(*s);
        }
        &us * self.v.transpose()
    }

    /// `v * diag(sigma^2) * v'`, the Gram matrix of the factored data.
    pub fn gram(&self) -> DMatrix<f64> {
        let mut vs = self.v.clone();
        for (j, s) in self.sigma.iter().enumerate() {
            vs.column_mut(j).scale_mut(*s);
        }
        &vs * vs.transpose()
    }
}

fn all_finite(m: &DMatrix<f64>) -> bool {
    m.iter().all(|x| x.is_finite())
}

const JACOBI_MAX_SWEEPS: usize = 128;

/// One-sided Jacobi SVD of a tall matrix (`n >= d`): rotates column pairs
/// until mutually orthogonal, then reads singular values off column norms.
/// Returns unsorted `(scaled_columns, v)` with `v` orthogonal `d x d`.
///
/// Chosen over a bidiagonalization SVD because it stays exact on
/// rank-deficient inputs, where implicit-shift QR iterations lose the
/// factorization entirely.
fn one_sided_jacobi(m: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let d = m.ncols();
    let mut b = m.clone();
    let mut v = DMatrix::<f64>::identity(d, d);
    for _ in 0..JACOBI_MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..d {
            for q in (p + 1)..d {
                let col_p = b.column(p);
                let col_q = b.column(q);
                let alpha = col_p.norm_squared();
                let beta = col_q.norm_squared();
                let gamma = col_p.dot(&col_q);
                if gamma.abs() <= f64::EPSILON * (alpha * beta).sqrt() || gamma == 0.0 {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for matrix in [&mut b, &mut v] {
                    for i in 0..matrix.nrows() {
                        let vp = matrix[(i, p)];
                        let vq = matrix[(i, q)];
                        matrix[(i, p)] = c * vp - s * vq;
                        matrix[(i, q)] = s * vp + c * vq;
                    }
                }
            }
        }
        if !rotated {
            break;
        }
    }
    (b, v)
}

/// Economy SVD of `m`, truncated at the standard numerical-rank threshold
/// `sigma_i > max(n, d) * eps * sigma_max`.
///
/// The zero matrix yields rank 0 with empty factors.
pub fn econ_svd(m: &DMatrix<f64>) -> Result<EconSvd> {
    if !all_finite(m) {
        return Err(Error::NonFinite);
    }
    let (n, d) = m.shape();
    if n == 0 || d == 0 {
        return Ok(EconSvd {
            u: DMatrix::zeros(n, 0),
            sigma: DVector::zeros(0),
            v: DMatrix::zeros(d, 0),
        });
    }

    // Work on the tall orientation; a wide input swaps the roles of the
    // factors.
    let tall = n >= d;
    let work = if tall { m.clone() } else { m.transpose() };
    let (scaled, rotations) = one_sided_jacobi(&work);

    let k = work.ncols();
    let mut order: Vec<usize> = (0..k).collect();
    let norms: Vec<f64> = (0..k).map(|j| scaled.column(j).norm()).collect();
    order.sort_by(|&a, &b| norms[b].partial_cmp(&norms[a]).expect("finite norms"));

    let sigma_max = norms.iter().cloned().fold(0.0_f64, f64::max);
    let tol = n.max(d) as f64 * f64::EPSILON * sigma_max;
    let rank = order.iter().filter(|&&j| norms[j] > tol && norms[j] > 0.0).count();

    let mut left = DMatrix::zeros(work.nrows(), rank);
    let mut right = DMatrix::zeros(k, rank);
    let mut sigma = DVector::zeros(rank);
    for (slot, &j) in order.iter().take(rank).enumerate() {
        sigma[slot] = norms[j];
        left.column_mut(slot)
            .copy_from(&scaled.column(j).unscale(norms[j]));
        right.column_mut(slot).copy_from(&rotations.column(j));
    }
    let (mut u, mut v) = if tall { (left, right) } else { (right, left) };

    // Fix signs: largest-magnitude entry of each right singular vector is
    // made non-negative (first index wins on ties).
    for j in 0..rank {
        let col = v.column(j);
        let mut best = 0usize;
        let mut best_abs = 0.0_f64;
        for (i, value) in col.iter().enumerate() {
            if value.abs() > best_abs {
                best_abs = value.abs();
                best = i;
            }
        }
        if col[best] < 0.0 {
            v.column_mut(j).neg_mut();
            u.column_mut(j).neg_mut();
        }
    }

    Ok(EconSvd { u, sigma, v })
}

fn symmetrize(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if !all_finite(a) {
        return Err(Error::NonFinite);
    }
    let d = a.nrows();
    if a.ncols() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: a.ncols(),
        });
    }
    let mut max_asym = 0.0_f64;
    let mut max_abs = 0.0_f64;
    for i in 0..d {
        for j in (i + 1)..d {
            max_asym = max_asym.max((a[(i, j)] - a[(j, i)]).abs());
        }
        for j in 0..d {
            max_abs = max_abs.max(a[(i, j)].abs());
        }
    }
    if max_asym > GROSS_ASYMMETRY * max_abs.max(1.0) {
        return Err(Error::NotSymmetric(max_asym));
    }
    Ok((a + a.transpose()).scale(0.5))
}

/// Solves `(a + lambda * I) x = b` for symmetric PSD `a`.
///
/// Inputs are symmetrized as `(a + a') / 2` before factorizing, guarding
/// against drift in accumulated curvature matrices. With `lambda = 0` a
/// numerically singular `a` is rejected.
pub fn solve_regularized(a: &DMatrix<f64>, b: &DVector<f64>, lambda: f64) -> Result<DVector<f64>> {
    if lambda < 0.0 || !lambda.is_finite() {
        return Err(Error::InvalidConfig(format!(
            "lambda must be a non-negative finite real, got {lambda}"
        )));
    }
    if b.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite);
    }
    let s = symmetrize(a)?;
    let d = s.nrows();
    if b.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: b.len(),
        });
    }
    let mut shifted = s.clone();
    for i in 0..d {
        shifted[(i, i)] += lambda;
    }
    if let Some(chol) = shifted.clone().cholesky() {
        return Ok(chol.solve(b));
    }
    // Cholesky refuses barely-PSD systems; fall back on the spectral solve.
    let eigen = SymmetricEigen::new(s);
    let max_abs = eigen.eigenvalues.iter().fold(0.0_f64, |m, &e| m.max(e.abs()));
    let rank_tol = d as f64 * f64::EPSILON * max_abs;
    if lambda == 0.0 && eigen.eigenvalues.iter().any(|&e| e.abs() <= rank_tol) {
        return Err(Error::SingularSystem);
    }
    let mut coeffs = eigen.eigenvectors.transpose() * b;
    for (i, c) in coeffs.iter_mut().enumerate() {
        *c /= eigen.eigenvalues[i] + lambda;
    }
    Ok(&eigen.eigenvectors * coeffs)
}

/// Eigendecomposition of a symmetric PSD matrix with the numerical-rank
/// truncation rule, reusable across several right-hand sides.
pub struct PsdSolver {
    vectors: DMatrix<f64>,
    inv_values: DVector<f64>,
    kept: usize,
}

impl PsdSolver {
    pub fn new(a: &DMatrix<f64>) -> Result<Self> {
        let s = symmetrize(a)?;
        let d = s.nrows();
        let eigen = SymmetricEigen::new(s);
        let max_abs = eigen.eigenvalues.iter().fold(0.0_f64, |m, &e| m.max(e.abs()));
        let tol = d as f64 * f64::EPSILON * max_abs;
        let mut inv_values = DVector::zeros(d);
        let mut kept = 0usize;
        for (i, &e) in eigen.eigenvalues.iter().enumerate() {
            if e.abs() > tol && e != 0.0 {
                inv_values[i] = 1.0 / e;
                kept += 1;
            }
        }
        Ok(Self {
            vectors: eigen.eigenvectors,
            inv_values,
            kept,
        })
    }

    /// Retained spectral rank.
    pub fn rank(&self) -> usize {
        self.kept
    }

    /// Minimum-norm least-squares solution of `a x = b`.
    pub fn apply(&self, b: &DVector<f64>) -> DVector<f64> {
        let mut coeffs = self.vectors.transpose() * b;
        coeffs.component_mul_assign(&self.inv_values);
        &self.vectors * coeffs
    }

    /// Column-wise [`PsdSolver::apply`] on a matrix right-hand side.
    pub fn apply_matrix(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        let mut coeffs = self.vectors.transpose() * b;
        for j in 0..coeffs.ncols() {
            let mut col = coeffs.column_mut(j);
            for (i, c) in col.iter_mut().enumerate() {
                *c *= self.inv_values[i];
            }
        }
        &self.vectors * coeffs
    }
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn smallest_eigenvalue(a: &DMatrix<f64>) -> f64 {
    let sym = (a + a.transpose()).scale(0.5);
    SymmetricEigen::new(sym)
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min)
}

/// Minimum-Euclidean-norm `x` minimizing `|a x - b|_2`, for symmetric PSD `a`.
///
/// Computed via the eigendecomposition of `a` with the same truncation rule
/// as [`econ_svd`].
pub fn pinv_apply(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    if b.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite);
    }
    let solver = PsdSolver::new(a)?;
    if b.len() != a.nrows() {
        return Err(Error::DimensionMismatch {
            expected: a.nrows(),
            got: b.len(),
        });
    }
    Ok(solver.apply(b))
}
