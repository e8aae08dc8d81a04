//! Minimal sufficient information for regression tasks: a rank-truncated
//! representation `(v, sigma, y_tilde)` of the task data that reconstructs
//! the quadratic task loss exactly at every parameter, plus the feature maps
//! that extend it from linear to basis-function models.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::econ_svd;
use crate::tasks::TaskDataset;

/// Basis-function map applied to inputs before factorization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum FeatureMapKind {
    /// Raw inputs, `phi(x) = x`.
    Identity,
    /// All multivariate monomials up to `degree`, lexicographic exponent
    /// order (constant term included).
    Polynomial { degree: usize },
    /// Frozen two-layer ReLU network linearized around its initialization:
    /// `phi(x) = x (kron) (w (hadamard) 1[v x >= 0])`.
    Ntk {
        weights: DVector<f64>,
        frozen: DMatrix<f64>,
    },
}

/// A feature map with its input and output dimensions pinned.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMap {
    kind: FeatureMapKind,
    input_dim: usize,
    output_dim: usize,
}

/// Binomial coefficient, saturating; dimension of the monomial basis is
/// C(d + degree, degree).
fn binomial(n: usize, k: usize) -> usize {
    let k = k.min(n - k);
    let mut acc: usize = 1;
    for i in 0..k {
        acc = acc.saturating_mul(n - i) / (i + 1);
    }
    acc
}

/// Exponent tuples `(a_1..a_d)` with `sum <= degree`, lexicographic
/// ascending.
fn monomial_exponents(d: usize, degree: usize) -> Vec<Vec<u32>> {
    fn recurse(d: usize, budget: u32, prefix: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if d == 0 {
            out.push(prefix.clone());
            return;
        }
        for e in 0..=budget {
            prefix.push(e);
            recurse(d - 1, budget - e, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    recurse(d, degree as u32, &mut Vec::new(), &mut out);
    out
}

impl FeatureMap {
    pub fn identity(d: usize) -> Self {
        Self {
            kind: FeatureMapKind::Identity,
            input_dim: d,
            output_dim: d,
        }
    }

    pub fn polynomial(d: usize, degree: usize) -> Self {
        Self {
            kind: FeatureMapKind::Polynomial { degree },
            input_dim: d,
            output_dim: binomial(d + degree, degree),
        }
    }

    /// NTK map for hidden weights `frozen` (m x d) and output weights
    /// `weights` (length m); output dimension is `m * d`.
    pub fn ntk(weights: DVector<f64>, frozen: DMatrix<f64>) -> Result<Self> {
        if weights.len() != frozen.nrows() {
            return Err(Error::DimensionMismatch {
                expected: frozen.nrows(),
                got: weights.len(),
            });
        }
        let (m, d) = frozen.shape();
        Ok(Self {
            kind: FeatureMapKind::Ntk { weights, frozen },
            input_dim: d,
            output_dim: m * d,
        })
    }

    pub fn kind(&self) -> &FeatureMapKind {
        &self.kind
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.output_dim
    }

    /// Applies the map to one input row.
    pub fn apply(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        if x.len() != self.input_dim {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim,
                got: x.len(),
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        match &self.kind {
            FeatureMapKind::Identity => Ok(x.clone()),
            FeatureMapKind::Polynomial { degree } => {
                let exps = monomial_exponents(self.input_dim, *degree);
                let mut out = DVector::zeros(exps.len());
                for (idx, exp) in exps.iter().enumerate() {
                    let mut value = 1.0;
                    for (j, &e) in exp.iter().enumerate() {
                        value *= x[j].powi(e as i32);
                    }
                    out[idx] = value;
                }
                Ok(out)
            }
            FeatureMapKind::Ntk { weights, frozen } => ntk_feature_map(x, weights, frozen),
        }
    }

    /// Applies the map to every row of `x`.
    pub fn apply_rows(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let n = x.nrows();
        let mut out = DMatrix::zeros(n, self.output_dim);
        for i in 0..n {
            let row = self.apply(&x.row(i).transpose())?;
            out.row_mut(i).copy_from(&row.transpose());
        }
        Ok(out)
    }
}

/// Linearized feature vector of a frozen two-layer ReLU network:
/// `x (kron) (w (hadamard) 1[v x >= 0])`, column-stacked so that the inner
/// product with `vec(delta_v)` (columns stacked) gives the first-order output
/// change for a hidden-weight perturbation `delta_v`.
pub fn ntk_feature_map(
    x: &DVector<f64>,
    weights: &DVector<f64>,
    frozen: &DMatrix<f64>,
) -> Result<DVector<f64>> {
    let (m, d) = frozen.shape();
    if weights.len() != m {
        return Err(Error::DimensionMismatch {
            expected: m,
            got: weights.len(),
        });
    }
    if x.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: x.len(),
        });
    }
    if x.iter().any(|v| !v.is_finite())
        || weights.iter().any(|v| !v.is_finite())
        || frozen.iter().any(|v| !v.is_finite())
    {
        return Err(Error::NonFinite);
    }
    let pre = frozen * x;
    let gated = DVector::from_fn(m, |i, _| if pre[i] >= 0.0 { weights[i] } else { 0.0 });
    let mut out = DVector::zeros(m * d);
    for j in 0..d {
        for i in 0..m {
            out[j * m + i] = x[j] * gated[i];
        }
    }
    Ok(out)
}

/// Minimal sufficient information of one regression task: right singular
/// vectors, singular values, rotated targets, sample count, and the
/// attainable minimum loss.
///
/// The stored-float count is `rank * (dim + 2)`; `n` and `min_loss` are
/// bookkeeping (`min_loss` costs one scalar and enables exact forgetting
/// evaluation even though the learner itself never needs it).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionMsi {
    v: DMatrix<f64>,
    sigma: DVector<f64>,
    y_tilde: DVector<f64>,
    n: usize,
    min_loss: f64,
    task_id: usize,
}

impl RegressionMsi {
    pub fn rank(&self) -> usize {
        self.sigma.len()
    }

    /// Parameter dimension (feature-space).
    pub fn dim(&self) -> usize {
        self.v.nrows()
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn min_loss(&self) -> f64 {
        self.min_loss
    }

    pub fn task_id(&self) -> usize {
        self.task_id
    }

    pub fn right_vectors(&self) -> &DMatrix<f64> {
        &self.v
    }

    pub fn singular_values(&self) -> &DVector<f64> {
        &self.sigma
    }

    pub fn rotated_targets(&self) -> &DVector<f64> {
        &self.y_tilde
    }

    /// Stored floats: `rank * (dim + 2)`.
    pub fn float_count(&self) -> usize {
        self.rank() * (self.dim() + 2)
    }

    /// `v * diag(sigma^2) * v'`, the per-sample-normalized curvature times n.
    pub fn gram(&self) -> DMatrix<f64> {
        let mut vs = self.v.clone();
        for (j, s) in self.sigma.iter().enumerate() {
            vs.column_mut(j).scale_mut(*s);
        }
        &vs * vs.transpose()
    }

    /// `v * diag(sigma^2) * y_tilde`.
    pub fn gram_targets(&self) -> DVector<f64> {
        let mut scaled = self.y_tilde.clone();
        for (j, s) in self.sigma.iter().enumerate() {
            scaled[j] *= s * s;
        }
        &self.v * scaled
    }

    pub(crate) fn from_parts(
        v: DMatrix<f64>,
        sigma: DVector<f64>,
        y_tilde: DVector<f64>,
        n: usize,
        min_loss: f64,
        task_id: usize,
    ) -> Self {
        Self {
            v,
            sigma,
            y_tilde,
            n,
            min_loss,
            task_id,
        }
    }
}

/// Builds the MSI of a regression task under a feature map: factorizes the
/// mapped inputs, rotates the targets into the singular basis, and records
/// the attainable minimum loss.
pub fn compute_msi(dataset: &TaskDataset, map: &FeatureMap) -> Result<RegressionMsi> {
    if dataset.num_outputs() != 1 {
        return Err(Error::DimensionMismatch {
            expected: 1,
            got: dataset.num_outputs(),
        });
    }
    let features = map.apply_rows(dataset.inputs())?;
    let svd = econ_svd(&features)?;
    if svd.rank() == 0 {
        return Err(Error::RankZero);
    }
    let y = dataset.target_vector()?;
    let projected = svd.u.transpose() * &y;
    let mut y_tilde = projected.clone();
    for (i, t) in y_tilde.iter_mut().enumerate() {
        *t /= svd.sigma[i];
    }
    let n = dataset.n() as f64;
    let min_loss = ((y.norm_squared() - projected.norm_squared()) / (2.0 * n)).max(0.0);
    Ok(RegressionMsi {
        v: svd.v,
        sigma: svd.sigma,
        y_tilde,
        n: dataset.n(),
        min_loss,
        task_id: dataset.task_id(),
    })
}

/// Task loss reconstructed from the MSI:
/// `(1 / 2n) |diag(sigma) (v' theta - y_tilde)|^2 + min_loss`.
pub fn reconstruct_loss(msi: &RegressionMsi, theta: &DVector<f64>) -> Result<f64> {
    Ok(forgetting(msi, theta)? + msi.min_loss)
}

/// Excess loss over the task minimum at `theta`; zero exactly on the task's
/// minimizer set.
pub fn forgetting(msi: &RegressionMsi, theta: &DVector<f64>) -> Result<f64> {
    if theta.len() != msi.dim() {
        return Err(Error::DimensionMismatch {
            expected: msi.dim(),
            got: theta.len(),
        });
    }
    let mut resid = msi.v.transpose() * theta - &msi.y_tilde;
    for (i, r) in resid.iter_mut().enumerate() {
        *r *= msi.sigma[i];
    }
    Ok(resid.norm_squared() / (2.0 * msi.n as f64))
}
