//! Continual learning for losses with a quadratic upper bound (QUB), i.e.
//! losses dominated by a quadratic centered at the task minimizer with PSD
//! curvature. Binary logistic regression uses the sigmoid curvature cap
//! `1/4`; multi-class logistic uses the Boehning bound on the softmax
//! Hessian's class-space factor.
//!
//! Task summaries store the right singular structure of the task inputs
//! (not the samples themselves), so the learner's state stays `O(K d + d^2)`
//! regardless of how many tasks arrive.

use std::io::{Read, Write};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{econ_svd, PsdSolver};
use crate::regression::SolveStrategy;
use crate::tasks::TaskDataset;
use crate::util::fmt_f64;

/// Which logistic loss a task uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LogisticKind {
    /// Two classes, parameter is a single column; class index 1 is the
    /// positive class.
    Binary,
    /// K classes with a `d x K` parameter matrix.
    Multiclass,
}

/// Inner-solver options for [`fit_task_minimizer`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    /// L2 penalty on the fitted minimizer. The default keeps the minimizer
    /// finite on separable data, where the unregularized loss has none.
    pub ridge: f64,
    /// Gradient-norm stopping threshold.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            ridge: 1e-8,
            tol: 1e-10,
            max_iter: 100,
        }
    }
}

/// Output of the damped-Newton task solve.
#[derive(Debug, Clone)]
pub struct FitResult {
    /// Task minimizer, `d x K` (`K = 1` for binary).
    pub theta_min: DMatrix<f64>,
    /// Unregularized cross-entropy at the minimizer.
    pub min_loss: f64,
    pub grad_norm: f64,
    pub iterations: usize,
}

fn log1p_exp(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

fn binary_labels(dataset: &TaskDataset) -> Result<DVector<f64>> {
    if dataset.num_outputs() != 2 {
        return Err(Error::DimensionMismatch {
            expected: 2,
            got: dataset.num_outputs(),
        });
    }
    Ok(dataset.targets().column(1).into_owned())
}

/// Mean binary cross-entropy of `theta` (length d) on a two-class dataset.
pub fn binary_cross_entropy(dataset: &TaskDataset, theta: &DVector<f64>) -> Result<f64> {
    if theta.len() != dataset.dim() {
        return Err(Error::DimensionMismatch {
            expected: dataset.dim(),
            got: theta.len(),
        });
    }
    let y = binary_labels(dataset)?;
    let scores = dataset.inputs() * theta;
    let n = dataset.n() as f64;
    let mut total = 0.0;
    for i in 0..dataset.n() {
        total += log1p_exp(scores[i]) - y[i] * scores[i];
    }
    Ok(total / n)
}

fn softmax_rows(scores: &DMatrix<f64>) -> DMatrix<f64> {
    let mut p = scores.clone();
    for i in 0..p.nrows() {
        let row_max = p.row(i).iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for j in 0..p.ncols() {
            let e = (p[(i, j)] - row_max).exp();
            p[(i, j)] = e;
            total += e;
        }
        for j in 0..p.ncols() {
            p[(i, j)] /= total;
        }
    }
    p
}

/// Mean multi-class cross-entropy of `theta` (`d x K`) on a one-hot dataset.
pub fn multiclass_cross_entropy(dataset: &TaskDataset, theta: &DMatrix<f64>) -> Result<f64> {
    let (d, k) = (dataset.dim(), dataset.num_outputs());
    if theta.nrows() != d || theta.ncols() != k {
        return Err(Error::DimensionMismatch {
            expected: d * k,
            got: theta.nrows() * theta.ncols(),
        });
    }
    let scores = dataset.inputs() * theta;
    let n = dataset.n() as f64;
    let mut total = 0.0;
    for i in 0..dataset.n() {
        let row_max = scores.row(i).iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = row_max
            + scores
                .row(i)
                .iter()
                .map(|&s| (s - row_max).exp())
                .sum::<f64>()
                .ln();
        let picked: f64 = (0..k).map(|j| dataset.targets()[(i, j)] * scores[(i, j)]).sum();
        total += lse - picked;
    }
    Ok(total / n)
}

/// Cross-entropy dispatch over [`LogisticKind`]; `theta` is `d x K`.
pub fn cross_entropy(dataset: &TaskDataset, kind: LogisticKind, theta: &DMatrix<f64>) -> Result<f64> {
    match kind {
        LogisticKind::Binary => {
            if theta.ncols() != 1 {
                return Err(Error::DimensionMismatch {
                    expected: 1,
                    got: theta.ncols(),
                });
            }
            binary_cross_entropy(dataset, &theta.column(0).into_owned())
        }
        LogisticKind::Multiclass => multiclass_cross_entropy(dataset, theta),
    }
}

/// Class-space curvature of the softmax at probability vector `p`:
/// `Diag(p) - p p'`.
pub fn softmax_curvature(p: &DVector<f64>) -> DMatrix<f64> {
    let k = p.len();
    let mut m = DMatrix::zeros(k, k);
    for i in 0..k {
        for j in 0..k {
            m[(i, j)] = if i == j { p[i] * (1.0 - p[i]) } else { -p[i] * p[j] };
        }
    }
    m
}

/// Boehning's PSD dominator of the softmax class-space curvature:
/// `(1/2) (I_K - (1/K) 1 1')`.
pub fn bohning_bound(k: usize) -> DMatrix<f64> {
    let mut m = DMatrix::from_element(k, k, -0.5 / k as f64);
    for i in 0..k {
        m[(i, i)] += 0.5;
    }
    m
}

/// Symmetric square root of the Boehning matrix. Since twice the bound is
/// idempotent, the root is `sqrt(2)` times the bound itself.
pub fn bohning_sqrt(k: usize) -> DMatrix<f64> {
    bohning_bound(k).scale(std::f64::consts::SQRT_2)
}

struct LossModel<'a> {
    dataset: &'a TaskDataset,
    kind: LogisticKind,
    ridge: f64,
    d: usize,
    k: usize,
}

impl<'a> LossModel<'a> {
    fn new(dataset: &'a TaskDataset, kind: LogisticKind, ridge: f64) -> Result<Self> {
        let k = match kind {
            LogisticKind::Binary => {
                binary_labels(dataset)?;
                1
            }
            LogisticKind::Multiclass => {
                if dataset.num_outputs() < 2 {
                    return Err(Error::DimensionMismatch {
                        expected: 2,
                        got: dataset.num_outputs(),
                    });
                }
                dataset.num_outputs()
            }
        };
        Ok(Self {
            dataset,
            kind,
            ridge,
            d: dataset.dim(),
            k,
        })
    }

    fn raw_loss(&self, theta: &DMatrix<f64>) -> Result<f64> {
        match self.kind {
            LogisticKind::Binary => {
                binary_cross_entropy(self.dataset, &theta.column(0).into_owned())
            }
            LogisticKind::Multiclass => multiclass_cross_entropy(self.dataset, theta),
        }
    }

    fn reg_loss(&self, theta: &DMatrix<f64>) -> Result<f64> {
        Ok(self.raw_loss(theta)? + 0.5 * self.ridge * theta.norm_squared())
    }

    /// Gradient of the ridge-regularized loss, `d x K`.
    fn grad(&self, theta: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let n = self.dataset.n() as f64;
        let residual = match self.kind {
            LogisticKind::Binary => {
                let y = binary_labels(self.dataset)?;
                let scores = self.dataset.inputs() * theta.column(0).into_owned();
                DMatrix::from_fn(self.dataset.n(), 1, |i, _| {
                    1.0 / (1.0 + (-scores[i]).exp()) - y[i]
                })
            }
            LogisticKind::Multiclass => {
                let scores = self.dataset.inputs() * theta;
                softmax_rows(&scores) - self.dataset.targets()
            }
        };
        Ok((self.dataset.inputs().transpose() * residual).scale(1.0 / n) + theta.scale(self.ridge))
    }

    /// Exact Hessian of the regularized loss at `theta`, over the
    /// column-stacked parameter vector (`D = d K`).
    fn hessian(&self, theta: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let n = self.dataset.n() as f64;
        let x = self.dataset.inputs();
        let dk = self.d * self.k;
        let mut h = DMatrix::zeros(dk, dk);
        match self.kind {
            LogisticKind::Binary => {
                let scores = x * theta.column(0).into_owned();
                for i in 0..self.dataset.n() {
                    let p = 1.0 / (1.0 + (-scores[i]).exp());
                    let w = p * (1.0 - p) / n;
                    let row = x.row(i);
                    for a in 0..self.d {
                        for b in 0..self.d {
                            h[(a, b)] += w * row[a] * row[b];
                        }
                    }
                }
            }
            LogisticKind::Multiclass => {
                let probs = softmax_rows(&(x * theta));
                for i in 0..self.dataset.n() {
                    let p = probs.row(i).transpose();
                    let class_block = softmax_curvature(&p);
                    let row = x.row(i);
                    for kc in 0..self.k {
                        for kr in 0..self.k {
                            let w = class_block[(kr, kc)] / n;
                            if w == 0.0 {
                                continue;
                            }
                            for a in 0..self.d {
                                for b in 0..self.d {
                                    h[(kr * self.d + a, kc * self.d + b)] += w * row[a] * row[b];
                                }
                            }
                        }
                    }
                }
            }
        }
        for i in 0..dk {
            h[(i, i)] += self.ridge;
        }
        Ok(h)
    }
}

fn stack_columns(m: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_column_slice(m.as_slice())
}

fn unstack_columns(v: &DVector<f64>, d: usize, k: usize) -> DMatrix<f64> {
    DMatrix::from_column_slice(d, k, v.as_slice())
}

/// Damped Newton on the ridge-regularized cross-entropy. Terminates when the
/// gradient norm reaches `tol`; with `ridge = 0` on separable data the
/// gradient may never get there, which surfaces as `NoFiniteMinimizer`.
pub fn fit_task_minimizer(
    dataset: &TaskDataset,
    kind: LogisticKind,
    options: &FitOptions,
) -> Result<FitResult> {
    if options.ridge < 0.0 {
        return Err(Error::InvalidConfig("ridge must be non-negative".into()));
    }
    let model = LossModel::new(dataset, kind, options.ridge)?;
    let mut theta = DMatrix::zeros(model.d, model.k);
    let mut loss = model.reg_loss(&theta)?;
    let mut grad_norm = f64::INFINITY;

    for iter in 0..options.max_iter {
        let grad = model.grad(&theta)?;
        grad_norm = grad.norm();
        if grad_norm <= options.tol {
            return Ok(FitResult {
                min_loss: model.raw_loss(&theta)?,
                theta_min: theta,
                grad_norm,
                iterations: iter,
            });
        }
        let hess = model.hessian(&theta)?;
        let solver = PsdSolver::new(&hess)?;
        let direction = solver.apply(&stack_columns(&grad)).scale(-1.0);
        let gd = stack_columns(&grad).dot(&direction);

        let mut step = 1.0;
        let mut moved = false;
        for _ in 0..60 {
            let candidate = &theta + unstack_columns(&direction, model.d, model.k).scale(step);
            let candidate_loss = model.reg_loss(&candidate)?;
            if candidate_loss <= loss + 1e-4 * step * gd + 1e-15 * (1.0 + loss.abs()) {
                theta = candidate;
                loss = candidate_loss;
                moved = true;
                break;
            }
            step *= 0.5;
        }
        if !moved {
            // Newton stalled; a plain gradient step keeps progress honest.
            let mut step = 1.0;
            let descent = -grad.norm_squared();
            for _ in 0..60 {
                let candidate = &theta - grad.scale(step);
                let candidate_loss = model.reg_loss(&candidate)?;
                if candidate_loss <= loss + 1e-4 * step * descent + 1e-15 * (1.0 + loss.abs()) {
                    theta = candidate;
                    loss = candidate_loss;
                    moved = true;
                    break;
                }
                step *= 0.5;
            }
        }
        if !moved {
            break;
        }
    }

    let grad = model.grad(&theta)?;
    grad_norm = grad_norm.min(grad.norm());
    if grad_norm <= options.tol {
        return Ok(FitResult {
            min_loss: model.raw_loss(&theta)?,
            theta_min: theta,
            grad_norm,
            iterations: options.max_iter,
        });
    }
    Err(Error::NoFiniteMinimizer {
        grad_norm,
        iterations: options.max_iter,
    })
}

/// Curvature bound of one task, either as the right singular structure of
/// the inputs (so `H = scale * v diag(sigma^2) v'`) or as a dense matrix for
/// generic quadratic bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum HessianRep {
    Factored {
        v: DMatrix<f64>,
        sigma: DVector<f64>,
        scale: f64,
    },
    Dense(DMatrix<f64>),
}

impl HessianRep {
    pub fn dim(&self) -> usize {
        match self {
            HessianRep::Factored { v, .. } => v.nrows(),
            HessianRep::Dense(h) => h.nrows(),
        }
    }

    /// Dense `d x d` curvature matrix.
    pub fn materialize(&self) -> DMatrix<f64> {
        match self {
            HessianRep::Factored { v, sigma, scale } => {
                let mut vs = v.clone();
                for (j, s) in sigma.iter().enumerate() {
                    vs.column_mut(j).scale_mut(*s);
                }
                (&vs * vs.transpose()).scale(*scale)
            }
            HessianRep::Dense(h) => h.clone(),
        }
    }

    /// `H * m` without materializing `H` when factored.
    pub fn apply(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        match self {
            HessianRep::Factored { v, sigma, scale } => {
                let mut projected = v.transpose() * m;
                for (j, s) in sigma.iter().enumerate() {
                    projected.row_mut(j).scale_mut(s * s);
                }
                (v * projected).scale(*scale)
            }
            HessianRep::Dense(h) => h * m,
        }
    }

    /// Quadratic form `(1/2) sum_k delta_k' H delta_k` for a `d x K` offset.
    fn half_quadratic(&self, delta: &DMatrix<f64>) -> f64 {
        match self {
            HessianRep::Factored { v, sigma, scale } => {
                let mut projected = v.transpose() * delta;
                for (j, s) in sigma.iter().enumerate() {
                    projected.row_mut(j).scale_mut(*s);
                }
                0.5 * scale * projected.norm_squared()
            }
            HessianRep::Dense(h) => 0.5 * (delta.transpose() * h * delta).trace(),
        }
    }
}

/// Per-task record for QUB learners: curvature bound, task minimizer,
/// sample count, and the loss attained at the minimizer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QubSummary {
    pub hessian: HessianRep,
    /// `d x K` task minimizer (`K = 1` for binary and generic quadratics).
    pub theta_min: DMatrix<f64>,
    pub n: usize,
    pub min_loss: f64,
    pub task_id: usize,
}

impl QubSummary {
    pub fn dim(&self) -> usize {
        self.theta_min.nrows()
    }

    pub fn classes(&self) -> usize {
        self.theta_min.ncols()
    }
}

/// Quadratic curvature bound of the task loss: `(1/(4n)) X'X` for binary
/// logistic, and the row-space factor `(1/n) X'X` for multi-class, whose
/// class-space Boehning factor is handled analytically.
pub fn hessian_upper_bound(dataset: &TaskDataset, kind: LogisticKind) -> Result<HessianRep> {
    let svd = econ_svd(dataset.inputs())?;
    let scale = match kind {
        LogisticKind::Binary => 1.0 / (4.0 * dataset.n() as f64),
        LogisticKind::Multiclass => 1.0 / dataset.n() as f64,
    };
    Ok(HessianRep::Factored {
        v: svd.v,
        sigma: svd.sigma,
        scale,
    })
}

/// Fits the task minimizer and packages it with the curvature bound.
pub fn build_summary(
    dataset: &TaskDataset,
    kind: LogisticKind,
    options: &FitOptions,
) -> Result<QubSummary> {
    let fit = fit_task_minimizer(dataset, kind, options)?;
    let hessian = hessian_upper_bound(dataset, kind)?;
    Ok(QubSummary {
        hessian,
        theta_min: fit.theta_min,
        n: dataset.n(),
        min_loss: fit.min_loss,
        task_id: dataset.task_id(),
    })
}

/// Value of the quadratic upper bound at `theta` (`d x K`): the minimum loss
/// plus the curvature-weighted squared distance from the task minimizer; for
/// `K >= 2` the class-space Boehning factor enters through the trace form.
pub fn qub_value(summary: &QubSummary, theta: &DMatrix<f64>) -> Result<f64> {
    if theta.shape() != summary.theta_min.shape() {
        return Err(Error::DimensionMismatch {
            expected: summary.dim() * summary.classes(),
            got: theta.nrows() * theta.ncols(),
        });
    }
    let delta = theta - &summary.theta_min;
    let quad = if summary.classes() == 1 {
        summary.hessian.half_quadratic(&delta)
    } else {
        let vbar = bohning_bound(summary.classes());
        match &summary.hessian {
            HessianRep::Factored { v, sigma, scale } => {
                let mut projected = v.transpose() * &delta;
                for (j, s) in sigma.iter().enumerate() {
                    projected.row_mut(j).scale_mut(*s);
                }
                0.5 * scale * (projected.transpose() * &projected * vbar).trace()
            }
            HessianRep::Dense(h) => 0.5 * (delta.transpose() * h * &delta * vbar).trace(),
        }
    };
    Ok(summary.min_loss + quad)
}

/// Continual learner over QUB task summaries. State is the accumulated
/// curvature and the running solution; summaries are retained only when
/// bound reporting is requested.
#[derive(Debug, Clone)]
pub struct QubLearner {
    dim: usize,
    classes: usize,
    strategy: SolveStrategy,
    curvature: DMatrix<f64>,
    solution: DMatrix<f64>,
    total_samples: usize,
    tasks_seen: usize,
    learned_tasks: Vec<usize>,
    retained: Option<Vec<QubSummary>>,
}

impl QubLearner {
    pub fn new(dim: usize, classes: usize, strategy: SolveStrategy) -> Self {
        Self {
            dim,
            classes,
            strategy,
            curvature: DMatrix::zeros(dim, dim),
            solution: DMatrix::zeros(dim, classes),
            total_samples: 0,
            tasks_seen: 0,
            learned_tasks: Vec::new(),
            retained: None,
        }
    }

    /// Keeps every learned summary for later bound evaluation; costs extra
    /// memory beyond the `O(K d + d^2)` core state.
    pub fn with_retention(mut self) -> Self {
        self.retained = Some(Vec::new());
        self
    }

    pub fn solution(&self) -> &DMatrix<f64> {
        &self.solution
    }

    /// Single-column solution for binary learners.
    pub fn solution_vector(&self) -> Result<DVector<f64>> {
        if self.classes != 1 {
            return Err(Error::DimensionMismatch {
                expected: 1,
                got: self.classes,
            });
        }
        Ok(self.solution.column(0).into_owned())
    }

    pub fn tasks_seen(&self) -> usize {
        self.tasks_seen
    }

    pub fn total_samples(&self) -> usize {
        self.total_samples
    }

    pub fn curvature(&self) -> &DMatrix<f64> {
        &self.curvature
    }

    /// Core-state float count: `d^2 + K d`, constant across tasks. Retained
    /// summaries, when enabled, are accounted separately.
    pub fn memory_footprint(&self) -> usize {
        self.dim * self.dim + self.classes * self.dim
    }

    pub fn retained_summaries(&self) -> Option<&[QubSummary]> {
        self.retained.as_deref()
    }

    /// Folds one task summary into the state: rescale the accumulated
    /// curvature toward the new sample total, add the task's bound, and move
    /// the solution by the curvature-weighted pull toward the task minimizer.
    pub fn learn_task(&mut self, summary: QubSummary) -> Result<()> {
        if summary.dim() != self.dim || summary.classes() != self.classes {
            return Err(Error::DimensionMismatch {
                expected: self.dim * self.classes,
                got: summary.dim() * summary.classes(),
            });
        }
        let previous = self.total_samples;
        self.total_samples += summary.n;
        let alpha = summary.n as f64 / self.total_samples as f64;

        if self.tasks_seen == 0 {
            self.curvature = summary.hessian.materialize();
            self.solution = summary.theta_min.clone();
        } else {
            let ratio = previous as f64 / self.total_samples as f64;
            self.curvature.scale_mut(ratio);
            self.curvature += summary.hessian.materialize().scale(alpha);

            let pull = summary
                .hessian
                .apply(&(&summary.theta_min - &self.solution))
                .scale(alpha);
            let delta = match self.strategy {
                SolveStrategy::PseudoInverse => {
                    PsdSolver::new(&self.curvature)?.apply_matrix(&pull)
                }
                SolveStrategy::Regularized { lambda } => {
                    let mut shifted = self.curvature.clone();
                    for i in 0..self.dim {
                        shifted[(i, i)] += lambda;
                    }
                    let solver = PsdSolver::new(&shifted)?;
                    solver.apply_matrix(&pull)
                }
            };
            self.solution += delta;
        }

        self.tasks_seen += 1;
        self.learned_tasks.push(summary.task_id);
        if let Some(retained) = &mut self.retained {
            retained.push(summary);
        }
        Ok(())
    }

    /// Worst-case forgetting of an already-learned task at the current
    /// solution: the QUB quadratic evaluated at the solution. Multi-class
    /// uses the Frobenius form with the Boehning square root.
    pub fn forgetting_bound(&self, summary: &QubSummary) -> Result<f64> {
        if !self.learned_tasks.contains(&summary.task_id) {
            return Err(Error::UnknownTask(summary.task_id));
        }
        if summary.dim() != self.dim || summary.classes() != self.classes {
            return Err(Error::DimensionMismatch {
                expected: self.dim * self.classes,
                got: summary.dim() * summary.classes(),
            });
        }
        let delta = &self.solution - &summary.theta_min;
        if self.classes == 1 {
            return Ok(summary.hessian.half_quadratic(&delta));
        }
        let root = bohning_sqrt(self.classes);
        match &summary.hessian {
            HessianRep::Factored { v, sigma, scale } => {
                let mut projected = v.transpose() * &delta;
                for (j, s) in sigma.iter().enumerate() {
                    projected.row_mut(j).scale_mut(*s);
                }
                Ok(0.5 * scale * (projected * root).norm_squared())
            }
            HessianRep::Dense(h) => {
                let weighted = &delta * &root;
                Ok(0.5 * (weighted.transpose() * h * weighted).trace())
            }
        }
    }

    /// Bounds for every retained task.
    pub fn retained_bounds(&self) -> Result<Vec<(usize, f64)>> {
        let retained = self
            .retained
            .as_ref()
            .ok_or_else(|| Error::InvalidConfig("summary retention is off".into()))?;
        retained
            .iter()
            .map(|s| Ok((s.task_id, self.forgetting_bound(s)?)))
            .collect()
    }

    pub fn save_checkpoint<W: Write>(&self, writer: W) -> Result<()> {
        let checkpoint = QubCheckpoint {
            schema_version: QUB_CHECKPOINT_VERSION,
            dim: self.dim,
            classes: self.classes,
            strategy: self.strategy,
            total_samples: self.total_samples,
            tasks_seen: self.tasks_seen,
            learned_tasks: self.learned_tasks.clone(),
            curvature_col_major: self.curvature.as_slice().to_vec(),
            theta_star_col_major: self.solution.as_slice().to_vec(),
            retained: self.retained.clone(),
        };
        serde_json::to_writer_pretty(writer, &checkpoint)?;
        Ok(())
    }

    pub fn load_checkpoint<R: Read>(reader: R) -> Result<Self> {
        let c: QubCheckpoint = serde_json::from_reader(reader)?;
        if c.schema_version != QUB_CHECKPOINT_VERSION {
            return Err(Error::SchemaVersionMismatch {
                expected: QUB_CHECKPOINT_VERSION,
                got: c.schema_version,
            });
        }
        if c.curvature_col_major.len() != c.dim * c.dim
            || c.theta_star_col_major.len() != c.dim * c.classes
        {
            return Err(Error::ConfigParse("checkpoint dimensions disagree".into()));
        }
        Ok(Self {
            dim: c.dim,
            classes: c.classes,
            strategy: c.strategy,
            curvature: DMatrix::from_column_slice(c.dim, c.dim, &c.curvature_col_major),
            solution: DMatrix::from_column_slice(c.dim, c.classes, &c.theta_star_col_major),
            total_samples: c.total_samples,
            tasks_seen: c.tasks_seen,
            learned_tasks: c.learned_tasks,
            retained: c.retained,
        })
    }
}

const QUB_CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct QubCheckpoint {
    schema_version: u32,
    dim: usize,
    classes: usize,
    strategy: SolveStrategy,
    total_samples: usize,
    tasks_seen: usize,
    learned_tasks: Vec<usize>,
    curvature_col_major: Vec<f64>,
    theta_star_col_major: Vec<f64>,
    retained: Option<Vec<QubSummary>>,
}

/// One row of the per-task bound log emitted next to checkpoints.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundLogRow {
    /// Index of the checkpoint (tasks learned so far).
    pub k: usize,
    /// Past task the bound refers to.
    pub t: usize,
    pub bound: f64,
    pub true_forgetting: f64,
}

/// Writes bound-log rows as CSV with header `k,t,bound,true_forgetting`.
pub fn write_bound_log<W: Write>(writer: W, rows: &[BoundLogRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["k", "t", "bound", "true_forgetting"])?;
    for row in rows {
        w.write_record(&[
            row.k.to_string(),
            row.t.to_string(),
            fmt_f64(row.bound),
            fmt_f64(row.true_forgetting),
        ])?;
    }
    w.flush()?;
    Ok(())
}
