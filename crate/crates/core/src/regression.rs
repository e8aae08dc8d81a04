//! Two-phase continual learner for linear and basis-function regression.
//!
//! While the accumulated ranks fit in the parameter dimension, each task's
//! MSI is stored and the scalarized normal equations are solved directly.
//! Once the rank budget is exceeded, the stored MSIs are folded into a fixed
//! `d x d` curvature matrix and the learner switches to incremental updates
//! with a constant memory footprint.

use std::io::{Read, Write};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{pinv_apply, solve_regularized};
use crate::msi::{compute_msi, FeatureMap, RegressionMsi};
use crate::tasks::{preferences, PreferenceVector, TaskDataset};

/// How singular accumulated systems are resolved.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub enum SolveStrategy {
    /// Minimum-norm update via the pseudo-inverse; keeps the solution
    /// unchanged along unconstrained directions.
    #[default]
    PseudoInverse,
    /// Tikhonov-regularized solve with the given lambda.
    Regularized { lambda: f64 },
}

fn strategy_solve(
    strategy: SolveStrategy,
    a: &DMatrix<f64>,
    b: &DVector<f64>,
) -> Result<DVector<f64>> {
    match strategy {
        SolveStrategy::PseudoInverse => pinv_apply(a, b),
        SolveStrategy::Regularized { lambda } => solve_regularized(a, b, lambda),
    }
}

#[derive(Debug, Clone)]
enum Phase {
    Direct {
        msis: Vec<RegressionMsi>,
    },
    Iterative {
        curvature: DMatrix<f64>,
        rhs_cache: DVector<f64>,
    },
}

/// Phase tag reported by [`RegressionLearner::memory_footprint`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PhaseLabel {
    Direct,
    Iterative,
}

/// Float count and phase of the learner's task memory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MemoryFootprint {
    pub float_count: usize,
    pub phase_label: PhaseLabel,
}

/// Continual regression learner; call [`learn_task`](Self::learn_task)
/// sequentially, read the solution at any point.
#[derive(Debug, Clone)]
pub struct RegressionLearner {
    feature_map: FeatureMap,
    strategy: SolveStrategy,
    phase: Phase,
    solution: DVector<f64>,
    total_samples: usize,
    rank_sum: usize,
    tasks_seen: usize,
}

impl RegressionLearner {
    pub fn new(feature_map: FeatureMap, strategy: SolveStrategy) -> Self {
        let dim = feature_map.output_dim();
        Self {
            feature_map,
            strategy,
            phase: Phase::Direct { msis: Vec::new() },
            solution: DVector::zeros(dim),
            total_samples: 0,
            rank_sum: 0,
            tasks_seen: 0,
        }
    }

    /// Current Pareto-optimal solution (zero before any task).
    pub fn solution(&self) -> &DVector<f64> {
        &self.solution
    }

    pub fn feature_map(&self) -> &FeatureMap {
        &self.feature_map
    }

    pub fn total_samples(&self) -> usize {
        self.total_samples
    }

    pub fn tasks_seen(&self) -> usize {
        self.tasks_seen
    }

    pub fn rank_sum(&self) -> usize {
        self.rank_sum
    }

    pub fn phase_label(&self) -> PhaseLabel {
        match self.phase {
            Phase::Direct { .. } => PhaseLabel::Direct,
            Phase::Iterative { .. } => PhaseLabel::Iterative,
        }
    }

    /// Task-memory float count: the stored MSIs while direct, and exactly
    /// `d^2 + 2d` (curvature, solution, cached right-hand side) afterwards.
    pub fn memory_footprint(&self) -> MemoryFootprint {
        let d = self.feature_map.output_dim();
        match &self.phase {
            Phase::Direct { msis } => MemoryFootprint {
                float_count: msis.iter().map(RegressionMsi::float_count).sum(),
                phase_label: PhaseLabel::Direct,
            },
            Phase::Iterative { .. } => MemoryFootprint {
                float_count: d * d + 2 * d,
                phase_label: PhaseLabel::Iterative,
            },
        }
    }

    /// Incorporates the next task. Rank-zero tasks (all-zero features) carry
    /// no constraint: they are skipped with a warning, though their samples
    /// still count toward the preference weights.
    pub fn learn_task(&mut self, dataset: &TaskDataset) -> Result<()> {
        if dataset.inputs().ncols() != self.feature_map.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.feature_map.input_dim(),
                got: dataset.inputs().ncols(),
            });
        }
        let msi = match compute_msi(dataset, &self.feature_map) {
            Ok(msi) => msi,
            Err(Error::RankZero) => {
                log::warn!(
                    "task {} has all-zero features; skipping (its samples still reweight)",
                    dataset.task_id()
                );
                self.absorb_empty_task(dataset.n());
                return Ok(());
            }
            Err(e) => return Err(e),
        };
        self.absorb_msi(msi)
    }

    fn absorb_empty_task(&mut self, n: usize) {
        let previous = self.total_samples;
        self.total_samples += n;
        self.tasks_seen += 1;
        if let Phase::Iterative {
            curvature,
            rhs_cache,
        } = &mut self.phase
        {
            // Both sides of the normal equations shrink by the same factor,
            // so the solution is untouched.
            let ratio = previous as f64 / self.total_samples as f64;
            curvature.scale_mut(ratio);
            rhs_cache.scale_mut(ratio);
        }
    }

    fn absorb_msi(&mut self, msi: RegressionMsi) -> Result<()> {
        let dim = self.feature_map.output_dim();
        let n = msi.n();
        let previous = self.total_samples;
        self.total_samples += n;
        self.tasks_seen += 1;

        match &mut self.phase {
            Phase::Direct { msis } => {
                self.rank_sum += msi.rank();
                msis.push(msi);
                let counts: Vec<usize> = msis.iter().map(RegressionMsi::n).collect();
                let prefs = preferences(&counts)?;
                self.solution = direct_solve_with(self.strategy, msis, &prefs)?;
                if self.rank_sum > dim {
                    // Fold every stored MSI into the fixed-size state. The
                    // weights use the full sample total so later incremental
                    // rescaling stays exact even when tasks were skipped.
                    let total = self.total_samples as f64;
                    let mut curvature = DMatrix::zeros(dim, dim);
                    let mut rhs_cache = DVector::zeros(dim);
                    for stored in msis.iter() {
                        let weight = stored.n() as f64 / total / stored.n() as f64;
                        curvature += stored.gram().scale(weight);
                        rhs_cache += stored.gram_targets().scale(weight);
                    }
                    self.phase = Phase::Iterative {
                        curvature,
                        rhs_cache,
                    };
                }
            }
            Phase::Iterative {
                curvature,
                rhs_cache,
            } => {
                self.rank_sum += msi.rank();
                let total = self.total_samples as f64;
                let ratio = previous as f64 / total;
                let alpha_over_n = (n as f64 / total) / n as f64;

                curvature.scale_mut(ratio);
                *curvature += msi.gram().scale(alpha_over_n);
                rhs_cache.scale_mut(ratio);
                *rhs_cache += msi.gram_targets().scale(alpha_over_n);

                // Residual of the new task at the previous solution, pushed
                // through the task's singular structure.
                let mut resid = msi.rotated_targets().clone()
                    - msi.right_vectors().transpose() * &self.solution;
                for (i, r) in resid.iter_mut().enumerate() {
                    let s = msi.singular_values()[i];
                    *r *= s * s;
                }
                let rhs = (msi.right_vectors() * resid).scale(alpha_over_n);
                let delta = strategy_solve(self.strategy, curvature, &rhs)?;
                self.solution += delta;
            }
        }
        Ok(())
    }

    /// Serializes the learner as a versioned checkpoint (see
    /// [`RegressionCheckpoint`]).
    pub fn save_checkpoint<W: Write>(&self, writer: W) -> Result<()> {
        let checkpoint = RegressionCheckpoint::from_learner(self);
        serde_json::to_writer_pretty(writer, &checkpoint)?;
        Ok(())
    }

    /// Restores a learner from [`save_checkpoint`](Self::save_checkpoint)
    /// output, enabling resume-from-task-k.
    pub fn load_checkpoint<R: Read>(reader: R) -> Result<Self> {
        let checkpoint: RegressionCheckpoint = serde_json::from_reader(reader)?;
        checkpoint.into_learner()
    }
}

fn direct_solve_with(
    strategy: SolveStrategy,
    msis: &[RegressionMsi],
    prefs: &PreferenceVector,
) -> Result<DVector<f64>> {
    if msis.is_empty() {
        return Err(Error::EmptySequence);
    }
    if prefs.len() != msis.len() {
        return Err(Error::DimensionMismatch {
            expected: msis.len(),
            got: prefs.len(),
        });
    }
    let dim = msis[0].dim();
    let mut lhs = DMatrix::zeros(dim, dim);
    let mut rhs = DVector::zeros(dim);
    for (msi, &weight) in msis.iter().zip(prefs.weights.iter()) {
        if msi.dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: msi.dim(),
            });
        }
        let scale = weight / msi.n() as f64;
        lhs += msi.gram().scale(scale);
        rhs += msi.gram_targets().scale(scale);
    }
    strategy_solve(strategy, &lhs, &rhs)
}

/// Solves the scalarized normal equations over a set of MSIs directly,
/// minimum-norm if singular. Arbitrary simplex preferences are accepted.
pub fn direct_solve(msis: &[RegressionMsi], prefs: &PreferenceVector) -> Result<DVector<f64>> {
    direct_solve_with(SolveStrategy::PseudoInverse, msis, prefs)
}

const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct MsiRecord {
    rank: usize,
    dim: usize,
    n: usize,
    min_loss: f64,
    task_id: usize,
    sigma: Vec<f64>,
    y_tilde: Vec<f64>,
    v_col_major: Vec<f64>,
}

impl MsiRecord {
    fn from_msi(msi: &RegressionMsi) -> Self {
        Self {
            rank: msi.rank(),
            dim: msi.dim(),
            n: msi.n(),
            min_loss: msi.min_loss(),
            task_id: msi.task_id(),
            sigma: msi.singular_values().iter().cloned().collect(),
            y_tilde: msi.rotated_targets().iter().cloned().collect(),
            v_col_major: msi.right_vectors().as_slice().to_vec(),
        }
    }

    fn into_msi(self) -> Result<RegressionMsi> {
        if self.sigma.len() != self.rank
            || self.y_tilde.len() != self.rank
            || self.v_col_major.len() != self.rank * self.dim
        {
            return Err(Error::ConfigParse("inconsistent MSI record".into()));
        }
        Ok(RegressionMsi::from_parts(
            DMatrix::from_column_slice(self.dim, self.rank, &self.v_col_major),
            DVector::from_vec(self.sigma),
            DVector::from_vec(self.y_tilde),
            self.n,
            self.min_loss,
            self.task_id,
        ))
    }
}

/// Versioned on-disk learner state: phase, curvature (column-major),
/// solution, sample totals, and rank budget.
#[derive(Serialize, Deserialize)]
pub struct RegressionCheckpoint {
    schema_version: u32,
    phase: PhaseLabel,
    dim: usize,
    total_samples: usize,
    rank_sum: usize,
    tasks_seen: usize,
    strategy: SolveStrategy,
    feature_map: FeatureMap,
    theta_star: Vec<f64>,
    curvature_col_major: Option<Vec<f64>>,
    rhs_cache: Option<Vec<f64>>,
    stored_msis: Vec<MsiRecord>,
}

impl RegressionCheckpoint {
    fn from_learner(learner: &RegressionLearner) -> Self {
        let dim = learner.feature_map.output_dim();
        let (phase, curvature, rhs, msis) = match &learner.phase {
            Phase::Direct { msis } => (
                PhaseLabel::Direct,
                None,
                None,
                msis.iter().map(MsiRecord::from_msi).collect(),
            ),
            Phase::Iterative {
                curvature,
                rhs_cache,
            } => (
                PhaseLabel::Iterative,
                Some(curvature.as_slice().to_vec()),
                Some(rhs_cache.iter().cloned().collect()),
                Vec::new(),
            ),
        };
        Self {
            schema_version: CHECKPOINT_VERSION,
            phase,
            dim,
            total_samples: learner.total_samples,
            rank_sum: learner.rank_sum,
            tasks_seen: learner.tasks_seen,
            strategy: learner.strategy,
            feature_map: learner.feature_map.clone(),
            theta_star: learner.solution.iter().cloned().collect(),
            curvature_col_major: curvature,
            rhs_cache: rhs,
            stored_msis: msis,
        }
    }

    fn into_learner(self) -> Result<RegressionLearner> {
        if self.schema_version != CHECKPOINT_VERSION {
            return Err(Error::SchemaVersionMismatch {
                expected: CHECKPOINT_VERSION,
                got: self.schema_version,
            });
        }
        if self.feature_map.output_dim() != self.dim || self.theta_star.len() != self.dim {
            return Err(Error::ConfigParse("checkpoint dimensions disagree".into()));
        }
        let phase = match self.phase {
            PhaseLabel::Direct => Phase::Direct {
                msis: self
                    .stored_msis
                    .into_iter()
                    .map(MsiRecord::into_msi)
                    .collect::<Result<Vec<_>>>()?,
            },
            PhaseLabel::Iterative => {
                let curvature = self
                    .curvature_col_major
                    .ok_or_else(|| Error::ConfigParse("missing curvature".into()))?;
                let rhs = self
                    .rhs_cache
                    .ok_or_else(|| Error::ConfigParse("missing rhs cache".into()))?;
                if curvature.len() != self.dim * self.dim || rhs.len() != self.dim {
                    return Err(Error::ConfigParse("checkpoint dimensions disagree".into()));
                }
                Phase::Iterative {
                    curvature: DMatrix::from_column_slice(self.dim, self.dim, &curvature),
                    rhs_cache: DVector::from_vec(rhs),
                }
            }
        };
        Ok(RegressionLearner {
            feature_map: self.feature_map,
            strategy: self.strategy,
            phase,
            solution: DVector::from_vec(self.theta_star),
            total_samples: self.total_samples,
            rank_sum: self.rank_sum,
            tasks_seen: self.tasks_seen,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::msi::forgetting;
    use approx::assert_relative_eq;
    use nalgebra::{DMatrix, DVector};
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn regression_task(id: usize, x: DMatrix<f64>, y: DVector<f64>) -> TaskDataset {
        TaskDataset::regression(id, x, y).unwrap()
    }

    /// Minimum-norm least squares over concatenated data, via the Gram
    /// pseudo-inverse, independent of the learner's accumulation path.
    fn joint_least_squares(tasks: &[&TaskDataset]) -> DVector<f64> {
        let d = tasks[0].dim();
        let total: usize = tasks.iter().map(|t| t.n()).sum();
        let mut x = DMatrix::zeros(total, d);
        let mut y = DVector::zeros(total);
        let mut row = 0;
        for task in tasks {
            x.rows_mut(row, task.n()).copy_from(task.inputs());
            y.rows_mut(row, task.n())
                .copy_from(&task.target_vector().unwrap());
            row += task.n();
        }
        pinv_apply(&(x.transpose() * &x), &(x.transpose() * y)).unwrap()
    }

    #[test]
    fn single_task_is_least_squares() {
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 1.0, 1.0]);
        let y = DVector::from_vec(vec![1.0, 2.0, 3.5]);
        let task = regression_task(0, x, y);
        let mut learner =
            RegressionLearner::new(FeatureMap::identity(2), SolveStrategy::PseudoInverse);
        learner.learn_task(&task).unwrap();
        let oracle = joint_least_squares(&[&task]);
        assert_relative_eq!(learner.solution(), &oracle, epsilon = 1e-10);
    }

    /// Joint oracle for two conflicting scalar tasks with equal counts: the
    /// global least-squares fit of {(1, 1), (1, 3)} is 2.
    #[test]
    fn two_conflicting_tasks_average() {
        let t1 = regression_task(
            0,
            DMatrix::from_row_slice(1, 1, &[1.0]),
            DVector::from_vec(vec![1.0]),
        );
        let t2 = regression_task(
            1,
            DMatrix::from_row_slice(1, 1, &[1.0]),
            DVector::from_vec(vec![3.0]),
        );
        let mut learner =
            RegressionLearner::new(FeatureMap::identity(1), SolveStrategy::PseudoInverse);
        learner.learn_task(&t1).unwrap();
        learner.learn_task(&t2).unwrap();
        assert_relative_eq!(learner.solution()[0], 2.0, epsilon = 1e-10);
    }

    #[test]
    fn zero_shift_zero_noise_keeps_solution() {
        let seq = crate::tasks::generate_regression_sequence(2, 4, 5, 8, 0.0, 0.0).unwrap();
        let mut learner =
            RegressionLearner::new(FeatureMap::identity(4), SolveStrategy::PseudoInverse);
        let mut solutions = Vec::new();
        let mut msis = Vec::new();
        for task in &seq.tasks {
            learner.learn_task(task).unwrap();
            solutions.push(learner.solution().clone());
            msis.push(compute_msi(task, learner.feature_map()).unwrap());
        }
        for s in &solutions {
            assert_relative_eq!(s, &solutions[0], epsilon = 1e-8);
        }
        let last = solutions.last().unwrap();
        for msi in &msis {
            assert!(forgetting(msi, last).unwrap() <= 1e-16);
        }
    }

    #[test]
    fn direct_solve_square_task_interpolates() {
        let x = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 0.0, 1.0]);
        let y = DVector::from_vec(vec![3.0, 1.0]);
        let task = regression_task(0, x.clone(), y.clone());
        let msi = compute_msi(&task, &FeatureMap::identity(2)).unwrap();
        let prefs = preferences(&[task.n()]).unwrap();
        let theta = direct_solve(&[msi], &prefs).unwrap();
        assert_relative_eq!(&x * &theta, y, epsilon = 1e-10);
    }

    /// Block-diagonal hand solve: two rank-one tasks on orthogonal axes are
    /// each fit exactly on their own subspace.
    #[test]
    fn direct_solve_orthogonal_rank_one_tasks() {
        let t1 = regression_task(
            0,
            DMatrix::from_row_slice(1, 2, &[2.0, 0.0]),
            DVector::from_vec(vec![4.0]),
        );
        let t2 = regression_task(
            1,
            DMatrix::from_row_slice(1, 2, &[0.0, 1.0]),
            DVector::from_vec(vec![-3.0]),
        );
        let map = FeatureMap::identity(2);
        let msis = vec![
            compute_msi(&t1, &map).unwrap(),
            compute_msi(&t2, &map).unwrap(),
        ];
        let prefs = preferences(&[1, 1]).unwrap();
        let theta = direct_solve(&msis, &prefs).unwrap();
        assert_relative_eq!(theta[0], 2.0, epsilon = 1e-10);
        assert_relative_eq!(theta[1], -3.0, epsilon = 1e-10);
        let oracle = joint_least_squares(&[&t1, &t2]);
        assert_relative_eq!(theta, oracle, epsilon = 1e-10);
    }

    #[test]
    fn iterative_matches_joint_oracle_on_random_mix() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for trial in 0..10 {
            let d = rng.random_range(2..9);
            let tasks: Vec<TaskDataset> = (0..6)
                .map(|t| {
                    let n = rng.random_range(1..(2 * d + 3));
                    let x = DMatrix::from_fn(n, d, |_, _| rng.sample(StandardNormal));
                    let y = DVector::from_fn(n, |_, _| rng.sample(StandardNormal));
                    regression_task(t, x, y)
                })
                .collect();
            let mut learner =
                RegressionLearner::new(FeatureMap::identity(d), SolveStrategy::PseudoInverse);
            for task in &tasks {
                learner.learn_task(task).unwrap();
            }
            let oracle = joint_least_squares(&tasks.iter().collect::<Vec<_>>());
            let rel = (learner.solution() - &oracle).norm() / (1.0 + oracle.norm());
            assert!(rel <= 1e-7, "trial {trial}: relative gap {rel}");
        }
    }

    #[test]
    fn phase_switch_happens_when_rank_budget_exceeded() {
        // d = 4, each task contributes rank 2: switch after task 3 (ranks 6 > 4).
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        let mut learner =
            RegressionLearner::new(FeatureMap::identity(4), SolveStrategy::PseudoInverse);
        let mut footprints = Vec::new();
        for t in 0..5 {
            let x = DMatrix::from_fn(2, 4, |_, _| rng.sample::<f64, _>(StandardNormal));
            let y = DVector::from_fn(2, |_, _| rng.sample(StandardNormal));
            learner.learn_task(&regression_task(t, x, y)).unwrap();
            footprints.push(learner.memory_footprint());
        }
        assert_eq!(footprints[0].phase_label, PhaseLabel::Direct);
        assert_eq!(footprints[0].float_count, 2 * (4 + 2));
        assert_eq!(footprints[1].phase_label, PhaseLabel::Direct);
        assert_eq!(footprints[1].float_count, 2 * 2 * (4 + 2));
        assert_eq!(footprints[2].phase_label, PhaseLabel::Iterative);
        assert_eq!(footprints[2].float_count, 4 * 4 + 2 * 4);
        // Constant afterwards.
        assert_eq!(footprints[3], footprints[2]);
        assert_eq!(footprints[4], footprints[2]);
    }

    #[test]
    fn iterative_footprint_at_d_ten() {
        let seq = crate::tasks::generate_regression_sequence(7, 10, 105, 12, 0.5, 0.1).unwrap();
        let mut learner =
            RegressionLearner::new(FeatureMap::identity(10), SolveStrategy::PseudoInverse);
        let mut iterative_counts = Vec::new();
        for task in &seq.tasks {
            learner.learn_task(task).unwrap();
            let footprint = learner.memory_footprint();
            if footprint.phase_label == PhaseLabel::Iterative {
                iterative_counts.push(footprint.float_count);
            }
        }
        assert!(iterative_counts.len() >= 100);
        assert!(iterative_counts.iter().all(|&c| c == 120));
    }

    #[test]
    fn direct_and_iterative_agree_on_prefixes() {
        let mut rng = ChaCha8Rng::seed_from_u64(37);
        let d = 5;
        let map = FeatureMap::identity(d);
        let tasks: Vec<TaskDataset> = (0..6)
            .map(|t| {
                let n = 2;
                let x = DMatrix::from_fn(n, d, |_, _| rng.sample::<f64, _>(StandardNormal));
                let y = DVector::from_fn(n, |_, _| rng.sample(StandardNormal));
                regression_task(t, x, y)
            })
            .collect();
        let mut learner = RegressionLearner::new(map.clone(), SolveStrategy::PseudoInverse);
        let mut msis = Vec::new();
        for (k, task) in tasks.iter().enumerate() {
            learner.learn_task(task).unwrap();
            msis.push(compute_msi(task, &map).unwrap());
            let counts: Vec<usize> = msis.iter().map(RegressionMsi::n).collect();
            let direct = direct_solve(&msis, &preferences(&counts).unwrap()).unwrap();
            let rel = (learner.solution() - &direct).norm() / (1.0 + direct.norm());
            assert!(rel <= 1e-7, "prefix {k}: gap {rel}");
        }
    }

    #[test]
    fn rank_zero_task_skipped_without_changing_solution() {
        let t1 = regression_task(
            0,
            DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]),
            DVector::from_vec(vec![1.0, 2.0]),
        );
        let zero = regression_task(
            1,
            DMatrix::zeros(3, 2),
            DVector::from_vec(vec![5.0, 5.0, 5.0]),
        );
        let mut learner =
            RegressionLearner::new(FeatureMap::identity(2), SolveStrategy::PseudoInverse);
        learner.learn_task(&t1).unwrap();
        let before = learner.solution().clone();
        learner.learn_task(&zero).unwrap();
        assert_relative_eq!(learner.solution(), &before, epsilon = 1e-12);
        assert_eq!(learner.total_samples(), 5);
        assert_eq!(learner.tasks_seen(), 2);
    }

    #[test]
    fn checkpoint_round_trip_both_phases() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let d = 3;
        let make = |rng: &mut ChaCha8Rng, t: usize| {
            let x = DMatrix::from_fn(2, d, |_, _| rng.sample::<f64, _>(StandardNormal));
            let y = DVector::from_fn(2, |_, _| rng.sample(StandardNormal));
            regression_task(t, x, y)
        };
        let mut learner =
            RegressionLearner::new(FeatureMap::identity(d), SolveStrategy::PseudoInverse);
        learner.learn_task(&make(&mut rng, 0)).unwrap();
        assert_eq!(learner.phase_label(), PhaseLabel::Direct);

        let mut buffer = Vec::new();
        learner.save_checkpoint(&mut buffer).unwrap();
        let mut resumed = RegressionLearner::load_checkpoint(buffer.as_slice()).unwrap();

        // Continue both learners past the phase switch; they must agree.
        for t in 1..5 {
            let task = make(&mut rng, t);
            learner.learn_task(&task).unwrap();
            resumed.learn_task(&task).unwrap();
        }
        assert_eq!(learner.phase_label(), PhaseLabel::Iterative);
        assert_relative_eq!(learner.solution(), resumed.solution(), epsilon = 1e-12);

        let mut buffer = Vec::new();
        learner.save_checkpoint(&mut buffer).unwrap();
        let restored = RegressionLearner::load_checkpoint(buffer.as_slice()).unwrap();
        assert_relative_eq!(learner.solution(), restored.solution(), epsilon = 1e-15);
        assert_eq!(restored.phase_label(), PhaseLabel::Iterative);
        assert_eq!(restored.total_samples(), learner.total_samples());
    }

    #[test]
    fn regularized_strategy_close_to_pinv_on_well_posed_tasks() {
        let seq = crate::tasks::generate_regression_sequence(5, 3, 4, 20, 0.5, 0.1).unwrap();
        let mut exact =
            RegressionLearner::new(FeatureMap::identity(3), SolveStrategy::PseudoInverse);
        let mut ridge = RegressionLearner::new(
            FeatureMap::identity(3),
            SolveStrategy::Regularized { lambda: 1e-6 },
        );
        for task in &seq.tasks {
            exact.learn_task(task).unwrap();
            ridge.learn_task(task).unwrap();
        }
        let gap = (exact.solution() - ridge.solution()).norm();
        assert!(gap <= 1e-4, "ridge deviation {gap}");
    }
}
