//! Task datasets, preference vectors, and seeded synthetic benchmark
//! generators.
//!
//! Randomness uses ChaCha8, a named, seedable, portable generator. Every
//! generator draws from dedicated sub-streams (`set_stream`): stream 0 holds
//! the drifting ground-truth walk, stream `t + 1` holds task `t`'s data, so
//! tasks can be produced independently yet reproducibly. Trial-level seeds
//! are derived with [`substream_seed`], a SplitMix64 mix, so trials
//! parallelize without sharing streams.

use std::io::{Read, Write};

use nalgebra::{DMatrix, DVector};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::util::fmt_f64;

/// One task's inputs and targets; immutable once created.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskDataset {
    x: DMatrix<f64>,
    y: DMatrix<f64>,
    task_id: usize,
}

impl TaskDataset {
    /// Regression dataset with scalar targets.
    pub fn regression(task_id: usize, x: DMatrix<f64>, y: DVector<f64>) -> Result<Self> {
        if x.nrows() == 0 {
            return Err(Error::InvalidConfig("dataset must have n >= 1".into()));
        }
        if y.len() != x.nrows() {
            return Err(Error::DimensionMismatch {
                expected: x.nrows(),
                got: y.len(),
            });
        }
        let n = x.nrows();
        let y = DMatrix::from_iterator(n, 1, y.iter().cloned());
        Ok(Self { x, y, task_id })
    }

    /// Classification dataset; every row of `y` must be one-hot.
    pub fn classification(task_id: usize, x: DMatrix<f64>, y: DMatrix<f64>) -> Result<Self> {
        if x.nrows() == 0 {
            return Err(Error::InvalidConfig("dataset must have n >= 1".into()));
        }
        if y.nrows() != x.nrows() {
            return Err(Error::DimensionMismatch {
                expected: x.nrows(),
                got: y.nrows(),
            });
        }
        if y.ncols() < 2 {
            return Err(Error::InvalidConfig(
                "classification targets need at least 2 classes".into(),
            ));
        }
        for i in 0..y.nrows() {
            let row = y.row(i);
            let ones = row.iter().filter(|&&v| v == 1.0).count();
            let zeros = row.iter().filter(|&&v| v == 0.0).count();
            if ones != 1 || ones + zeros != y.ncols() {
                return Err(Error::InvalidConfig(format!(
                    "row {i} of classification targets is not one-hot"
                )));
            }
        }
        Ok(Self { x, y, task_id })
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn dim(&self) -> usize {
        self.x.ncols()
    }

    /// Number of target columns (1 for regression, K for K-class tasks).
    pub fn num_outputs(&self) -> usize {
        self.y.ncols()
    }

    pub fn task_id(&self) -> usize {
        self.task_id
    }

    pub fn inputs(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn targets(&self) -> &DMatrix<f64> {
        &self.y
    }

    /// Scalar targets as a vector; errors unless `num_outputs() == 1`.
    pub fn target_vector(&self) -> Result<DVector<f64>> {
        if self.y.ncols() != 1 {
            return Err(Error::DimensionMismatch {
                expected: 1,
                got: self.y.ncols(),
            });
        }
        Ok(DVector::from_iterator(self.n(), self.y.iter().cloned()))
    }

    /// Class index per sample for one-hot targets.
    pub fn labels(&self) -> Vec<usize> {
        (0..self.n())
            .map(|i| {
                self.y
                    .row(i)
                    .iter()
                    .position(|&v| v == 1.0)
                    .unwrap_or(0)
            })
            .collect()
    }
}

/// Simplex weights over tasks plus the total sample count they cover.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreferenceVector {
    pub weights: Vec<f64>,
    pub total_samples: usize,
}

impl PreferenceVector {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

/// Sample-proportional preferences: `weights[t] = n_t / sum(n)`.
///
/// This is the choice under which the scalarized multi-task solution equals
/// the empirical-risk minimizer over the concatenation of all tasks.
pub fn preferences(sample_counts: &[usize]) -> Result<PreferenceVector> {
    if sample_counts.is_empty() {
        return Err(Error::EmptySequence);
    }
    if sample_counts.contains(&0) {
        return Err(Error::ZeroCount);
    }
    let total: usize = sample_counts.iter().sum();
    let weights = sample_counts
        .iter()
        .map(|&n| n as f64 / total as f64)
        .collect();
    Ok(PreferenceVector {
        weights,
        total_samples: total,
    })
}

/// SplitMix64 step; the documented trial/sub-stream seed derivation.
pub fn substream_seed(seed: u64, index: u64) -> u64 {
    fn splitmix64(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
    splitmix64(seed.wrapping_add(splitmix64(index.wrapping_add(1))))
}

fn task_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn standard_normal_matrix(rng: &mut ChaCha8Rng, n: usize, d: usize) -> DMatrix<f64> {
    // Row-major fill order so the sample stream is stable for any d.
    let mut m = DMatrix::zeros(n, d);
    for i in 0..n {
        for j in 0..d {
            m[(i, j)] = rng.sample(StandardNormal);
        }
    }
    m
}

fn standard_normal_vector(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.sample(StandardNormal))
}

/// A generated regression task sequence with its drifting ground truth.
#[derive(Debug, Clone)]
pub struct RegressionSequence {
    pub tasks: Vec<TaskDataset>,
    pub ground_truth: Vec<DVector<f64>>,
}

/// Synthetic regression benchmark: Gaussian inputs, targets from a
/// ground-truth parameter that performs a Gaussian random walk between
/// tasks (`theta_k = theta_{k-1} + N(0, shift_sigma^2 I)`).
pub fn generate_regression_sequence(
    seed: u64,
    d: usize,
    num_tasks: usize,
    n_per_task: usize,
    shift_sigma: f64,
    noise_sigma: f64,
) -> Result<RegressionSequence> {
    if d == 0 || num_tasks == 0 || n_per_task == 0 {
        return Err(Error::InvalidConfig(
            "d, num_tasks, and n_per_task must be positive".into(),
        ));
    }
    if shift_sigma < 0.0 || noise_sigma < 0.0 {
        return Err(Error::InvalidConfig("sigmas must be non-negative".into()));
    }

    let mut walk_rng = task_rng(seed, 0);
    let mut theta = standard_normal_vector(&mut walk_rng, d);
    let mut ground_truth = Vec::with_capacity(num_tasks);
    let mut tasks = Vec::with_capacity(num_tasks);
    for t in 0..num_tasks {
        if t > 0 {
            let step = standard_normal_vector(&mut walk_rng, d);
            theta += step.scale(shift_sigma);
        }
        ground_truth.push(theta.clone());

        let mut rng = task_rng(seed, t as u64 + 1);
        let x = standard_normal_matrix(&mut rng, n_per_task, d);
        let noise = standard_normal_vector(&mut rng, n_per_task).scale(noise_sigma);
        let y = &x * &theta + noise;
        tasks.push(TaskDataset::regression(t, x, y)?);
    }
    Ok(RegressionSequence {
        tasks,
        ground_truth,
    })
}

const CLASS_RESAMPLE_LIMIT: usize = 100;

/// Classification analogue of the regression generator: one-hot labels are
/// drawn from the softmax of a drifting linear model. Each task is resampled
/// (bounded retries) until every class appears at least once.
pub fn generate_classification_sequence(
    seed: u64,
    d: usize,
    num_tasks: usize,
    n_per_task: usize,
    num_classes: usize,
    shift_sigma: f64,
) -> Result<Vec<TaskDataset>> {
    if d == 0 || num_tasks == 0 || n_per_task == 0 {
        return Err(Error::InvalidConfig(
            "d, num_tasks, and n_per_task must be positive".into(),
        ));
    }
    if num_classes < 2 {
        return Err(Error::InvalidConfig("num_classes must be >= 2".into()));
    }
    if shift_sigma < 0.0 {
        return Err(Error::InvalidConfig("shift_sigma must be non-negative".into()));
    }

    let mut walk_rng = task_rng(seed, 0);
    let mut theta = standard_normal_matrix(&mut walk_rng, d, num_classes);
    let mut tasks = Vec::with_capacity(num_tasks);
    for t in 0..num_tasks {
        if t > 0 {
            let step = standard_normal_matrix(&mut walk_rng, d, num_classes);
            theta += step.scale(shift_sigma);
        }

        let mut rng = task_rng(seed, t as u64 + 1);
        let mut accepted = None;
        for _ in 0..CLASS_RESAMPLE_LIMIT {
            let x = standard_normal_matrix(&mut rng, n_per_task, d);
            let mut y = DMatrix::zeros(n_per_task, num_classes);
            let mut counts = vec![0usize; num_classes];
            for i in 0..n_per_task {
                let logits: Vec<f64> = (0..num_classes)
                    .map(|k| x.row(i).transpose().dot(&theta.column(k).into_owned()))
                    .collect();
                let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let expd: Vec<f64> = logits.iter().map(|&l| (l - max).exp()).collect();
                let total: f64 = expd.iter().sum();
                let mut u: f64 = rng.random::<f64>() * total;
                let mut label = num_classes - 1;
                for (k, &e) in expd.iter().enumerate() {
                    if u < e {
                        label = k;
                        break;
                    }
                    u -= e;
                }
                y[(i, label)] = 1.0;
                counts[label] += 1;
            }
            if counts.iter().all(|&c| c > 0) {
                accepted = Some((x, y));
                break;
            }
        }
        match accepted {
            Some((x, y)) => tasks.push(TaskDataset::classification(t, x, y)?),
            None => {
                return Err(Error::ClassStarvation {
                    class: 0,
                    retries: CLASS_RESAMPLE_LIMIT,
                })
            }
        }
    }
    Ok(tasks)
}

/// Writes task datasets as CSV with header `task_id,x0..x{d-1},y0..y{K-1}`.
pub fn write_tasks_csv<W: Write>(writer: W, tasks: &[TaskDataset]) -> Result<()> {
    if tasks.is_empty() {
        return Err(Error::EmptySequence);
    }
    let d = tasks[0].dim();
    let k = tasks[0].num_outputs();
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["task_id".to_string()];
    header.extend((0..d).map(|j| format!("x{j}")));
    header.extend((0..k).map(|j| format!("y{j}")));
    w.write_record(&header)?;
    for task in tasks {
        if task.dim() != d || task.num_outputs() != k {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: task.dim(),
            });
        }
        for i in 0..task.n() {
            let mut record = vec![task.task_id().to_string()];
            record.extend(task.inputs().row(i).iter().map(|&v| fmt_f64(v)));
            record.extend(task.targets().row(i).iter().map(|&v| fmt_f64(v)));
            w.write_record(&record)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads datasets written by [`write_tasks_csv`]; rows are grouped by
/// `task_id` in order of first appearance.
pub fn read_tasks_csv<R: Read>(reader: R) -> Result<Vec<TaskDataset>> {
    let mut r = csv::Reader::from_reader(reader);
    let header = r.headers()?.clone();
    let d = header.iter().filter(|h| h.starts_with('x')).count();
    let k = header.iter().filter(|h| h.starts_with('y')).count();
    if d == 0 || k == 0 {
        return Err(Error::ConfigParse("csv header lacks x/y columns".into()));
    }

    let mut groups: Vec<(usize, Vec<f64>, Vec<f64>)> = Vec::new();
    for record in r.records() {
        let record = record?;
        if record.len() != 1 + d + k {
            return Err(Error::ConfigParse(format!(
                "row has {} fields, expected {}",
                record.len(),
                1 + d + k
            )));
        }
        let task_id: usize = record[0]
            .parse()
            .map_err(|e| Error::ConfigParse(format!("bad task_id: {e}")))?;
        let parse = |s: &str| -> Result<f64> {
            s.parse()
                .map_err(|e| Error::ConfigParse(format!("bad float '{s}': {e}")))
        };
        if groups.last().map(|g| g.0) != Some(task_id) {
            groups.push((task_id, Vec::new(), Vec::new()));
        }
        let group = groups.last_mut().expect("just pushed");
        for j in 0..d {
            group.1.push(parse(&record[1 + j])?);
        }
        for j in 0..k {
            group.2.push(parse(&record[1 + d + j])?);
        }
    }

    let mut tasks = Vec::with_capacity(groups.len());
    for (task_id, xs, ys) in groups {
        let n = xs.len() / d;
        let x = DMatrix::from_row_iterator(n, d, xs);
        if k == 1 {
            let y = DVector::from_vec(ys);
            tasks.push(TaskDataset::regression(task_id, x, y)?);
        } else {
            let y = DMatrix::from_row_iterator(n, k, ys);
            tasks.push(TaskDataset::classification(task_id, x, y)?);
        }
    }
    Ok(tasks)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn single_task_preference() {
        let p = preferences(&[5]).unwrap();
        assert_eq!(p.weights, vec![1.0]);
        assert_eq!(p.total_samples, 5);
    }

    #[test]
    fn two_task_preference() {
        let p = preferences(&[2, 3]).unwrap();
        assert_relative_eq!(p.weights[0], 0.4, epsilon = 1e-15);
        assert_relative_eq!(p.weights[1], 0.6, epsilon = 1e-15);
    }

    #[test]
    fn prefix_recursion_holds() {
        // weights over [2,3,5] equal the [2,3] weights rescaled by N2/N3,
        // extended by the new task's own weight.
        let p2 = preferences(&[2, 3]).unwrap();
        let p3 = preferences(&[2, 3, 5]).unwrap();
        let ratio = p2.total_samples as f64 / p3.total_samples as f64;
        assert_relative_eq!(p3.weights[0], ratio * p2.weights[0], epsilon = 1e-15);
        assert_relative_eq!(p3.weights[1], ratio * p2.weights[1], epsilon = 1e-15);
        assert_relative_eq!(p3.weights[2], 0.5, epsilon = 1e-15);
    }

    #[test]
    fn preference_errors() {
        assert!(matches!(preferences(&[]), Err(Error::EmptySequence)));
        assert!(matches!(preferences(&[1, 0]), Err(Error::ZeroCount)));
    }

    #[test]
    fn regression_generator_is_deterministic() {
        let a = generate_regression_sequence(99, 4, 3, 7, 0.5, 0.1).unwrap();
        let b = generate_regression_sequence(99, 4, 3, 7, 0.5, 0.1).unwrap();
        for (ta, tb) in a.tasks.iter().zip(&b.tasks) {
            assert_eq!(ta.inputs(), tb.inputs());
            assert_eq!(ta.targets(), tb.targets());
        }
        assert_eq!(a.ground_truth, b.ground_truth);
    }

    #[test]
    fn zero_shift_zero_noise_shares_minimizer() {
        let seq = generate_regression_sequence(3, 5, 4, 10, 0.0, 0.0).unwrap();
        for gt in &seq.ground_truth {
            assert_eq!(gt, &seq.ground_truth[0]);
        }
        for (t, task) in seq.tasks.iter().enumerate() {
            let resid = task.inputs() * &seq.ground_truth[t] - task.target_vector().unwrap();
            assert!(resid.norm() <= 1e-12, "task {t} residual {}", resid.norm());
        }
    }

    #[test]
    fn benchmark_size_matches_protocol() {
        let seq = generate_regression_sequence(1, 3, 10, 5, 0.5, 0.1).unwrap();
        assert_eq!(seq.tasks.len(), 10);
    }

    #[test]
    fn classification_generator_deterministic_and_covering() {
        let a = generate_classification_sequence(7, 3, 4, 30, 3, 0.5).unwrap();
        let b = generate_classification_sequence(7, 3, 4, 30, 3, 0.5).unwrap();
        for (ta, tb) in a.iter().zip(&b) {
            assert_eq!(ta.inputs(), tb.inputs());
            assert_eq!(ta.targets(), tb.targets());
        }
        for task in &a {
            let labels = task.labels();
            for class in 0..3 {
                assert!(labels.contains(&class), "class {class} missing");
            }
        }
    }

    #[test]
    fn classification_zero_shift_keeps_model() {
        let tasks = generate_classification_sequence(11, 2, 3, 40, 2, 0.0).unwrap();
        assert_eq!(tasks.len(), 3);
        // Zero shift keeps the drifting model constant; with per-task data
        // streams the draws differ but stay valid one-hot tasks.
        for task in &tasks {
            assert_eq!(task.num_outputs(), 2);
        }
    }

    #[test]
    fn csv_round_trip_regression() {
        let seq = generate_regression_sequence(21, 3, 2, 4, 0.3, 0.05).unwrap();
        let mut buffer = Vec::new();
        write_tasks_csv(&mut buffer, &seq.tasks).unwrap();
        let back = read_tasks_csv(buffer.as_slice()).unwrap();
        assert_eq!(back.len(), seq.tasks.len());
        for (orig, round) in seq.tasks.iter().zip(&back) {
            assert_eq!(orig.task_id(), round.task_id());
            assert_relative_eq!(orig.inputs(), round.inputs(), epsilon = 1e-15);
            assert_relative_eq!(orig.targets(), round.targets(), epsilon = 1e-15);
        }
    }

    #[test]
    fn csv_round_trip_classification() {
        let tasks = generate_classification_sequence(5, 2, 2, 12, 3, 0.2).unwrap();
        let mut buffer = Vec::new();
        write_tasks_csv(&mut buffer, &tasks).unwrap();
        let back = read_tasks_csv(buffer.as_slice()).unwrap();
        for (orig, round) in tasks.iter().zip(&back) {
            assert_eq!(orig.targets(), round.targets());
        }
    }

    #[test]
    fn one_hot_validation() {
        let x = DMatrix::from_row_slice(2, 1, &[1.0, -1.0]);
        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 1.0]);
        assert!(TaskDataset::classification(0, x.clone(), bad).is_err());
        let good = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]);
        assert!(TaskDataset::classification(0, x, good).is_ok());
    }

    #[test]
    fn substream_seeds_differ() {
        let s = substream_seed(42, 0);
        assert_ne!(s, substream_seed(42, 1));
        assert_ne!(substream_seed(42, 1), substream_seed(43, 1));
        assert_eq!(s, substream_seed(42, 0));
    }
}
