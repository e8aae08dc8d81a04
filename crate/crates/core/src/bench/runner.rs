//! Benchmark execution: generates task sequences, runs every configured
//! learner over every trial, and writes metric CSVs plus a JSON manifest.
//!
//! Trials run concurrently on independent sub-seeds; rows are sorted before
//! writing so outputs are byte-identical for a given (config, seed).

use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{BenchConfig, LearnerSpec};
use super::metrics::{
    aggregate, write_aggregate_csv, write_metrics_csv, write_timings_csv, MetricsRow,
    METRICS_SCHEMA_VERSION,
};
use crate::baselines::{
    replay_learn_task, sgd_finetune_task, LossKind, ReplayBuffer, ReplayOptions, SgdOptions,
};
use crate::error::{Error, Result};
use crate::msi::FeatureMap;
use crate::regression::{RegressionLearner, SolveStrategy};
use crate::tasks::{generate_regression_sequence, substream_seed, TaskDataset};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const METRICS_FILE: &str = "metrics.csv";
pub const AGGREGATE_FILE: &str = "aggregate.csv";
pub const TIMINGS_FILE: &str = "timings.csv";

/// Run manifest: config echo (output path blanked), versions, per-trial
/// seeds, and any learner failures. Deliberately carries no timestamps.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub crate_version: String,
    pub config: BenchConfig,
    pub trial_seeds: Vec<u64>,
    pub failures: Vec<FailureRecord>,
    pub files: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FailureRecord {
    pub trial: usize,
    pub learner: String,
    pub message: String,
}

/// Outcome of [`run_benchmark`].
#[derive(Debug)]
pub struct RunSummary {
    pub out_dir: PathBuf,
    pub rows: Vec<MetricsRow>,
    pub failures: Vec<FailureRecord>,
}

/// Minimum-norm least squares over the concatenation of all tasks; the
/// reference optimum every learner is scored against. Solved through the
/// pseudo-inverse of the stacked Gram matrix, one factorization of one
/// matrix, independent of any learner's accumulation path.
pub fn joint_least_squares(tasks: &[TaskDataset]) -> Result<DVector<f64>> {
    if tasks.is_empty() {
        return Err(Error::EmptySequence);
    }
    let d = tasks[0].dim();
    let total: usize = tasks.iter().map(TaskDataset::n).sum();
    let mut x = DMatrix::zeros(total, d);
    let mut y = DVector::zeros(total);
    let mut row = 0;
    for task in tasks {
        x.rows_mut(row, task.n()).copy_from(task.inputs());
        y.rows_mut(row, task.n()).copy_from(&task.target_vector()?);
        row += task.n();
    }
    let gram = x.transpose() * &x;
    let rhs = x.transpose() * y;
    crate::linalg::pinv_apply(&gram, &rhs)
}

/// Plain MSE of `theta` on one task.
fn task_mse(task: &TaskDataset, theta: &DVector<f64>) -> f64 {
    let resid = task.inputs() * theta - task.target_vector().expect("regression task");
    resid.norm_squared() / task.n() as f64
}

/// Plain MSE over tasks `0..=k` concatenated.
fn cumulative_mse(tasks: &[TaskDataset], k: usize, theta: &DVector<f64>) -> f64 {
    let mut sum = 0.0;
    let mut count = 0usize;
    for task in &tasks[..=k] {
        let resid = task.inputs() * theta - task.target_vector().expect("regression task");
        sum += resid.norm_squared();
        count += task.n();
    }
    sum / count as f64
}

/// Task loss above its attainable minimum, both under the half-squared
/// convention; the minimum comes from a per-task least-squares residual.
fn direct_forgetting(task: &TaskDataset, min_loss: f64, theta: &DVector<f64>) -> f64 {
    let resid = task.inputs() * theta - task.target_vector().expect("regression task");
    let loss = resid.norm_squared() / (2.0 * task.n() as f64);
    (loss - min_loss).max(0.0)
}

fn per_task_min_losses(tasks: &[TaskDataset]) -> Result<Vec<f64>> {
    tasks
        .iter()
        .map(|task| {
            let theta = joint_least_squares(std::slice::from_ref(task))?;
            let resid = task.inputs() * &theta - task.target_vector()?;
            Ok(resid.norm_squared() / (2.0 * task.n() as f64))
        })
        .collect()
}

struct TrialContext<'a> {
    trial: usize,
    trial_seed: u64,
    tasks: &'a [TaskDataset],
    joint: &'a DVector<f64>,
    min_losses: &'a [f64],
}

fn record_row(
    ctx: &TrialContext,
    learner: &str,
    k: usize,
    theta: &DVector<f64>,
    memory_floats: usize,
    wall_time_seconds: f64,
) -> MetricsRow {
    let forgetting = (0..=k)
        .map(|t| direct_forgetting(&ctx.tasks[t], ctx.min_losses[t], theta))
        .collect();
    MetricsRow {
        trial: ctx.trial,
        learner: learner.to_string(),
        task_index: k + 1,
        current_task_mse: task_mse(&ctx.tasks[k], theta),
        cumulative_mse: cumulative_mse(ctx.tasks, k, theta),
        param_dist_sq: (theta - ctx.joint).norm_squared(),
        forgetting,
        memory_floats,
        wall_time_seconds,
    }
}

fn run_pmfcl(ctx: &TrialContext, spec: &LearnerSpec, lambda_reg: f64) -> Result<Vec<MetricsRow>> {
    let d = ctx.tasks[0].dim();
    let strategy = if spec.solver == "regularized" {
        SolveStrategy::Regularized { lambda: lambda_reg }
    } else {
        SolveStrategy::PseudoInverse
    };
    let mut learner = RegressionLearner::new(FeatureMap::identity(d), strategy);
    let mut rows = Vec::with_capacity(ctx.tasks.len());
    for (k, task) in ctx.tasks.iter().enumerate() {
        let start = Instant::now();
        learner.learn_task(task)?;
        let elapsed = start.elapsed().as_secs_f64();
        let memory = learner.memory_footprint().float_count;
        rows.push(record_row(ctx, &spec.name, k, learner.solution(), memory, elapsed));
    }
    Ok(rows)
}

fn run_sgd(ctx: &TrialContext, spec: &LearnerSpec, learner_index: usize) -> Result<Vec<MetricsRow>> {
    let d = ctx.tasks[0].dim();
    let options = SgdOptions {
        lr: spec.lr,
        iters: spec.iters,
        batch: spec.batch,
    };
    let base_seed = substream_seed(ctx.trial_seed, 1000 + learner_index as u64);
    let mut theta = DVector::zeros(d);
    let mut rows = Vec::with_capacity(ctx.tasks.len());
    for (k, task) in ctx.tasks.iter().enumerate() {
        let start = Instant::now();
        theta = sgd_finetune_task(
            &theta,
            task,
            LossKind::Squared,
            &options,
            substream_seed(base_seed, k as u64),
        )?;
        let elapsed = start.elapsed().as_secs_f64();
        rows.push(record_row(ctx, &spec.name, k, &theta, d, elapsed));
    }
    Ok(rows)
}

fn run_replay(
    ctx: &TrialContext,
    spec: &LearnerSpec,
    learner_index: usize,
) -> Result<Vec<MetricsRow>> {
    let d = ctx.tasks[0].dim();
    let options = ReplayOptions {
        sgd: SgdOptions {
            lr: spec.lr,
            iters: spec.iters,
            batch: spec.batch,
        },
        split: spec.split,
    };
    let base_seed = substream_seed(ctx.trial_seed, 1000 + learner_index as u64);
    let mut theta = DVector::zeros(d);
    let mut buffer = ReplayBuffer::new(spec.capacity);
    let mut rows = Vec::with_capacity(ctx.tasks.len());
    for (k, task) in ctx.tasks.iter().enumerate() {
        let start = Instant::now();
        theta = replay_learn_task(
            &theta,
            &mut buffer,
            task,
            LossKind::Squared,
            &options,
            substream_seed(base_seed, k as u64),
        )?;
        let elapsed = start.elapsed().as_secs_f64();
        let memory = d + buffer.float_count();
        rows.push(record_row(ctx, &spec.name, k, &theta, memory, elapsed));
    }
    Ok(rows)
}

fn run_trial(
    config: &BenchConfig,
    trial: usize,
) -> Result<(Vec<MetricsRow>, Vec<FailureRecord>)> {
    let trial_seed = substream_seed(config.seed, trial as u64);
    let sequence = generate_regression_sequence(
        trial_seed,
        config.d,
        config.num_tasks,
        config.n_per_task,
        config.shift_sigma,
        config.noise_sigma,
    )?;
    let joint = joint_least_squares(&sequence.tasks)?;
    let min_losses = per_task_min_losses(&sequence.tasks)?;
    let ctx = TrialContext {
        trial,
        trial_seed,
        tasks: &sequence.tasks,
        joint: &joint,
        min_losses: &min_losses,
    };

    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for (index, spec) in config.learners.iter().enumerate() {
        let outcome = match spec.name.as_str() {
            "pmfcl_regression" => run_pmfcl(&ctx, spec, config.lambda_reg),
            "sgd" => run_sgd(&ctx, spec, index),
            "replay" => run_replay(&ctx, spec, index),
            other => Err(Error::InvalidConfig(format!("unknown learner '{other}'"))),
        };
        match outcome {
            Ok(mut learner_rows) => rows.append(&mut learner_rows),
            Err(e) => {
                log::error!("trial {trial}, learner {}: {e}", spec.name);
                failures.push(FailureRecord {
                    trial,
                    learner: spec.name.clone(),
                    message: e.to_string(),
                });
            }
        }
    }
    Ok((rows, failures))
}

/// Executes the full benchmark and writes `metrics.csv`, `aggregate.csv`,
/// `timings.csv`, and `manifest.json` into the configured output directory.
pub fn run_benchmark(config: &BenchConfig) -> Result<RunSummary> {
    config.validate()?;
    std::fs::create_dir_all(&config.out_dir)?;

    let outcomes: Vec<Result<(Vec<MetricsRow>, Vec<FailureRecord>)>> = (0..config.trials)
        .into_par_iter()
        .map(|trial| run_trial(config, trial))
        .collect();

    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for outcome in outcomes {
        let (mut trial_rows, mut trial_failures) = outcome?;
        rows.append(&mut trial_rows);
        failures.append(&mut trial_failures);
    }
    rows.sort_by(|a, b| {
        (a.trial, &a.learner, a.task_index).cmp(&(b.trial, &b.learner, b.task_index))
    });
    failures.sort_by(|a, b| (a.trial, &a.learner).cmp(&(b.trial, &b.learner)));

    write_outputs(config, &rows, &failures)?;
    Ok(RunSummary {
        out_dir: config.out_dir.clone(),
        rows,
        failures,
    })
}

fn write_outputs(
    config: &BenchConfig,
    rows: &[MetricsRow],
    failures: &[FailureRecord],
) -> Result<()> {
    let out = &config.out_dir;
    write_metrics_csv(std::fs::File::create(out.join(METRICS_FILE))?, rows)?;
    write_aggregate_csv(std::fs::File::create(out.join(AGGREGATE_FILE))?, &aggregate(rows))?;
    write_timings_csv(std::fs::File::create(out.join(TIMINGS_FILE))?, rows)?;

    let manifest = Manifest {
        schema_version: METRICS_SCHEMA_VERSION,
        crate_version: env!("CARGO_PKG_VERSION").to_string(),
        config: config.normalized_for_manifest(),
        trial_seeds: (0..config.trials)
            .map(|t| substream_seed(config.seed, t as u64))
            .collect(),
        failures: failures.to_vec(),
        files: vec![
            METRICS_FILE.to_string(),
            AGGREGATE_FILE.to_string(),
            TIMINGS_FILE.to_string(),
        ],
    };
    let file = std::fs::File::create(out.join(MANIFEST_FILE))?;
    serde_json::to_writer_pretty(file, &manifest)?;
    Ok(())
}

/// Loads and schema-checks a manifest from a results directory.
pub fn read_manifest(dir: &Path) -> Result<Manifest> {
    let path = dir.join(MANIFEST_FILE);
    if !path.exists() {
        return Err(Error::MissingManifest(dir.to_path_buf()));
    }
    let manifest: Manifest = serde_json::from_reader(std::fs::File::open(path)?)?;
    if manifest.schema_version != METRICS_SCHEMA_VERSION {
        return Err(Error::SchemaVersionMismatch {
            expected: METRICS_SCHEMA_VERSION,
            got: manifest.schema_version,
        });
    }
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::TempDir;

    fn small_config(dir: &Path) -> BenchConfig {
        let mut config = BenchConfig {
            trials: 2,
            d: 4,
            num_tasks: 3,
            n_per_task: 12,
            out_dir: dir.to_path_buf(),
            ..BenchConfig::default()
        };
        for learner in &mut config.learners {
            learner.iters = 20;
        }
        config
    }

    #[test]
    fn produces_all_output_files() {
        let dir = TempDir::new().unwrap();
        let config = small_config(dir.path());
        let summary = run_benchmark(&config).unwrap();
        assert!(summary.failures.is_empty());
        assert_eq!(summary.rows.len(), 2 * 3 * 3);
        for file in [MANIFEST_FILE, METRICS_FILE, AGGREGATE_FILE, TIMINGS_FILE] {
            assert!(dir.path().join(file).exists(), "{file} missing");
        }
        let manifest = read_manifest(dir.path()).unwrap();
        assert_eq!(manifest.trial_seeds.len(), 2);
        assert_eq!(manifest.config.out_dir, PathBuf::new());
        for row in &summary.rows {
            assert!(row.current_task_mse.is_finite() && row.current_task_mse >= 0.0);
            assert!(row.cumulative_mse.is_finite() && row.cumulative_mse >= 0.0);
            assert!(row.param_dist_sq.is_finite() && row.param_dist_sq >= 0.0);
            assert_eq!(row.forgetting.len(), row.task_index);
            assert!(row.forgetting.iter().all(|f| f.is_finite() && *f >= 0.0));
        }
    }

    #[test]
    fn learner_failure_is_recorded_and_run_continues() {
        let dir = TempDir::new().unwrap();
        let mut config = small_config(dir.path());
        config.trials = 1;
        // A divergent learning rate makes the SGD baseline fail.
        for learner in &mut config.learners {
            if learner.name == "sgd" {
                learner.lr = 1e9;
                learner.iters = 100;
            }
        }
        let summary = run_benchmark(&config).unwrap();
        assert_eq!(summary.failures.len(), 1);
        assert_eq!(summary.failures[0].learner, "sgd");
        assert!(summary.rows.iter().any(|r| r.learner == "pmfcl_regression"));
        assert!(summary.rows.iter().all(|r| r.learner != "sgd"));
        let manifest = read_manifest(dir.path()).unwrap();
        assert_eq!(manifest.failures.len(), 1);
    }

    #[test]
    fn deterministic_outputs() {
        let dir_a = TempDir::new().unwrap();
        let dir_b = TempDir::new().unwrap();
        run_benchmark(&small_config(dir_a.path())).unwrap();
        run_benchmark(&small_config(dir_b.path())).unwrap();
        for file in [METRICS_FILE, AGGREGATE_FILE, MANIFEST_FILE] {
            let a = std::fs::read(dir_a.path().join(file)).unwrap();
            let b = std::fs::read(dir_b.path().join(file)).unwrap();
            assert_eq!(a, b, "{file} differs between identical runs");
        }
    }

    #[test]
    fn zero_shift_zero_noise_tracks_joint_exactly() {
        let dir = TempDir::new().unwrap();
        let mut config = small_config(dir.path());
        config.trials = 1;
        config.shift_sigma = 0.0;
        config.noise_sigma = 0.0;
        config.learners.retain(|l| l.name == "pmfcl_regression");
        let summary = run_benchmark(&config).unwrap();
        for row in &summary.rows {
            assert!(
                row.param_dist_sq <= 1e-12,
                "task {}: param_dist_sq {}",
                row.task_index,
                row.param_dist_sq
            );
        }
    }

    #[test]
    fn missing_manifest_reported() {
        let dir = TempDir::new().unwrap();
        assert!(matches!(
            read_manifest(dir.path()),
            Err(Error::MissingManifest(_))
        ));
    }
}
