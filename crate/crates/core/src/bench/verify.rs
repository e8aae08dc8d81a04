//! End-to-end verification suite: every shipped guarantee is checked at a
//! pinned tolerance, one pass/fail line per criterion.
//!
//! The criteria are deterministic given the seed; report files therefore
//! contain no wall-clock values (runtimes are surfaced separately).

use std::fmt;
use std::io::Write as _;
use std::path::Path;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::config::BenchConfig;
use super::runner::{
    joint_least_squares, run_benchmark, AGGREGATE_FILE, MANIFEST_FILE, METRICS_FILE,
};
use crate::error::Result;
use crate::federated::{run_rounds, FedConfig};
use crate::linalg::{smallest_eigenvalue, PsdSolver};
use crate::msi::{compute_msi, forgetting, ntk_feature_map, FeatureMap, RegressionMsi};
use crate::qub::{
    bohning_bound, build_summary, cross_entropy, softmax_curvature, FitOptions, LogisticKind,
    QubLearner, QubSummary,
};
use crate::regression::{direct_solve, PhaseLabel, RegressionLearner, SolveStrategy};
use crate::tasks::{
    generate_classification_sequence, preferences, substream_seed, TaskDataset,
};

/// Outcome of one criterion.
#[derive(Debug, Clone)]
pub struct CriterionResult {
    pub id: usize,
    pub name: &'static str,
    pub passed: bool,
    pub observed: String,
    pub threshold: String,
    /// Informational only; never written into report files.
    pub runtime_seconds: f64,
}

impl fmt::Display for CriterionResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "[{:2}] {} {} — observed {}; threshold {}",
            self.id,
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.observed,
            self.threshold,
        )
    }
}

fn relative_gap(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a - b).norm() / (1.0 + b.norm())
}

fn matrix_relative_gap(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / (1.0 + b.norm())
}

/// Tight fit options for oracle-grade minimizers: the tiny ridge keeps
/// minimizers finite while leaving the unregularized gradient far below the
/// acceptance margins.
fn oracle_fit() -> FitOptions {
    FitOptions {
        ridge: 1e-10,
        tol: 1e-12,
        max_iter: 300,
    }
}

// ---------------------------------------------------------------------------
// Shared scenario builders (deterministic in the verify seed).
// ---------------------------------------------------------------------------

/// 50 regression scenarios across d in {3, 10, 50} and T in {2, 5, 10}, with
/// under- and over-determined tasks and occasional rank-deficient inputs.
fn regression_scenarios(seed: u64) -> Vec<Vec<TaskDataset>> {
    let dims = [3usize, 10, 50];
    let lengths = [2usize, 5, 10];
    (0..50)
        .map(|index| {
            let d = dims[index % 3];
            let t_count = lengths[(index / 3) % 3];
            let mut rng = ChaCha8Rng::seed_from_u64(substream_seed(seed, 100 + index as u64));
            (0..t_count)
                .map(|tid| {
                    let n = rng.random_range(1..=2 * d);
                    let mut x = DMatrix::from_fn(n, d, |_, _| rng.sample(StandardNormal));
                    if rng.random_bool(0.3) {
                        let r = rng.random_range(1..=n.min(d));
                        let left = DMatrix::from_fn(n, r, |_, _| rng.sample::<f64, _>(StandardNormal));
                        let right = DMatrix::from_fn(r, d, |_, _| rng.sample::<f64, _>(StandardNormal));
                        x = left * right;
                    }
                    let y = DVector::from_fn(n, |_, _| rng.sample(StandardNormal));
                    TaskDataset::regression(tid, x, y).expect("valid task")
                })
                .collect()
        })
        .collect()
}

type QubScenario = (LogisticKind, Vec<TaskDataset>, Vec<QubSummary>);

/// 20 logistic scenarios: 10 binary and 10 multi-class, each a short task
/// sequence with its fitted summaries.
fn qub_scenarios(seed: u64) -> Result<Vec<QubScenario>> {
    let mut scenarios = Vec::new();
    for index in 0..10usize {
        let d = [3, 5][index % 2];
        let t_count = [4, 6][(index / 2) % 2];
        let tasks = generate_classification_sequence(
            substream_seed(seed, 200 + index as u64),
            d,
            t_count,
            60,
            2,
            0.4,
        )?;
        let summaries = tasks
            .iter()
            .map(|task| build_summary(task, LogisticKind::Binary, &oracle_fit()))
            .collect::<Result<Vec<_>>>()?;
        scenarios.push((LogisticKind::Binary, tasks, summaries));
    }
    for index in 0..10usize {
        let d = [3, 4][index % 2];
        let classes = [3, 5][(index / 2) % 2];
        let tasks = generate_classification_sequence(
            substream_seed(seed, 300 + index as u64),
            d,
            4,
            80,
            classes,
            0.4,
        )?;
        let summaries = tasks
            .iter()
            .map(|task| build_summary(task, LogisticKind::Multiclass, &oracle_fit()))
            .collect::<Result<Vec<_>>>()?;
        scenarios.push((LogisticKind::Multiclass, tasks, summaries));
    }
    Ok(scenarios)
}

// ---------------------------------------------------------------------------
// Criteria.
// ---------------------------------------------------------------------------

/// 1: the sequential solution lands on the joint minimum-norm least-squares
/// optimum over all concatenated data.
pub fn criterion_joint_optimum(seed: u64) -> CriterionResult {
    let start = Instant::now();
    let mut worst = 0.0_f64;
    let mut failures = 0usize;
    for tasks in regression_scenarios(seed) {
        let d = tasks[0].dim();
        let mut learner =
            RegressionLearner::new(FeatureMap::identity(d), SolveStrategy::PseudoInverse);
        for task in &tasks {
            learner.learn_task(task).expect("learn");
        }
        let joint = joint_least_squares(&tasks).expect("oracle");
        let gap = relative_gap(learner.solution(), &joint);
        worst = worst.max(gap);
        if gap > 1e-7 {
            failures += 1;
        }
    }
    let runtime = start.elapsed().as_secs_f64();
    CriterionResult {
        id: 1,
        name: "joint-optimum equivalence",
        passed: failures == 0 && runtime < 10.0,
        observed: format!("max relative gap {worst:.3e} over 50 scenarios"),
        threshold: "<= 1e-7, runtime < 10 s".into(),
        runtime_seconds: runtime,
    }
}

/// 2: the direct normal-equation solve and the incremental path agree on
/// every prefix of sequences that straddle the rank-budget switch.
pub fn criterion_phase_equivalence(seed: u64) -> CriterionResult {
    let start = Instant::now();
    let mut worst = 0.0_f64;
    let mut switched = 0usize;
    for index in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(substream_seed(seed, 400 + index));
        let d = 8usize;
        let map = FeatureMap::identity(d);
        let mut learner = RegressionLearner::new(map.clone(), SolveStrategy::PseudoInverse);
        let mut msis: Vec<RegressionMsi> = Vec::new();
        for tid in 0..6usize {
            let n = rng.random_range(2..=4);
            let x = DMatrix::from_fn(n, d, |_, _| rng.sample::<f64, _>(StandardNormal));
            let y = DVector::from_fn(n, |_, _| rng.sample(StandardNormal));
            let task = TaskDataset::regression(tid, x, y).expect("task");
            learner.learn_task(&task).expect("learn");
            msis.push(compute_msi(&task, &map).expect("msi"));
            let counts: Vec<usize> = msis.iter().map(RegressionMsi::n).collect();
            let reference = direct_solve(&msis, &preferences(&counts).expect("prefs")).expect("solve");
            worst = worst.max(relative_gap(learner.solution(), &reference));
        }
        if learner.phase_label() == PhaseLabel::Iterative {
            switched += 1;
        }
    }
    CriterionResult {
        id: 2,
        name: "direct/iterative phase equivalence",
        passed: worst <= 1e-7 && switched == 20,
        observed: format!("max relative gap {worst:.3e}; {switched}/20 sequences crossed the switch"),
        threshold: "<= 1e-7 on every prefix".into(),
        runtime_seconds: start.elapsed().as_secs_f64(),
    }
}

/// 3: permuting the task order leaves the final solution unchanged.
pub fn criterion_order_invariance(seed: u64) -> CriterionResult {
    let start = Instant::now();
    let mut worst = 0.0_f64;
    for index in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(substream_seed(seed, 500 + index));
        let d = rng.random_range(3..=8);
        let tasks: Vec<TaskDataset> = (0..5usize)
            .map(|tid| {
                let n = rng.random_range(1..=2 * d);
                let x = DMatrix::from_fn(n, d, |_, _| rng.sample::<f64, _>(StandardNormal));
                let y = DVector::from_fn(n, |_, _| rng.sample(StandardNormal));
                TaskDataset::regression(tid, x, y).expect("task")
            })
            .collect();
        let run = |order: &[usize]| {
            let mut learner =
                RegressionLearner::new(FeatureMap::identity(d), SolveStrategy::PseudoInverse);
            for &i in order {
                learner.learn_task(&tasks[i]).expect("learn");
            }
            learner.solution().clone()
        };
        let base = run(&[0, 1, 2, 3, 4]);
        for _ in 0..5 {
            let mut order: Vec<usize> = (0..5).collect();
            for i in (1..order.len()).rev() {
                let j = rng.random_range(0..=i);
                order.swap(i, j);
            }
            let permuted = run(&order);
            worst = worst.max(relative_gap(&permuted, &base));
        }
    }
    CriterionResult {
        id: 3,
        name: "task-order invariance",
        passed: worst <= 1e-7,
        observed: format!("max relative gap {worst:.3e} over 20 x 5 permutations"),
        threshold: "<= 1e-7".into(),
        runtime_seconds: start.elapsed().as_secs_f64(),
    }
}

/// 4: the closed-form forgetting from stored task information matches the
/// directly evaluated excess loss for every (task, checkpoint) pair.
pub fn criterion_forgetting_exactness(seed: u64) -> CriterionResult {
    let start = Instant::now();
    let mut worst = 0.0_f64;
    for tasks in regression_scenarios(seed) {
        let d = tasks[0].dim();
        let map = FeatureMap::identity(d);
        let mut learner = RegressionLearner::new(map.clone(), SolveStrategy::PseudoInverse);
        let mut msis = Vec::new();
        let mut min_losses = Vec::new();
        for task in &tasks {
            learner.learn_task(task).expect("learn");
            msis.push(compute_msi(task, &map).expect("msi"));
            let fit = joint_least_squares(std::slice::from_ref(task)).expect("oracle");
            let resid = task.inputs() * &fit - task.target_vector().expect("targets");
            min_losses.push(resid.norm_squared() / (2.0 * task.n() as f64));

            let theta = learner.solution();
            for (t, msi) in msis.iter().enumerate() {
                let closed = forgetting(msi, theta).expect("forgetting");
                let resid = tasks[t].inputs() * theta - tasks[t].target_vector().expect("targets");
                let direct = resid.norm_squared() / (2.0 * tasks[t].n() as f64) - min_losses[t];
                worst = worst.max((closed - direct).abs());
            }
        }
    }
    CriterionResult {
        id: 4,
        name: "forgetting closed-form exactness",
        passed: worst <= 1e-9,
        observed: format!("max |closed - direct| {worst:.3e}"),
        threshold: "<= 1e-9 absolute".into(),
        runtime_seconds: start.elapsed().as_secs_f64(),
    }
}

/// 5: stored floats follow the `r (d + 2)` law per task, and the switched
/// learner sits at exactly `d^2 + 2d` floats forever after.
pub fn criterion_memory_law(seed: u64) -> CriterionResult {
    let start = Instant::now();
    let d = 12usize;
    let mut rng = ChaCha8Rng::seed_from_u64(substream_seed(seed, 600));
    let map = FeatureMap::identity(d);
    let mut learner = RegressionLearner::new(map.clone(), SolveStrategy::PseudoInverse);
    let mut ok = true;
    let mut notes = Vec::new();

    let mut expected_direct = 0usize;
    let mut switch_task = None;
    for tid in 0..(4 + 100) {
        let n = 3usize;
        let x = DMatrix::from_fn(n, d, |_, _| rng.sample::<f64, _>(StandardNormal));
        let y = DVector::from_fn(n, |_, _| rng.sample(StandardNormal));
        let task = TaskDataset::regression(tid, x, y).expect("task");
        let msi = compute_msi(&task, &map).expect("msi");
        if msi.float_count() != msi.rank() * (d + 2) {
            ok = false;
            notes.push(format!("task {tid}: float_count != r(d+2)"));
        }
        learner.learn_task(&task).expect("learn");
        let footprint = learner.memory_footprint();
        match footprint.phase_label {
            PhaseLabel::Direct => {
                expected_direct += msi.rank() * (d + 2);
                if footprint.float_count != expected_direct {
                    ok = false;
                    notes.push(format!("task {tid}: direct footprint {}", footprint.float_count));
                }
            }
            PhaseLabel::Iterative => {
                if switch_task.is_none() {
                    switch_task = Some(tid);
                    if learner.rank_sum() <= d {
                        ok = false;
                        notes.push("switched before rank budget exceeded".into());
                    }
                }
                if footprint.float_count != d * d + 2 * d {
                    ok = false;
                    notes.push(format!(
                        "task {tid}: iterative footprint {} != {}",
                        footprint.float_count,
                        d * d + 2 * d
                    ));
                }
            }
        }
    }
    // Rank 3 per task and d = 12: the budget is exceeded on task index 4.
    if switch_task != Some(4) {
        ok = false;
        notes.push(format!("switch happened at {switch_task:?}, expected task index 4"));
    }
    CriterionResult {
        id: 5,
        name: "memory law and constancy",
        passed: ok,
        observed: if notes.is_empty() {
            format!("r(d+2) per stored task; {} floats constant over 100 post-switch tasks", d * d + 2 * d)
        } else {
            notes.join("; ")
        },
        threshold: "exact float counts".into(),
        runtime_seconds: start.elapsed().as_secs_f64(),
    }
}

/// 6: the quadratic bound dominates the true loss at 1000 random parameters
/// per task.
pub fn criterion_qub_validity(seed: u64) -> CriterionResult {
    let start = Instant::now();
    let mut worst_margin = f64::INFINITY;
    let mut count = 0usize;
    let scenarios = match qub_scenarios(seed) {
        Ok(s) => s,
        Err(e) => {
            return CriterionResult {
                id: 6,
                name: "quadratic-bound validity",
                passed: false,
                observed: format!("scenario construction failed: {e}"),
                threshold: "margin >= -1e-9".into(),
                runtime_seconds: start.elapsed().as_secs_f64(),
            }
        }
    };
    let mut rng = ChaCha8Rng::seed_from_u64(substream_seed(seed, 700));
    for (kind, tasks, summaries) in &scenarios {
        // One task per scenario keeps this at 20 binary + 20 multi-class.
        let task = &tasks[0];
        let summary = &summaries[0];
        let (d, k) = summary.theta_min.shape();
        for _ in 0..1000 {
            let theta = &summary.theta_min
                + DMatrix::from_fn(d, k, |_, _| rng.sample::<f64, _>(StandardNormal)).scale(1.5);
            let bound = crate::qub::qub_value(summary, &theta).expect("bound");
            let loss = cross_entropy(task, *kind, &theta).expect("loss");
            worst_margin = worst_margin.min(bound - loss);
            count += 1;
        }
    }
    CriterionResult {
        id: 6,
        name: "quadratic-bound validity",
        passed: worst_margin >= -1e-9,
        observed: format!("min margin {worst_margin:.3e} over {count} evaluations"),
        threshold: ">= -1e-9".into(),
        runtime_seconds: start.elapsed().as_secs_f64(),
    }
}

/// 7: the class-space dominator beats the softmax curvature for random
/// probability vectors, and twice the dominator is idempotent.
pub fn criterion_bohning(seed: u64) -> CriterionResult {
    let start = Instant::now();
    let mut min_eig = f64::INFINITY;
    let mut idempotence_err = 0.0_f64;
    let mut rng = ChaCha8Rng::seed_from_u64(substream_seed(seed, 800));
    for &k in &[2usize, 3, 5, 10] {
        let vbar = bohning_bound(k);
        let twice = vbar.scale(2.0);
        idempotence_err = idempotence_err.max((&twice * &twice - &twice).amax());
        for _ in 0..1000 {
            // Uniform simplex sample via normalized exponentials.
            let mut p = DVector::from_fn(k, |_, _| -> f64 {
                let u: f64 = rng.random();
                -(1.0 - u).ln()
            });
            let total = p.sum();
            p.scale_mut(1.0 / total);
            let gap = &vbar - softmax_curvature(&p);
            min_eig = min_eig.min(smallest_eigenvalue(&gap));
        }
    }
    CriterionResult {
        id: 7,
        name: "softmax curvature dominator",
        passed: min_eig >= -1e-10 && idempotence_err <= 1e-12,
        observed: format!("min eigenvalue {min_eig:.3e}; idempotence error {idempotence_err:.3e}"),
        threshold: "eig >= -1e-10; idempotence <= 1e-12".into(),
        runtime_seconds: start.elapsed().as_secs_f64(),
    }
}

/// 8: sequential updates land on the one-shot solution of the assembled
/// scalarized system.
pub fn criterion_qub_batch_equivalence(seed: u64) -> CriterionResult {
    let start = Instant::now();
    let mut worst = 0.0_f64;
    let scenarios = match qub_scenarios(seed) {
        Ok(s) => s,
        Err(e) => {
            return CriterionResult {
                id: 8,
                name: "sequential/batch equivalence",
                passed: false,
                observed: format!("scenario construction failed: {e}"),
                threshold: "<= 1e-7 relative".into(),
                runtime_seconds: start.elapsed().as_secs_f64(),
            }
        }
    };
    for (_, tasks, summaries) in &scenarios {
        let (d, k) = summaries[0].theta_min.shape();
        let mut learner = QubLearner::new(d, k, SolveStrategy::PseudoInverse);
        for summary in summaries {
            learner.learn_task(summary.clone()).expect("learn");
        }
        let total: usize = tasks.iter().map(TaskDataset::n).sum();
        let mut lhs = DMatrix::zeros(d, d);
        let mut rhs = DMatrix::zeros(d, k);
        for summary in summaries {
            let alpha = summary.n as f64 / total as f64;
            lhs += summary.hessian.materialize().scale(alpha);
            rhs += summary.hessian.apply(&summary.theta_min).scale(alpha);
        }
        let batch = PsdSolver::new(&lhs).expect("solver").apply_matrix(&rhs);
        worst = worst.max(matrix_relative_gap(learner.solution(), &batch));
    }
    CriterionResult {
        id: 8,
        name: "sequential/batch equivalence",
        passed: worst <= 1e-7,
        observed: format!("max relative gap {worst:.3e} over 20 scenarios"),
        threshold: "<= 1e-7".into(),
        runtime_seconds: start.elapsed().as_secs_f64(),
    }
}

/// 9: the reported bound dominates the true cross-entropy forgetting at
/// every (task, checkpoint) pair; also emits the bound log.
pub fn criterion_bound_soundness(seed: u64, out_dir: &Path) -> CriterionResult {
    let start = Instant::now();
    let mut worst_slack = f64::INFINITY;
    let mut log_rows = Vec::new();
    let scenarios = match qub_scenarios(seed) {
        Ok(s) => s,
        Err(e) => {
            return CriterionResult {
                id: 9,
                name: "forgetting-bound soundness",
                passed: false,
                observed: format!("scenario construction failed: {e}"),
                threshold: "slack >= -1e-9".into(),
                runtime_seconds: start.elapsed().as_secs_f64(),
            }
        }
    };
    for (kind, tasks, summaries) in &scenarios {
        let (d, k) = summaries[0].theta_min.shape();
        let mut learner = QubLearner::new(d, k, SolveStrategy::PseudoInverse).with_retention();
        for (checkpoint, summary) in summaries.iter().enumerate() {
            learner.learn_task(summary.clone()).expect("learn");
            for t in 0..=checkpoint {
                let bound = learner.forgetting_bound(&summaries[t]).expect("bound");
                let loss = cross_entropy(&tasks[t], *kind, learner.solution()).expect("loss");
                let true_forgetting = loss - summaries[t].min_loss;
                worst_slack = worst_slack.min(bound - true_forgetting);
                log_rows.push(crate::qub::BoundLogRow {
                    k: checkpoint + 1,
                    t: t + 1,
                    bound,
                    true_forgetting,
                });
            }
        }
    }
    let written = std::fs::File::create(out_dir.join("bound_log.csv"))
        .map_err(crate::error::Error::from)
        .and_then(|f| crate::qub::write_bound_log(f, &log_rows));
    CriterionResult {
        id: 9,
        name: "forgetting-bound soundness",
        passed: worst_slack >= -1e-9 && written.is_ok(),
        observed: format!(
            "min slack {worst_slack:.3e} over {} (task, checkpoint) pairs",
            log_rows.len()
        ),
        threshold: ">= -1e-9".into(),
        runtime_seconds: start.elapsed().as_secs_f64(),
    }
}

/// 10: the federated rounds reproduce the centralized learner run on the
/// pooled per-round tasks, and messages carry exactly d^2 + d + 1 numbers.
pub fn criterion_federated_equivalence(seed: u64) -> CriterionResult {
    let start = Instant::now();
    let mut worst = 0.0_f64;
    let mut floats_ok = true;
    for &clients in &[1usize, 2, 5] {
        let config = FedConfig {
            seed: substream_seed(seed, 900 + clients as u64),
            clients,
            rounds: 5,
            d: 3,
            n_per_round: 30,
            shift_sigma: 0.3,
            ridge: 1e-10,
        };
        let run = match run_rounds(&config) {
            Ok(run) => run,
            Err(e) => {
                return CriterionResult {
                    id: 10,
                    name: "federated/centralized equivalence",
                    passed: false,
                    observed: format!("federated run failed: {e}"),
                    threshold: "<= 1e-7 relative".into(),
                    runtime_seconds: start.elapsed().as_secs_f64(),
                }
            }
        };
        for log in &run.logs {
            for &floats in &log.message_floats {
                if floats != config.d * config.d + config.d + 1 {
                    floats_ok = false;
                }
            }
        }
        // Centralized reference: each round's client datasets are fed as
        // simultaneous tasks to a single learner.
        let options = FitOptions {
            ridge: config.ridge,
            ..FitOptions::default()
        };
        let mut central = QubLearner::new(config.d, 1, SolveStrategy::PseudoInverse);
        for round in 0..config.rounds {
            for client in 0..clients {
                let summary =
                    build_summary(&run.datasets[client][round], LogisticKind::Binary, &options)
                        .expect("summary");
                central.learn_task(summary).expect("learn");
            }
            let reference = central.solution_vector().expect("vector");
            worst = worst.max(relative_gap(&run.trajectory[round], &reference));
        }
    }
    CriterionResult {
        id: 10,
        name: "federated/centralized equivalence",
        passed: worst <= 1e-7 && floats_ok,
        observed: format!("max per-round relative gap {worst:.3e}; message floats {}", if floats_ok { "exact" } else { "WRONG" }),
        threshold: "<= 1e-7; floats = d^2 + d + 1".into(),
        runtime_seconds: start.elapsed().as_secs_f64(),
    }
}

/// 11: for perturbations preserving the activation pattern, the linearized
/// feature inner product reproduces the network output change exactly.
pub fn criterion_ntk_linearization(seed: u64) -> CriterionResult {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(substream_seed(seed, 1000));
    let mut worst = 0.0_f64;
    let mut checked = 0usize;
    let mut attempts = 0usize;
    while checked < 100 && attempts < 10_000 {
        attempts += 1;
        let m = rng.random_range(2..8);
        let d = rng.random_range(1..6);
        let x = DVector::from_fn(d, |_, _| rng.sample(StandardNormal));
        let w = DVector::from_fn(m, |_, _| rng.sample(StandardNormal));
        let v = DMatrix::from_fn(m, d, |_, _| rng.sample(StandardNormal));
        let pre = &v * &x;
        let margin = pre.iter().cloned().map(f64::abs).fold(f64::INFINITY, f64::min);
        if margin < 1e-5 {
            continue;
        }
        let mut dv = DMatrix::from_fn(m, d, |_, _| rng.sample::<f64, _>(StandardNormal));
        let scale = 1e-6_f64.min(0.25 * margin / (x.norm() + 1e-12));
        dv.scale_mut(scale / dv.norm());
        let perturbed = &v + &dv;
        let pattern_kept = (0..m).all(|i| ((&perturbed * &x)[i] >= 0.0) == (pre[i] >= 0.0));
        if !pattern_kept {
            continue;
        }
        let eval = |vm: &DMatrix<f64>| (0..m).map(|i| w[i] * (vm * &x)[i].max(0.0)).sum::<f64>();
        let f0 = eval(&v);
        let delta_f = eval(&perturbed) - f0;
        let phi = ntk_feature_map(&x, &w, &v).expect("feature map");
        let mut stacked = DVector::zeros(m * d);
        for j in 0..d {
            for i in 0..m {
                stacked[j * m + i] = dv[(i, j)];
            }
        }
        let predicted = phi.dot(&stacked);
        let err = (delta_f - predicted).abs() / (1.0 + f0.abs());
        worst = worst.max(err);
        checked += 1;
    }
    CriterionResult {
        id: 11,
        name: "linearized-feature exactness",
        passed: checked == 100 && worst <= 1e-12,
        observed: format!("max scaled error {worst:.3e} over {checked} perturbations"),
        threshold: "<= 1e-12 * (1 + |f|)".into(),
        runtime_seconds: start.elapsed().as_secs_f64(),
    }
}

/// 12: under the default benchmark the exact learner reaches the joint
/// optimum while naive fine-tuning stays orders of magnitude away, and the
/// exact learner's cumulative MSE wins at the final task.
pub fn criterion_benchmark_reproduction(seed: u64, out_dir: &Path) -> CriterionResult {
    let start = Instant::now();
    let config = BenchConfig {
        seed,
        out_dir: out_dir.join("benchmark"),
        ..BenchConfig::default()
    };
    let summary = match run_benchmark(&config) {
        Ok(s) => s,
        Err(e) => {
            return CriterionResult {
                id: 12,
                name: "benchmark qualitative reproduction",
                passed: false,
                observed: format!("benchmark failed: {e}"),
                threshold: "see acceptance list".into(),
                runtime_seconds: start.elapsed().as_secs_f64(),
            }
        }
    };
    let runtime = start.elapsed().as_secs_f64();
    let final_task = config.num_tasks;
    let mut pmfcl_max_dist = 0.0_f64;
    let mut sgd_min_dist = f64::INFINITY;
    let mut wins = 0usize;
    for trial in 0..config.trials {
        let find = |learner: &str| {
            summary
                .rows
                .iter()
                .find(|r| r.trial == trial && r.learner == learner && r.task_index == final_task)
        };
        let (Some(pmfcl), Some(sgd), Some(replay)) =
            (find("pmfcl_regression"), find("sgd"), find("replay"))
        else {
            return CriterionResult {
                id: 12,
                name: "benchmark qualitative reproduction",
                passed: false,
                observed: format!("missing final rows in trial {trial}"),
                threshold: "see acceptance list".into(),
                runtime_seconds: runtime,
            };
        };
        pmfcl_max_dist = pmfcl_max_dist.max(pmfcl.param_dist_sq);
        sgd_min_dist = sgd_min_dist.min(sgd.param_dist_sq);
        if pmfcl.cumulative_mse <= sgd.cumulative_mse && pmfcl.cumulative_mse <= replay.cumulative_mse
        {
            wins += 1;
        }
    }
    let passed = summary.failures.is_empty()
        && pmfcl_max_dist <= 1e-10
        && sgd_min_dist >= 1e6 * 1e-10
        && sgd_min_dist >= 1e6 * pmfcl_max_dist
        && wins * 10 >= 9 * config.trials
        && runtime < 120.0;
    CriterionResult {
        id: 12,
        name: "benchmark qualitative reproduction",
        passed,
        observed: format!(
            "exact learner max dist^2 {pmfcl_max_dist:.3e}; naive min dist^2 {sgd_min_dist:.3e}; cumulative-MSE wins {wins}/{}",
            config.trials
        ),
        threshold: "dist^2 <= 1e-10; naive >= 1e6 x; wins >= 9/10; < 2 min".into(),
        runtime_seconds: runtime,
    }
}

/// 13: rerunning the pipeline from the same seed produces byte-identical
/// result files (wall-clock timings live outside the deterministic set).
pub fn criterion_determinism(seed: u64, out_dir: &Path) -> CriterionResult {
    let start = Instant::now();
    let run_into = |sub: &str| -> Result<std::path::PathBuf> {
        let config = BenchConfig {
            seed,
            out_dir: out_dir.join(sub),
            ..BenchConfig::default()
        };
        run_benchmark(&config)?;
        Ok(config.out_dir)
    };
    let outcome = (|| -> Result<(bool, String)> {
        let a = run_into("determinism_a")?;
        let b = run_into("determinism_b")?;
        let mut mismatched = Vec::new();
        for file in [METRICS_FILE, AGGREGATE_FILE, MANIFEST_FILE] {
            let bytes_a = std::fs::read(a.join(file))?;
            let bytes_b = std::fs::read(b.join(file))?;
            if bytes_a != bytes_b {
                mismatched.push(file);
            }
        }
        Ok((
            mismatched.is_empty(),
            if mismatched.is_empty() {
                "metrics.csv, aggregate.csv, manifest.json byte-identical".to_string()
            } else {
                format!("mismatched files: {}", mismatched.join(", "))
            },
        ))
    })();
    let (passed, observed) = match outcome {
        Ok(pair) => pair,
        Err(e) => (false, format!("determinism run failed: {e}")),
    };
    CriterionResult {
        id: 13,
        name: "pipeline determinism",
        passed,
        observed,
        threshold: "byte-identical result files".into(),
        runtime_seconds: start.elapsed().as_secs_f64(),
    }
}

// ---------------------------------------------------------------------------
// Suite driver.
// ---------------------------------------------------------------------------

/// Runs all criteria and writes `verify_report.txt` / `verify_report.csv`
/// into `out_dir`. Report files carry no wall-clock values.
pub fn run_all(seed: u64, out_dir: &Path) -> Result<Vec<CriterionResult>> {
    std::fs::create_dir_all(out_dir)?;
    let results = vec![
        criterion_joint_optimum(seed),
        criterion_phase_equivalence(seed),
        criterion_order_invariance(seed),
        criterion_forgetting_exactness(seed),
        criterion_memory_law(seed),
        criterion_qub_validity(seed),
        criterion_bohning(seed),
        criterion_qub_batch_equivalence(seed),
        criterion_bound_soundness(seed, out_dir),
        criterion_federated_equivalence(seed),
        criterion_ntk_linearization(seed),
        criterion_benchmark_reproduction(seed, out_dir),
        criterion_determinism(seed, out_dir),
    ];
    write_reports(out_dir, &results)?;
    Ok(results)
}

fn write_reports(out_dir: &Path, results: &[CriterionResult]) -> Result<()> {
    let mut text = std::fs::File::create(out_dir.join("verify_report.txt"))?;
    for result in results {
        writeln!(text, "{result}")?;
    }
    let mut w = csv::Writer::from_writer(std::fs::File::create(out_dir.join("verify_report.csv"))?);
    w.write_record(["id", "name", "passed", "observed", "threshold"])?;
    for r in results {
        w.write_record(&[
            r.id.to_string(),
            r.name.to_string(),
            r.passed.to_string(),
            r.observed.clone(),
            r.threshold.clone(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Process exit code for a finished suite: 0 when green, 2 on any failure.
pub fn exit_code(results: &[CriterionResult]) -> i32 {
    if results.iter().all(|r| r.passed) {
        0
    } else {
        2
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_code_flags_failures() {
        let good = CriterionResult {
            id: 1,
            name: "x",
            passed: true,
            observed: "ok".into(),
            threshold: "t".into(),
            runtime_seconds: 0.0,
        };
        let mut bad = good.clone();
        bad.passed = false;
        assert_eq!(exit_code(std::slice::from_ref(&good)), 0);
        assert_eq!(exit_code(&[good, bad]), 2);
    }

    #[test]
    fn report_line_format() {
        let result = CriterionResult {
            id: 3,
            name: "task-order invariance",
            passed: true,
            observed: "max gap 1e-9".into(),
            threshold: "<= 1e-7".into(),
            runtime_seconds: 0.1,
        };
        let line = result.to_string();
        assert!(line.contains("PASS"));
        assert!(line.contains("task-order invariance"));
        assert!(line.contains("1e-7"));
    }
}
