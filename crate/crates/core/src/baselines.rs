//! Comparison learners: naive SGD fine-tuning, which only ever sees the
//! current task, and experience replay, which rehearses a reservoir-sampled
//! buffer of past samples alongside the current task.

use nalgebra::DVector;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tasks::TaskDataset;

const DIVERGENCE_LIMIT: f64 = 1e12;

/// Loss driving the baseline gradients.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    /// Half squared error per sample, matching the regression task loss.
    Squared,
    /// Binary cross-entropy; class index 1 is the positive class.
    BinaryLogistic,
}

/// SGD hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SgdOptions {
    pub lr: f64,
    pub iters: usize,
    pub batch: usize,
}

impl Default for SgdOptions {
    fn default() -> Self {
        Self {
            lr: 0.01,
            iters: 200,
            batch: 32,
        }
    }
}

struct Sample {
    x: DVector<f64>,
    y: f64,
}

fn extract_samples(dataset: &TaskDataset, kind: LossKind) -> Result<Vec<Sample>> {
    let targets: Vec<f64> = match kind {
        LossKind::Squared => dataset.target_vector()?.iter().cloned().collect(),
        LossKind::BinaryLogistic => {
            if dataset.num_outputs() != 2 {
                return Err(Error::DimensionMismatch {
                    expected: 2,
                    got: dataset.num_outputs(),
                });
            }
            dataset.targets().column(1).iter().cloned().collect()
        }
    };
    Ok((0..dataset.n())
        .map(|i| Sample {
            x: dataset.inputs().row(i).transpose(),
            y: targets[i],
        })
        .collect())
}

fn sample_gradient(theta: &DVector<f64>, sample: &Sample, kind: LossKind) -> (DVector<f64>, f64) {
    let score = theta.dot(&sample.x);
    match kind {
        LossKind::Squared => {
            let resid = score - sample.y;
            (sample.x.scale(resid), 0.5 * resid * resid)
        }
        LossKind::BinaryLogistic => {
            let p = 1.0 / (1.0 + (-score).exp());
            let loss = score.max(0.0) + (-score.abs()).exp().ln_1p() - sample.y * score;
            (sample.x.scale(p - sample.y), loss)
        }
    }
}

fn sgd_steps<'a, F>(
    theta: &DVector<f64>,
    kind: LossKind,
    options: &SgdOptions,
    rng: &mut ChaCha8Rng,
    mut batch_source: F,
) -> Result<DVector<f64>>
where
    F: FnMut(&mut ChaCha8Rng) -> Vec<&'a Sample>,
{
    if options.lr <= 0.0 {
        return Err(Error::InvalidConfig("lr must be positive".into()));
    }
    let mut theta = theta.clone();
    for _ in 0..options.iters {
        let batch = batch_source(rng);
        if batch.is_empty() {
            continue;
        }
        let mut grad = DVector::zeros(theta.len());
        let mut loss = 0.0;
        for sample in &batch {
            let (g, l) = sample_gradient(&theta, sample, kind);
            grad += g;
            loss += l;
        }
        let scale = 1.0 / batch.len() as f64;
        loss *= scale;
        if !loss.is_finite() || loss > DIVERGENCE_LIMIT {
            return Err(Error::Divergence(loss));
        }
        theta -= grad.scale(options.lr * scale);
    }
    Ok(theta)
}

/// Mini-batch SGD on the current task only; deterministic given the seed.
/// This is the empirical lower bound: it forgets everything else.
pub fn sgd_finetune_task(
    theta: &DVector<f64>,
    dataset: &TaskDataset,
    kind: LossKind,
    options: &SgdOptions,
    seed: u64,
) -> Result<DVector<f64>> {
    if dataset.dim() != theta.len() {
        return Err(Error::DimensionMismatch {
            expected: theta.len(),
            got: dataset.dim(),
        });
    }
    let samples = extract_samples(dataset, kind)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(0);
    sgd_steps(theta, kind, options, &mut rng, |rng| {
        (0..options.batch)
            .map(|_| &samples[rng.random_range(0..samples.len())])
            .collect()
    })
}

/// Fixed-capacity sample memory with the reservoir property: every sample
/// seen so far is retained with equal probability.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    entries: Vec<(DVector<f64>, f64, usize)>,
    seen: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity,
            entries: Vec::with_capacity(capacity),
            seen: 0,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn seen(&self) -> usize {
        self.seen
    }

    /// Stored floats, under the same accounting convention as the learners:
    /// one feature row plus one target per entry.
    pub fn float_count(&self) -> usize {
        self.entries.iter().map(|(x, _, _)| x.len() + 1).sum()
    }

    /// Algorithm R: the i-th sample replaces a random slot with probability
    /// capacity / i.
    pub fn offer(&mut self, x: DVector<f64>, y: f64, task_id: usize, rng: &mut ChaCha8Rng) {
        self.seen += 1;
        if self.capacity == 0 {
            return;
        }
        if self.entries.len() < self.capacity {
            self.entries.push((x, y, task_id));
            return;
        }
        let slot = rng.random_range(0..self.seen);
        if slot < self.capacity {
            self.entries[slot] = (x, y, task_id);
        }
    }

    pub fn entries(&self) -> &[(DVector<f64>, f64, usize)] {
        &self.entries
    }
}

/// Replay hyperparameters: SGD options plus the current/buffer batch split
/// (fraction of each batch drawn from the current task).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReplayOptions {
    pub sgd: SgdOptions,
    pub split: f64,
}

impl Default for ReplayOptions {
    fn default() -> Self {
        Self {
            sgd: SgdOptions::default(),
            split: 0.5,
        }
    }
}

/// SGD over batches mixing current-task samples with rehearsed buffer
/// samples, then streams the task into the reservoir. With capacity 0 this
/// degenerates to [`sgd_finetune_task`] exactly (same draws, same result).
pub fn replay_learn_task(
    theta: &DVector<f64>,
    buffer: &mut ReplayBuffer,
    dataset: &TaskDataset,
    kind: LossKind,
    options: &ReplayOptions,
    seed: u64,
) -> Result<DVector<f64>> {
    if !(0.0..=1.0).contains(&options.split) {
        return Err(Error::InvalidConfig("split must lie in [0, 1]".into()));
    }
    if dataset.dim() != theta.len() {
        return Err(Error::DimensionMismatch {
            expected: theta.len(),
            got: dataset.dim(),
        });
    }
    let samples = extract_samples(dataset, kind)?;
    let buffered: Vec<Sample> = buffer
        .entries()
        .iter()
        .map(|(x, y, _)| Sample {
            x: x.clone(),
            y: *y,
        })
        .collect();

    let batch = options.sgd.batch;
    let from_buffer = ((batch as f64 * (1.0 - options.split)).floor() as usize)
        .min(buffered.len());
    let from_current = batch - from_buffer;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(0);
    let theta = sgd_steps(theta, kind, &options.sgd, &mut rng, |rng| {
        let mut picked: Vec<&Sample> = (0..from_current)
            .map(|_| &samples[rng.random_range(0..samples.len())])
            .collect();
        for _ in 0..from_buffer {
            picked.push(&buffered[rng.random_range(0..buffered.len())]);
        }
        picked
    })?;

    // Reservoir maintenance draws from a separate stream so training and
    // retention randomness stay independent.
    let mut reservoir_rng = ChaCha8Rng::seed_from_u64(seed);
    reservoir_rng.set_stream(1);
    for sample in samples {
        buffer.offer(sample.x, sample.y, dataset.task_id(), &mut reservoir_rng);
    }
    Ok(theta)
}
