//! Metric rows and their CSV encodings.
//!
//! `metrics.csv` holds only deterministic values so reruns from the same
//! seed are byte-identical; wall-clock timings go to `timings.csv`, which is
//! explicitly outside the determinism contract.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::util::fmt_f64;

pub const METRICS_SCHEMA_VERSION: u32 = 1;

/// Per-(trial, learner, task) measurements.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub trial: usize,
    pub learner: String,
    /// 1-based task index within the sequence.
    pub task_index: usize,
    /// Plain MSE of the solution on the just-learned task.
    pub current_task_mse: f64,
    /// Plain MSE over all tasks seen so far, concatenated.
    pub cumulative_mse: f64,
    /// Squared distance to the joint least-squares optimum.
    pub param_dist_sq: f64,
    /// Forgetting of each past task (loss above its minimum), tasks 1..=k.
    pub forgetting: Vec<f64>,
    pub memory_floats: usize,
    /// Wall-clock seconds spent learning this task (timings.csv only).
    pub wall_time_seconds: f64,
}

const METRICS_HEADER: &[&str] = &[
    "trial",
    "learner",
    "task_index",
    "current_task_mse",
    "cumulative_mse",
    "param_dist_sq",
    "forgetting",
    "memory_floats",
];

/// Writes the deterministic metric columns; `forgetting` is ';'-joined.
pub fn write_metrics_csv<W: Write>(writer: W, rows: &[MetricsRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(METRICS_HEADER)?;
    for row in rows {
        let forgetting = row
            .forgetting
            .iter()
            .map(|&f| fmt_f64(f))
            .collect::<Vec<_>>()
            .join(";");
        w.write_record(&[
            row.trial.to_string(),
            row.learner.clone(),
            row.task_index.to_string(),
            fmt_f64(row.current_task_mse),
            fmt_f64(row.cumulative_mse),
            fmt_f64(row.param_dist_sq),
            forgetting,
            row.memory_floats.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads rows written by [`write_metrics_csv`] (wall times come back zero).
pub fn read_metrics_csv<R: std::io::Read>(reader: R) -> Result<Vec<MetricsRow>> {
    let mut r = csv::Reader::from_reader(reader);
    let headers = r.headers()?.clone();
    if headers.iter().ne(METRICS_HEADER.iter().cloned()) {
        return Err(Error::ConfigParse("unexpected metrics.csv header".into()));
    }
    let mut rows = Vec::new();
    for record in r.records() {
        let record = record?;
        let parse_f = |s: &str| -> Result<f64> {
            s.parse()
                .map_err(|e| Error::ConfigParse(format!("bad float '{s}': {e}")))
        };
        let parse_u = |s: &str| -> Result<usize> {
            s.parse()
                .map_err(|e| Error::ConfigParse(format!("bad integer '{s}': {e}")))
        };
        let forgetting = if record[6].is_empty() {
            Vec::new()
        } else {
            record[6]
                .split(';')
                .map(parse_f)
                .collect::<Result<Vec<_>>>()?
        };
        rows.push(MetricsRow {
            trial: parse_u(&record[0])?,
            learner: record[1].to_string(),
            task_index: parse_u(&record[2])?,
            current_task_mse: parse_f(&record[3])?,
            cumulative_mse: parse_f(&record[4])?,
            param_dist_sq: parse_f(&record[5])?,
            forgetting,
            memory_floats: parse_u(&record[7])?,
            wall_time_seconds: 0.0,
        });
    }
    Ok(rows)
}

/// Writes wall-clock timings: `trial,learner,task_index,wall_time_seconds`.
pub fn write_timings_csv<W: Write>(writer: W, rows: &[MetricsRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["trial", "learner", "task_index", "wall_time_seconds"])?;
    for row in rows {
        w.write_record(&[
            row.trial.to_string(),
            row.learner.clone(),
            row.task_index.to_string(),
            fmt_f64(row.wall_time_seconds),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Mean and standard deviation of one metric across trials.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRow {
    pub learner: String,
    pub task_index: usize,
    pub current_mse_mean: f64,
    pub current_mse_std: f64,
    pub cumulative_mse_mean: f64,
    pub cumulative_mse_std: f64,
    pub param_dist_sq_mean: f64,
    pub param_dist_sq_std: f64,
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Aggregates raw rows into per-(learner, task) mean/std, ordered by learner
/// name then task index.
pub fn aggregate(rows: &[MetricsRow]) -> Vec<AggregateRow> {
    let mut keys: Vec<(String, usize)> = rows
        .iter()
        .map(|r| (r.learner.clone(), r.task_index))
        .collect();
    keys.sort();
    keys.dedup();
    keys.into_iter()
        .map(|(learner, task_index)| {
            let current: Vec<f64> = rows
                .iter()
                .filter(|r| r.learner == learner && r.task_index == task_index)
                .map(|r| r.current_task_mse)
                .collect();
            let cumulative: Vec<f64> = rows
                .iter()
                .filter(|r| r.learner == learner && r.task_index == task_index)
                .map(|r| r.cumulative_mse)
                .collect();
            let dist: Vec<f64> = rows
                .iter()
                .filter(|r| r.learner == learner && r.task_index == task_index)
                .map(|r| r.param_dist_sq)
                .collect();
            let (cm, cs) = mean_std(&current);
            let (um, us) = mean_std(&cumulative);
            let (dm, ds) = mean_std(&dist);
            AggregateRow {
                learner,
                task_index,
                current_mse_mean: cm,
                current_mse_std: cs,
                cumulative_mse_mean: um,
                cumulative_mse_std: us,
                param_dist_sq_mean: dm,
                param_dist_sq_std: ds,
            }
        })
        .collect()
}

pub fn write_aggregate_csv<W: Write>(writer: W, rows: &[AggregateRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "learner",
        "task_index",
        "current_mse_mean",
        "current_mse_std",
        "cumulative_mse_mean",
        "cumulative_mse_std",
        "param_dist_sq_mean",
        "param_dist_sq_std",
    ])?;
    for row in rows {
        w.write_record(&[
            row.learner.clone(),
            row.task_index.to_string(),
            fmt_f64(row.current_mse_mean),
            fmt_f64(row.current_mse_std),
            fmt_f64(row.cumulative_mse_mean),
            fmt_f64(row.cumulative_mse_std),
            fmt_f64(row.param_dist_sq_mean),
            fmt_f64(row.param_dist_sq_std),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(trial: usize, learner: &str, k: usize, value: f64) -> MetricsRow {
        MetricsRow {
            trial,
            learner: learner.into(),
            task_index: k,
            current_task_mse: value,
            cumulative_mse: value * 2.0,
            param_dist_sq: value * 3.0,
            forgetting: vec![0.0; k],
            memory_floats: 10,
            wall_time_seconds: 0.5,
        }
    }

    #[test]
    fn csv_round_trip() {
        let rows = vec![row(0, "sgd", 1, 0.25), row(1, "sgd", 1, 0.75)];
        let mut buffer = Vec::new();
        write_metrics_csv(&mut buffer, &rows).unwrap();
        let back = read_metrics_csv(buffer.as_slice()).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[0].current_task_mse, 0.25);
        assert_eq!(back[0].forgetting.len(), 1);
    }

    #[test]
    fn aggregate_mean_and_std() {
        let rows = vec![row(0, "sgd", 1, 0.25), row(1, "sgd", 1, 0.75)];
        let agg = aggregate(&rows);
        assert_eq!(agg.len(), 1);
        assert_eq!(agg[0].current_mse_mean, 0.5);
        assert_eq!(agg[0].current_mse_std, 0.25);
        // Single trial: std columns are zero.
        let single = aggregate(&rows[..1]);
        assert_eq!(single[0].current_mse_std, 0.0);
    }

    #[test]
    fn timings_separate_from_metrics() {
        let rows = vec![row(0, "sgd", 1, 0.25)];
        let mut metrics = Vec::new();
        write_metrics_csv(&mut metrics, &rows).unwrap();
        let text = String::from_utf8(metrics).unwrap();
        assert!(!text.contains("wall_time"));
        let mut timings = Vec::new();
        write_timings_csv(&mut timings, &rows).unwrap();
        let text = String::from_utf8(timings).unwrap();
        assert!(text.contains("wall_time_seconds"));
    }
}
