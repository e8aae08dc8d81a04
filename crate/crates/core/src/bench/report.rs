//! Post-run comparison: tabulates final metrics per learner from a results
//! directory.

use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use super::metrics::{read_metrics_csv, MetricsRow};
use super::runner::{read_manifest, Manifest, METRICS_FILE, TIMINGS_FILE};
use crate::error::{Error, Result};
use crate::util::fmt_f64;

pub const REPORT_FILE: &str = "report.csv";

/// One learner's end-of-run summary, mean +/- std over trials.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub learner: String,
    pub final_cumulative_mse_mean: f64,
    pub final_cumulative_mse_std: f64,
    pub final_param_dist_sq_mean: f64,
    pub final_param_dist_sq_std: f64,
    pub peak_memory_floats: usize,
    pub total_wall_time_mean: f64,
    pub total_wall_time_std: f64,
}

/// Comparison table over all learners in a results directory.
#[derive(Debug, Clone)]
pub struct Report {
    pub manifest: Manifest,
    pub rows: Vec<ReportRow>,
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

fn read_timings(dir: &Path, rows: &mut [MetricsRow]) -> Result<()> {
    let path = dir.join(TIMINGS_FILE);
    if !path.exists() {
        return Ok(());
    }
    let mut reader = csv::Reader::from_reader(std::fs::File::open(path)?);
    for record in reader.records() {
        let record = record?;
        let trial: usize = record[0].parse().unwrap_or(usize::MAX);
        let learner = record[1].to_string();
        let task_index: usize = record[2].parse().unwrap_or(usize::MAX);
        let seconds: f64 = record[3].parse().unwrap_or(0.0);
        if let Some(row) = rows
            .iter_mut()
            .find(|r| r.trial == trial && r.learner == learner && r.task_index == task_index)
        {
            row.wall_time_seconds = seconds;
        }
    }
    Ok(())
}

/// Builds the comparison table from a results directory; the manifest is
/// required and schema-checked.
pub fn compare_report(dir: &Path) -> Result<Report> {
    let manifest = read_manifest(dir)?;
    let metrics_path = dir.join(METRICS_FILE);
    if !metrics_path.exists() {
        return Err(Error::ConfigParse(format!(
            "{} has no {METRICS_FILE}",
            dir.display()
        )));
    }
    let mut rows = read_metrics_csv(std::fs::File::open(metrics_path)?)?;
    read_timings(dir, &mut rows)?;

    let mut learners: Vec<String> = manifest.config.learners.iter().map(|l| l.name.clone()).collect();
    learners.dedup();

    let final_task = rows.iter().map(|r| r.task_index).max().unwrap_or(0);
    let mut report_rows = Vec::new();
    for learner in &learners {
        let finals: Vec<&MetricsRow> = rows
            .iter()
            .filter(|r| &r.learner == learner && r.task_index == final_task)
            .collect();
        if finals.is_empty() {
            continue;
        }
        let (cm, cs) = mean_std(&finals.iter().map(|r| r.cumulative_mse).collect::<Vec<_>>());
        let (dm, ds) = mean_std(&finals.iter().map(|r| r.param_dist_sq).collect::<Vec<_>>());
        let peak = rows
            .iter()
            .filter(|r| &r.learner == learner)
            .map(|r| r.memory_floats)
            .max()
            .unwrap_or(0);
        let mut per_trial_time = Vec::new();
        let trials: Vec<usize> = {
            let mut t: Vec<usize> = rows
                .iter()
                .filter(|r| &r.learner == learner)
                .map(|r| r.trial)
                .collect();
            t.sort_unstable();
            t.dedup();
            t
        };
        for trial in trials {
            per_trial_time.push(
                rows.iter()
                    .filter(|r| &r.learner == learner && r.trial == trial)
                    .map(|r| r.wall_time_seconds)
                    .sum::<f64>(),
            );
        }
        let (tm, ts) = mean_std(&per_trial_time);
        report_rows.push(ReportRow {
            learner: learner.clone(),
            final_cumulative_mse_mean: cm,
            final_cumulative_mse_std: cs,
            final_param_dist_sq_mean: dm,
            final_param_dist_sq_std: ds,
            peak_memory_floats: peak,
            total_wall_time_mean: tm,
            total_wall_time_std: ts,
        });
    }
    Ok(Report {
        manifest,
        rows: report_rows,
    })
}

impl Report {
    /// Human-readable table.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<18} {:>26} {:>26} {:>14} {:>22}",
            "learner", "final cumulative MSE", "final param dist^2", "peak memory", "total wall time [s]"
        );
        for row in &self.rows {
            let _ = writeln!(
                out,
                "{:<18} {:>13.6e} ± {:>9.3e} {:>13.6e} ± {:>9.3e} {:>14} {:>11.4} ± {:>8.4}",
                row.learner,
                row.final_cumulative_mse_mean,
                row.final_cumulative_mse_std,
                row.final_param_dist_sq_mean,
                row.final_param_dist_sq_std,
                row.peak_memory_floats,
                row.total_wall_time_mean,
                row.total_wall_time_std,
            );
        }
        out
    }

    /// CSV form of the table.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record([
            "learner",
            "final_cumulative_mse_mean",
            "final_cumulative_mse_std",
            "final_param_dist_sq_mean",
            "final_param_dist_sq_std",
            "peak_memory_floats",
            "total_wall_time_mean",
            "total_wall_time_std",
        ])?;
        for row in &self.rows {
            w.write_record(&[
                row.learner.clone(),
                fmt_f64(row.final_cumulative_mse_mean),
                fmt_f64(row.final_cumulative_mse_std),
                fmt_f64(row.final_param_dist_sq_mean),
                fmt_f64(row.final_param_dist_sq_std),
                row.peak_memory_floats.to_string(),
                fmt_f64(row.total_wall_time_mean),
                fmt_f64(row.total_wall_time_std),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bench::config::BenchConfig;
    use crate::bench::runner::run_benchmark;
    use tempfile::TempDir;

    #[test]
    fn report_covers_all_learners() {
        let dir = TempDir::new().unwrap();
        let mut config = BenchConfig {
            trials: 1,
            d: 3,
            num_tasks: 2,
            n_per_task: 10,
            out_dir: dir.path().to_path_buf(),
            ..BenchConfig::default()
        };
        for learner in &mut config.learners {
            learner.iters = 10;
        }
        run_benchmark(&config).unwrap();
        let report = compare_report(dir.path()).unwrap();
        assert_eq!(report.rows.len(), config.learners.len());
        // Single trial: std columns are zero.
        for row in &report.rows {
            assert_eq!(row.final_cumulative_mse_std, 0.0);
        }
        let text = report.to_text();
        assert!(text.contains("pmfcl_regression"));
        let mut csv_bytes = Vec::new();
        report.write_csv(&mut csv_bytes).unwrap();
        assert!(String::from_utf8(csv_bytes).unwrap().contains("sgd"));
    }

    #[test]
    fn missing_manifest_is_an_error() {
        let dir = TempDir::new().unwrap();
        assert!(matches!(
            compare_report(dir.path()),
            Err(Error::MissingManifest(_))
        ));
    }
}
