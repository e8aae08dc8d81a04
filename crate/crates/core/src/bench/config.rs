//! Benchmark configuration: JSON on disk with a schema version, defaults in
//! the config layer, and CLI-flag overrides applied on top.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const CONFIG_SCHEMA_VERSION: u32 = 1;

/// Learner names the harness recognizes.
pub const REGISTERED_LEARNERS: &[&str] = &["pmfcl_regression", "sgd", "replay"];

fn default_schema_version() -> u32 {
    CONFIG_SCHEMA_VERSION
}
fn default_experiment() -> String {
    "default".into()
}
fn default_seed() -> u64 {
    42
}
fn default_trials() -> usize {
    10
}
fn default_d() -> usize {
    10
}
fn default_num_tasks() -> usize {
    10
}
fn default_n_per_task() -> usize {
    50
}
fn default_shift_sigma() -> f64 {
    0.5
}
fn default_noise_sigma() -> f64 {
    0.1
}
fn default_lambda_reg() -> f64 {
    1e-6
}
fn default_out_dir() -> PathBuf {
    PathBuf::from("results")
}
fn default_lr() -> f64 {
    0.01
}
fn default_iters() -> usize {
    200
}
fn default_batch() -> usize {
    32
}
fn default_capacity() -> usize {
    200
}
fn default_split() -> f64 {
    0.5
}
fn default_solver() -> String {
    "pinv".into()
}

/// One learner entry with its hyperparameters (unused fields are ignored by
/// learners that do not take them).
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct LearnerSpec {
    pub name: String,
    #[serde(default = "default_lr")]
    pub lr: f64,
    #[serde(default = "default_iters")]
    pub iters: usize,
    #[serde(default = "default_batch")]
    pub batch: usize,
    #[serde(default = "default_capacity")]
    pub capacity: usize,
    #[serde(default = "default_split")]
    pub split: f64,
    /// "pinv" (minimum-norm) or "regularized" (Tikhonov with `lambda_reg`).
    #[serde(default = "default_solver")]
    pub solver: String,
}

impl LearnerSpec {
    pub fn named(name: &str) -> Self {
        Self {
            name: name.to_string(),
            lr: default_lr(),
            iters: default_iters(),
            batch: default_batch(),
            capacity: default_capacity(),
            split: default_split(),
            solver: default_solver(),
        }
    }
}

fn default_learners() -> Vec<LearnerSpec> {
    REGISTERED_LEARNERS.iter().map(|n| LearnerSpec::named(n)).collect()
}

/// Full benchmark configuration.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct BenchConfig {
    #[serde(default = "default_schema_version")]
    pub schema_version: u32,
    #[serde(default = "default_experiment")]
    pub experiment: String,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default = "default_d")]
    pub d: usize,
    #[serde(default = "default_num_tasks")]
    pub num_tasks: usize,
    #[serde(default = "default_n_per_task")]
    pub n_per_task: usize,
    #[serde(default = "default_shift_sigma")]
    pub shift_sigma: f64,
    #[serde(default = "default_noise_sigma")]
    pub noise_sigma: f64,
    #[serde(default = "default_lambda_reg")]
    pub lambda_reg: f64,
    #[serde(default = "default_learners")]
    pub learners: Vec<LearnerSpec>,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
}

impl Default for BenchConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("defaults are total")
    }
}

impl BenchConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::ConfigParse(format!("{}: {e}", path.display())))?;
        let config: Self = serde_json::from_str(&text)
            .map_err(|e| Error::ConfigParse(format!("{}: {e}", path.display())))?;
        if config.schema_version != CONFIG_SCHEMA_VERSION {
            return Err(Error::SchemaVersionMismatch {
                expected: CONFIG_SCHEMA_VERSION,
                got: config.schema_version,
            });
        }
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::InvalidConfig("trials must be >= 1".into()));
        }
        if self.d == 0 || self.num_tasks == 0 || self.n_per_task == 0 {
            return Err(Error::InvalidConfig(
                "d, num_tasks, and n_per_task must be positive".into(),
            ));
        }
        if self.shift_sigma < 0.0 || self.noise_sigma < 0.0 || self.lambda_reg < 0.0 {
            return Err(Error::InvalidConfig("sigmas and lambda_reg must be non-negative".into()));
        }
        if self.learners.is_empty() {
            return Err(Error::InvalidConfig("at least one learner is required".into()));
        }
        for learner in &self.learners {
            if !REGISTERED_LEARNERS.contains(&learner.name.as_str()) {
                return Err(Error::InvalidConfig(format!(
                    "unknown learner '{}'; registered: {}",
                    learner.name,
                    REGISTERED_LEARNERS.join(", ")
                )));
            }
            if learner.solver != "pinv" && learner.solver != "regularized" {
                return Err(Error::InvalidConfig(format!(
                    "unknown solver '{}'; use 'pinv' or 'regularized'",
                    learner.solver
                )));
            }
        }
        Ok(())
    }

    /// A copy with the output path blanked, as echoed into manifests so that
    /// result files stay byte-identical regardless of where they land.
    pub fn normalized_for_manifest(&self) -> Self {
        let mut copy = self.clone();
        copy.out_dir = PathBuf::new();
        copy
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        let config = BenchConfig::default();
        config.validate().unwrap();
        assert_eq!(config.trials, 10);
        assert_eq!(config.num_tasks, 10);
        assert_eq!(config.lambda_reg, 1e-6);
        assert_eq!(config.learners.len(), 3);
    }

    #[test]
    fn unknown_learner_rejected() {
        let mut config = BenchConfig::default();
        config.learners.push(LearnerSpec::named("mystery"));
        assert!(matches!(config.validate(), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn partial_json_fills_defaults() {
        let config: BenchConfig =
            serde_json::from_str(r#"{"seed": 7, "learners": [{"name": "sgd", "lr": 0.5}]}"#)
                .unwrap();
        assert_eq!(config.seed, 7);
        assert_eq!(config.trials, 10);
        assert_eq!(config.learners[0].lr, 0.5);
        assert_eq!(config.learners[0].iters, 200);
    }
}
