//! Benchmark harness: configuration, execution, metrics, comparison
//! reports, and the end-to-end verification suite.

pub mod config;
pub mod metrics;
pub mod report;
pub mod runner;
pub mod verify;

pub use config::{BenchConfig, LearnerSpec, CONFIG_SCHEMA_VERSION, REGISTERED_LEARNERS};
pub use metrics::{MetricsRow, METRICS_SCHEMA_VERSION};
pub use report::{compare_report, Report};
pub use runner::{joint_least_squares, read_manifest, run_benchmark, Manifest, RunSummary};
pub use verify::{exit_code, run_all, CriterionResult};
