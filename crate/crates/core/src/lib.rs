//! Continual-learning engine for quadratic and quadratic-upper-bounded
//! losses, built around the idea that a task's loss surface — not its
//! samples — is what a learner must remember.
//!
//! Each regression task is compressed into the right singular structure of
//! its data (`msi`), which reconstructs the task loss exactly at every
//! parameter. Learners accumulate these compressed surfaces into a fixed
//! `d x d` curvature state (`regression`), so the sequential solution always
//! coincides with the joint optimum over every task seen, with memory that
//! stops growing once the rank budget is reached. Losses that are not
//! quadratic but admit a quadratic upper bound — logistic regression in
//! particular — get the same treatment through per-task curvature bounds
//! (`qub`), including a federated variant where clients exchange curvature
//! summaries instead of data (`federated`). The `bench` module and the
//! `pmfcl` CLI reproduce the synthetic benchmark protocol with seeded
//! determinism, and `baselines` supplies the SGD and replay comparators.

pub mod baselines;
pub mod bench;
pub mod error;
pub mod federated;
pub mod linalg;
pub mod msi;
pub mod qub;
pub mod regression;
pub mod tasks;
pub mod util;

pub use error::{Error, Result};
