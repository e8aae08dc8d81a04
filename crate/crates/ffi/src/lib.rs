//! C ABI for the continual-learning engine: opaque learner handles, status
//! codes, and flat-array data exchange. The generated header lives at
//! `include/pmfcl.h`.
//!
//! Conventions: matrices cross the boundary row-major; every fallible call
//! returns a [`PmfclStatus`]; out-parameters are written only on
//! `PMFCL_STATUS_OK`. Handles are created and destroyed by this library
//! only, are not thread-safe for concurrent mutation, and must be freed
//! exactly once with their `_free` function.

use std::ffi::{c_char, c_int};

use nalgebra::{DMatrix, DVector};
use pmfcl::msi::FeatureMap;
use pmfcl::qub::{build_summary, FitOptions, LogisticKind};
use pmfcl::regression::{PhaseLabel, RegressionLearner, SolveStrategy};
use pmfcl::tasks::TaskDataset;
use pmfcl::Error;

/// Status codes returned by every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PmfclStatus {
    PmfclStatusOk = 0,
    PmfclStatusNullPointer = 1,
    PmfclStatusInvalidArgument = 2,
    PmfclStatusDimensionMismatch = 3,
    PmfclStatusNonFinite = 4,
    PmfclStatusSingularSystem = 5,
    PmfclStatusRankZero = 6,
    PmfclStatusNoFiniteMinimizer = 7,
    PmfclStatusUnknownTask = 8,
    PmfclStatusDivergence = 9,
    PmfclStatusBufferTooSmall = 10,
    PmfclStatusInternal = 11,
}

fn status_from_error(err: &Error) -> PmfclStatus {
    match err {
        Error::NonFinite => PmfclStatus::PmfclStatusNonFinite,
        Error::SingularSystem => PmfclStatus::PmfclStatusSingularSystem,
        Error::DimensionMismatch { .. } => PmfclStatus::PmfclStatusDimensionMismatch,
        Error::RankZero => PmfclStatus::PmfclStatusRankZero,
        Error::NoFiniteMinimizer { .. } => PmfclStatus::PmfclStatusNoFiniteMinimizer,
        Error::UnknownTask(_) => PmfclStatus::PmfclStatusUnknownTask,
        Error::Divergence(_) => PmfclStatus::PmfclStatusDivergence,
        Error::InvalidConfig(_) | Error::EmptySequence | Error::ZeroCount => {
            PmfclStatus::PmfclStatusInvalidArgument
        }
        _ => PmfclStatus::PmfclStatusInternal,
    }
}

/// Static, NUL-terminated description of a status code.
#[no_mangle]
pub extern "C" fn pmfcl_status_message(status: PmfclStatus) -> *const c_char {
    let text: &'static [u8] = match status {
        PmfclStatus::PmfclStatusOk => b"ok\0",
        PmfclStatus::PmfclStatusNullPointer => b"null pointer argument\0",
        PmfclStatus::PmfclStatusInvalidArgument => b"invalid argument\0",
        PmfclStatus::PmfclStatusDimensionMismatch => b"dimension mismatch\0",
        PmfclStatus::PmfclStatusNonFinite => b"non-finite input\0",
        PmfclStatus::PmfclStatusSingularSystem => b"numerically singular system\0",
        PmfclStatus::PmfclStatusRankZero => b"feature matrix has rank zero\0",
        PmfclStatus::PmfclStatusNoFiniteMinimizer => b"no finite minimizer; retry with ridge > 0\0",
        PmfclStatus::PmfclStatusUnknownTask => b"task has not been learned\0",
        PmfclStatus::PmfclStatusDivergence => b"loss diverged\0",
        PmfclStatus::PmfclStatusBufferTooSmall => b"output buffer too small\0",
        PmfclStatus::PmfclStatusInternal => b"internal error\0",
    };
    text.as_ptr() as *const c_char
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn pmfcl_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

unsafe fn matrix_from_raw(data: *const f64, rows: usize, cols: usize) -> Option<DMatrix<f64>> {
    if data.is_null() || rows == 0 || cols == 0 {
        return None;
    }
    let slice = std::slice::from_raw_parts(data, rows * cols);
    Some(DMatrix::from_row_slice(rows, cols, slice))
}

// ---------------------------------------------------------------------------
// Regression learner.
// ---------------------------------------------------------------------------

/// Opaque handle over the continual regression learner.
pub struct PmfclRegressionLearner {
    inner: RegressionLearner,
    tasks_fed: usize,
}

/// Creates a learner for `d`-dimensional linear regression. `lambda < 0`
/// selects minimum-norm pseudo-inverse solves; `lambda >= 0` selects
/// Tikhonov-regularized solves with that lambda. Returns null on `d == 0`.
#[no_mangle]
pub extern "C" fn pmfcl_regression_learner_new(
    d: usize,
    lambda: f64,
) -> *mut PmfclRegressionLearner {
    if d == 0 || lambda.is_nan() {
        return std::ptr::null_mut();
    }
    let strategy = if lambda < 0.0 {
        SolveStrategy::PseudoInverse
    } else {
        SolveStrategy::Regularized { lambda }
    };
    let learner = RegressionLearner::new(FeatureMap::identity(d), strategy);
    Box::into_raw(Box::new(PmfclRegressionLearner {
        inner: learner,
        tasks_fed: 0,
    }))
}

/// Frees a learner created by [`pmfcl_regression_learner_new`]. Passing null
/// is a no-op.
///
/// # Safety
/// `learner` must be a pointer returned by this library and not yet freed.
#[no_mangle]
pub unsafe extern "C" fn pmfcl_regression_learner_free(learner: *mut PmfclRegressionLearner) {
    if !learner.is_null() {
        drop(Box::from_raw(learner));
    }
}

/// Feeds one task: `x` is row-major `n x d`, `y` has length `n`.
///
/// # Safety
/// `learner` must be a live handle; `x` and `y` must point to at least
/// `n * d` and `n` readable doubles.
#[no_mangle]
pub unsafe extern "C" fn pmfcl_regression_learner_learn_task(
    learner: *mut PmfclRegressionLearner,
    x: *const f64,
    y: *const f64,
    n: usize,
    d: usize,
) -> PmfclStatus {
    let Some(handle) = learner.as_mut() else {
        return PmfclStatus::PmfclStatusNullPointer;
    };
    let Some(matrix) = matrix_from_raw(x, n, d) else {
        return PmfclStatus::PmfclStatusNullPointer;
    };
    if y.is_null() {
        return PmfclStatus::PmfclStatusNullPointer;
    }
    let targets = DVector::from_column_slice(std::slice::from_raw_parts(y, n));
    let task = match TaskDataset::regression(handle.tasks_fed, matrix, targets) {
        Ok(task) => task,
        Err(e) => return status_from_error(&e),
    };
    match handle.inner.learn_task(&task) {
        Ok(()) => {
            handle.tasks_fed += 1;
            PmfclStatus::PmfclStatusOk
        }
        Err(e) => status_from_error(&e),
    }
}

/// Copies the current solution into `out` (capacity `len >= d`).
///
/// # Safety
/// `learner` must be a live handle; `out` must point to `len` writable
/// doubles.
#[no_mangle]
pub unsafe extern "C" fn pmfcl_regression_learner_solution(
    learner: *const PmfclRegressionLearner,
    out: *mut f64,
    len: usize,
) -> PmfclStatus {
    let Some(handle) = learner.as_ref() else {
        return PmfclStatus::PmfclStatusNullPointer;
    };
    if out.is_null() {
        return PmfclStatus::PmfclStatusNullPointer;
    }
    let solution = handle.inner.solution();
    if len < solution.len() {
        return PmfclStatus::PmfclStatusBufferTooSmall;
    }
    std::ptr::copy_nonoverlapping(solution.as_slice().as_ptr(), out, solution.len());
    PmfclStatus::PmfclStatusOk
}

/// Parameter dimension of the learner, or 0 for null.
///
/// # Safety
/// `learner` must be null or a live handle from this library.
#[no_mangle]
pub unsafe extern "C" fn pmfcl_regression_learner_dim(
    learner: *const PmfclRegressionLearner,
) -> usize {
    learner
        .as_ref()
        .map_or(0, |h| h.inner.feature_map().output_dim())
}

/// Task-memory float count, or 0 for null.
///
/// # Safety
/// `learner` must be null or a live handle from this library.
#[no_mangle]
pub unsafe extern "C" fn pmfcl_regression_learner_memory_floats(
    learner: *const PmfclRegressionLearner,
) -> usize {
    learner
        .as_ref()
        .map_or(0, |h| h.inner.memory_footprint().float_count)
}

/// Learner phase: 0 while tasks are stored directly, 1 after the switch to
/// constant-memory updates, -1 for null.
///
/// # Safety
/// `learner` must be null or a live handle from this library.
#[no_mangle]
pub unsafe extern "C" fn pmfcl_regression_learner_phase(
    learner: *const PmfclRegressionLearner,
) -> c_int {
    match learner.as_ref() {
        None => -1,
        Some(h) => match h.inner.memory_footprint().phase_label {
            PhaseLabel::Direct => 0,
            PhaseLabel::Iterative => 1,
        },
    }
}

// ---------------------------------------------------------------------------
// Binary-logistic QUB learner.
// ---------------------------------------------------------------------------

/// Opaque handle over the binary-logistic continual learner.
pub struct PmfclQubBinaryLearner {
    inner: pmfcl::qub::QubLearner,
    d: usize,
    tasks_fed: usize,
    ridge: f64,
}

/// Creates a binary-logistic learner with the given ridge used when fitting
/// per-task minimizers. Returns null on `d == 0` or invalid ridge.
#[no_mangle]
pub extern "C" fn pmfcl_qub_binary_learner_new(d: usize, ridge: f64) -> *mut PmfclQubBinaryLearner {
    if d == 0 || !ridge.is_finite() || ridge < 0.0 {
        return std::ptr::null_mut();
    }
    let inner = pmfcl::qub::QubLearner::new(d, 1, SolveStrategy::PseudoInverse).with_retention();
    Box::into_raw(Box::new(PmfclQubBinaryLearner {
        inner,
        d,
        tasks_fed: 0,
        ridge,
    }))
}

/// Frees a learner created by [`pmfcl_qub_binary_learner_new`].
///
/// # Safety
/// `learner` must be a pointer returned by this library and not yet freed.
#[no_mangle]
pub unsafe extern "C" fn pmfcl_qub_binary_learner_free(learner: *mut PmfclQubBinaryLearner) {
    if !learner.is_null() {
        drop(Box::from_raw(learner));
    }
}

/// Feeds one binary task: `x` row-major `n x d`, `labels` of length `n`
/// holding 0 or 1.
///
/// # Safety
/// `learner` must be a live handle; `x` must point to `n * d` readable
/// doubles and `labels` to `n` readable bytes.
#[no_mangle]
pub unsafe extern "C" fn pmfcl_qub_binary_learn_task(
    learner: *mut PmfclQubBinaryLearner,
    x: *const f64,
    labels: *const u8,
    n: usize,
    d: usize,
) -> PmfclStatus {
    let Some(handle) = learner.as_mut() else {
        return PmfclStatus::PmfclStatusNullPointer;
    };
    if d != handle.d {
        return PmfclStatus::PmfclStatusDimensionMismatch;
    }
    let Some(matrix) = matrix_from_raw(x, n, d) else {
        return PmfclStatus::PmfclStatusNullPointer;
    };
    if labels.is_null() {
        return PmfclStatus::PmfclStatusNullPointer;
    }
    let labels = std::slice::from_raw_parts(labels, n);
    if labels.iter().any(|&l| l > 1) {
        return PmfclStatus::PmfclStatusInvalidArgument;
    }
    let mut onehot = DMatrix::zeros(n, 2);
    for (i, &label) in labels.iter().enumerate() {
        onehot[(i, label as usize)] = 1.0;
    }
    let task = match TaskDataset::classification(handle.tasks_fed, matrix, onehot) {
        Ok(task) => task,
        Err(e) => return status_from_error(&e),
    };
    let options = FitOptions {
        ridge: handle.ridge,
        ..FitOptions::default()
    };
    let summary = match build_summary(&task, LogisticKind::Binary, &options) {
        Ok(summary) => summary,
        Err(e) => return status_from_error(&e),
    };
    match handle.inner.learn_task(summary) {
        Ok(()) => {
            handle.tasks_fed += 1;
            PmfclStatus::PmfclStatusOk
        }
        Err(e) => status_from_error(&e),
    }
}

/// Copies the current solution into `out` (capacity `len >= d`).
///
/// # Safety
/// `learner` must be a live handle; `out` must point to `len` writable
/// doubles.
#[no_mangle]
pub unsafe extern "C" fn pmfcl_qub_binary_solution(
    learner: *const PmfclQubBinaryLearner,
    out: *mut f64,
    len: usize,
) -> PmfclStatus {
    let Some(handle) = learner.as_ref() else {
        return PmfclStatus::PmfclStatusNullPointer;
    };
    if out.is_null() {
        return PmfclStatus::PmfclStatusNullPointer;
    }
    if len < handle.d {
        return PmfclStatus::PmfclStatusBufferTooSmall;
    }
    let solution = handle.inner.solution();
    std::ptr::copy_nonoverlapping(solution.as_slice().as_ptr(), out, handle.d);
    PmfclStatus::PmfclStatusOk
}

/// Number of learned tasks (equals the number of available bounds).
///
/// # Safety
/// `learner` must be null or a live handle from this library.
#[no_mangle]
pub unsafe extern "C" fn pmfcl_qub_binary_task_count(
    learner: *const PmfclQubBinaryLearner,
) -> usize {
    learner.as_ref().map_or(0, |h| h.inner.tasks_seen())
}

/// Copies the worst-case forgetting bound of each learned task (in learn
/// order) into `out` (capacity `len >= task count`).
///
/// # Safety
/// `learner` must be a live handle; `out` must point to `len` writable
/// doubles.
#[no_mangle]
pub unsafe extern "C" fn pmfcl_qub_binary_forgetting_bounds(
    learner: *const PmfclQubBinaryLearner,
    out: *mut f64,
    len: usize,
) -> PmfclStatus {
    let Some(handle) = learner.as_ref() else {
        return PmfclStatus::PmfclStatusNullPointer;
    };
    if out.is_null() {
        return PmfclStatus::PmfclStatusNullPointer;
    }
    let bounds = match handle.inner.retained_bounds() {
        Ok(bounds) => bounds,
        Err(e) => return status_from_error(&e),
    };
    if len < bounds.len() {
        return PmfclStatus::PmfclStatusBufferTooSmall;
    }
    for (i, (_, bound)) in bounds.iter().enumerate() {
        *out.add(i) = *bound;
    }
    PmfclStatus::PmfclStatusOk
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn regression_lifecycle_matches_core() {
        let learner = pmfcl_regression_learner_new(2, -1.0);
        assert!(!learner.is_null());
        // Both tasks agree on y = 2 x0 - x1.
        let x = [1.0, 0.0, 0.0, 1.0, 1.0, 1.0];
        let y = [2.0, -1.0, 1.0];
        let status = unsafe { pmfcl_regression_learner_learn_task(learner, x.as_ptr(), y.as_ptr(), 3, 2) };
        assert_eq!(status, PmfclStatus::PmfclStatusOk);
        // One full-rank task fills the rank budget exactly; no switch yet.
        assert_eq!(unsafe { pmfcl_regression_learner_phase(learner) }, 0);
        assert_eq!(unsafe { pmfcl_regression_learner_memory_floats(learner) }, 2 * (2 + 2));
        let status = unsafe { pmfcl_regression_learner_learn_task(learner, x.as_ptr(), y.as_ptr(), 3, 2) };
        assert_eq!(status, PmfclStatus::PmfclStatusOk);
        let mut out = [0.0f64; 2];
        let status = unsafe { pmfcl_regression_learner_solution(learner, out.as_mut_ptr(), 2) };
        assert_eq!(status, PmfclStatus::PmfclStatusOk);
        assert!((out[0] - 2.0).abs() < 1e-9 && (out[1] + 1.0).abs() < 1e-9);
        assert_eq!(unsafe { pmfcl_regression_learner_dim(learner) }, 2);
        assert_eq!(unsafe { pmfcl_regression_learner_phase(learner) }, 1);
        assert_eq!(unsafe { pmfcl_regression_learner_memory_floats(learner) }, 2 * 2 + 2 * 2);
        unsafe { pmfcl_regression_learner_free(learner) };
    }

    #[test]
    fn null_and_size_errors() {
        let status = unsafe {
            pmfcl_regression_learner_learn_task(std::ptr::null_mut(), std::ptr::null(), std::ptr::null(), 0, 0)
        };
        assert_eq!(status, PmfclStatus::PmfclStatusNullPointer);
        let learner = pmfcl_regression_learner_new(3, -1.0);
        let mut small = [0.0f64; 1];
        let status = unsafe { pmfcl_regression_learner_solution(learner, small.as_mut_ptr(), 1) };
        assert_eq!(status, PmfclStatus::PmfclStatusBufferTooSmall);
        unsafe { pmfcl_regression_learner_free(learner) };
        assert_eq!(pmfcl_regression_learner_new(0, -1.0), std::ptr::null_mut());
    }

    #[test]
    fn qub_binary_lifecycle() {
        let learner = pmfcl_qub_binary_learner_new(1, 1e-6);
        assert!(!learner.is_null());
        let x = [1.0, 2.0, -1.0, -2.0, 0.5, -0.5];
        let labels = [1u8, 1, 0, 0, 0, 1];
        let status = unsafe { pmfcl_qub_binary_learn_task(learner, x.as_ptr(), labels.as_ptr(), 6, 1) };
        assert_eq!(status, PmfclStatus::PmfclStatusOk);
        assert_eq!(unsafe { pmfcl_qub_binary_task_count(learner) }, 1);
        let mut theta = [0.0f64; 1];
        let status = unsafe { pmfcl_qub_binary_solution(learner, theta.as_mut_ptr(), 1) };
        assert_eq!(status, PmfclStatus::PmfclStatusOk);
        assert!(theta[0] > 0.0);
        let mut bounds = [0.0f64; 1];
        let status =
            unsafe { pmfcl_qub_binary_forgetting_bounds(learner, bounds.as_mut_ptr(), 1) };
        assert_eq!(status, PmfclStatus::PmfclStatusOk);
        assert!(bounds[0].abs() < 1e-12, "own-task bound is zero");
        unsafe { pmfcl_qub_binary_learner_free(learner) };
    }

    #[test]
    fn status_messages_are_nul_terminated() {
        for status in [
            PmfclStatus::PmfclStatusOk,
            PmfclStatus::PmfclStatusRankZero,
            PmfclStatus::PmfclStatusInternal,
        ] {
            let ptr = pmfcl_status_message(status);
            assert!(!ptr.is_null());
            let text = unsafe { std::ffi::CStr::from_ptr(ptr) };
            assert!(!text.to_str().unwrap().is_empty());
        }
    }

    #[test]
    fn version_is_set() {
        let ptr = pmfcl_version();
        let text = unsafe { std::ffi::CStr::from_ptr(ptr) };
        assert_eq!(text.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
    }
}
