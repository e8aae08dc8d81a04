#ifndef PMFCL_H
#define PMFCL_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes returned by every fallible call.
 */
typedef enum PmfclStatus {
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
} PmfclStatus;

/**
 * Opaque handle over the binary-logistic continual learner.
 */
typedef struct PmfclQubBinaryLearner PmfclQubBinaryLearner;

/**
 * Opaque handle over the continual regression learner.
 */
typedef struct PmfclRegressionLearner PmfclRegressionLearner;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Static, NUL-terminated description of a status code.
 */
const char *pmfcl_status_message(enum PmfclStatus status);

/**
 * Library version as a static NUL-terminated string.
 */
const char *pmfcl_version(void);

/**
 * Creates a learner for `d`-dimensional linear regression. `lambda < 0`
 * selects minimum-norm pseudo-inverse solves; `lambda >= 0` selects
 * Tikhonov-regularized solves with that lambda. Returns null on `d == 0`.
 */
struct PmfclRegressionLearner *pmfcl_regression_learner_new(uintptr_t d, double lambda);

/**
 * Frees a learner created by [`pmfcl_regression_learner_new`]. Passing null
 * is a no-op.
 *
 * # Safety
 * `learner` must be a pointer returned by this library and not yet freed.
 */
void pmfcl_regression_learner_free(struct PmfclRegressionLearner *learner);

/**
 * Feeds one task: `x` is row-major `n x d`, `y` has length `n`.
 *
 * # Safety
 * `learner` must be a live handle; `x` and `y` must point to at least
 * `n * d` and `n` readable doubles.
 */
enum PmfclStatus pmfcl_regression_learner_learn_task(struct PmfclRegressionLearner *learner,
                                                     const double *x,
                                                     const double *y,
                                                     uintptr_t n,
                                                     uintptr_t d);

/**
 * Copies the current solution into `out` (capacity `len >= d`).
 *
 * # Safety
 * `learner` must be a live handle; `out` must point to `len` writable
 * doubles.
 */
enum PmfclStatus pmfcl_regression_learner_solution(const struct PmfclRegressionLearner *learner,
                                                   double *out,
                                                   uintptr_t len);

/**
 * Parameter dimension of the learner, or 0 for null.
 *
 * # Safety
 * `learner` must be null or a live handle from this library.
 */
uintptr_t pmfcl_regression_learner_dim(const struct PmfclRegressionLearner *learner);

/**
 * Task-memory float count, or 0 for null.
 *
 * # Safety
 * `learner` must be null or a live handle from this library.
 */
uintptr_t pmfcl_regression_learner_memory_floats(const struct PmfclRegressionLearner *learner);

/**
 * Learner phase: 0 while tasks are stored directly, 1 after the switch to
 * constant-memory updates, -1 for null.
 *
 * # Safety
 * `learner` must be null or a live handle from this library.
 */
int pmfcl_regression_learner_phase(const struct PmfclRegressionLearner *learner);

/**
 * Creates a binary-logistic learner with the given ridge used when fitting
 * per-task minimizers. Returns null on `d == 0` or invalid ridge.
 */
struct PmfclQubBinaryLearner *pmfcl_qub_binary_learner_new(uintptr_t d, double ridge);

/**
 * Frees a learner created by [`pmfcl_qub_binary_learner_new`].
 *
 * # Safety
 * `learner` must be a pointer returned by this library and not yet freed.
 */
void pmfcl_qub_binary_learner_free(struct PmfclQubBinaryLearner *learner);

/**
 * Feeds one binary task: `x` row-major `n x d`, `labels` of length `n`
 * holding 0 or 1.
 *
 * # Safety
 * `learner` must be a live handle; `x` must point to `n * d` readable
 * doubles and `labels` to `n` readable bytes.
 */
enum PmfclStatus pmfcl_qub_binary_learn_task(struct PmfclQubBinaryLearner *learner,
                                             const double *x,
                                             const uint8_t *labels,
                                             uintptr_t n,
                                             uintptr_t d);

/**
 * Copies the current solution into `out` (capacity `len >= d`).
 *
 * # Safety
 * `learner` must be a live handle; `out` must point to `len` writable
 * doubles.
 */
enum PmfclStatus pmfcl_qub_binary_solution(const struct PmfclQubBinaryLearner *learner,
                                           double *out,
                                           uintptr_t len);

/**
 * Number of learned tasks (equals the number of available bounds).
 *
 * # Safety
 * `learner` must be null or a live handle from this library.
 */
uintptr_t pmfcl_qub_binary_task_count(const struct PmfclQubBinaryLearner *learner);

/**
 * Copies the worst-case forgetting bound of each learned task (in learn
 * order) into `out` (capacity `len >= task count`).
 *
 * # Safety
 * `learner` must be a live handle; `out` must point to `len` writable
 * doubles.
 */
enum PmfclStatus pmfcl_qub_binary_forgetting_bounds(const struct PmfclQubBinaryLearner *learner,
                                                    double *out,
                                                    uintptr_t len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PMFCL_H */
