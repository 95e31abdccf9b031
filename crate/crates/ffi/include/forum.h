#ifndef FORUM_H
#define FORUM_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call.
 */
typedef enum {
  FORUM_STATUS_OK = 0,
  FORUM_STATUS_NULL_POINTER = 1,
  FORUM_STATUS_INVALID_ARGUMENT = 2,
  FORUM_STATUS_CONFIG = 3,
  FORUM_STATUS_DIMENSION = 4,
  FORUM_STATUS_CAPABILITY = 5,
  FORUM_STATUS_DIVERGENCE = 6,
  FORUM_STATUS_IO = 7,
  FORUM_STATUS_PANIC = 8,
} ForumStatus;

typedef enum {
  FORUM_METHOD_FORUM = 0,
  FORUM_METHOD_MOML_EXACT = 1,
  FORUM_METHOD_MOML_UNROLLED = 2,
} ForumMethod;

/**
 * Opaque solver configuration handle.
 */
typedef struct ForumConfig ForumConfig;

/**
 * Opaque problem handle.
 */
typedef struct ForumProblem ForumProblem;

/**
 * Opaque result of a completed run.
 */
typedef struct ForumRun ForumRun;

/**
 * One iterate record. Metrics that were not computed are NaN.
 */
typedef struct {
  size_t k;
  double q_tilde;
  double q_exact;
  double kkt_residual;
  double optimality_gap;
  double nu;
  double direction_norm;
  double wall_time_s;
  size_t workspace_floats;
  bool approximate_metrics;
} ForumRecord;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * NUL-terminated crate version; static storage.
 */
const char *forum_version(void);

/**
 * Copies the calling thread's last error message into `buf` (truncated,
 * always NUL-terminated when `len > 0`) and returns the full message length
 * plus one. An empty message means the last call succeeded.
 *
 * # Safety
 * `buf` must be null or point to `len` writable bytes.
 */
size_t forum_last_error_message(char *buf, size_t len);

/**
 * The three-variable synthetic problem (one upper-level, two lower-level coordinates, two objectives).
 *
 * # Safety
 * `out` must be a valid pointer to a handle slot.
 */
ForumStatus forum_problem_synthetic_new(ForumProblem **out);

/**
 * # Safety
 * `out` must be a valid pointer to a handle slot.
 */
ForumStatus forum_problem_random_quadratic_new(uint64_t seed,
                                               size_t n,
                                               size_t p,
                                               size_t m,
                                               ForumProblem **out);

/**
 * Builds a problem from the JSON problem selector used in experiment configs,
 * e.g. `{"kind": "hyperclean", "corruption_rate": 0.4}`.
 *
 * # Safety
 * `spec_json` must be a NUL-terminated string and `out` a valid handle slot.
 */
ForumStatus forum_problem_from_json(const char *spec_json, uint64_t seed, ForumProblem **out);

/**
 * # Safety
 * `problem` must be a live handle; each output pointer must be null or writable.
 */
ForumStatus forum_problem_dims(const ForumProblem *problem, size_t *n, size_t *p, size_t *m);

/**
 * # Safety
 * `problem` must be null or a handle not yet freed.
 */
void forum_problem_free(ForumProblem *problem);

/**
 * # Safety
 * `out` must be a valid pointer to a handle slot.
 */
ForumStatus forum_config_default(ForumConfig **out);

/**
 * Parses the `solver` object of an experiment config; omitted fields take defaults.
 *
 * # Safety
 * `json` must be a NUL-terminated string and `out` a valid handle slot.
 */
ForumStatus forum_config_from_json(const char *json, ForumConfig **out);

/**
 * # Safety
 * `config` must be null or a handle not yet freed.
 */
void forum_config_free(ForumConfig *config);

/**
 * Runs `method` from `(alpha, omega)`. On divergence no handle is produced.
 *
 * # Safety
 * `alpha` and `omega` must hold `n` and `p` doubles; handles must be live; `out` writable.
 */
ForumStatus forum_run_new(const ForumProblem *problem,
                          const ForumConfig *config,
                          ForumMethod method,
                          const double *alpha,
                          size_t n,
                          const double *omega,
                          size_t p,
                          ForumRun **out);

/**
 * Number of records in the trace; 0 for a null handle.
 *
 * # Safety
 * `run` must be null or a live handle.
 */
size_t forum_run_len(const ForumRun *run);

/**
 * # Safety
 * `run` must be a live handle and `out` writable.
 */
ForumStatus forum_run_record(const ForumRun *run, size_t index, ForumRecord *out);

/**
 * Writes `F_1..F_m` of record `index` into `out` (length `m`).
 *
 * # Safety
 * `run` must be a live handle and `out` must hold `m` doubles.
 */
ForumStatus forum_run_f_values(const ForumRun *run, size_t index, double *out, size_t m);

/**
 * # Safety
 * `run` must be a live handle; `alpha` and `omega` must hold `n` and `p` doubles.
 */
ForumStatus forum_run_final_point(const ForumRun *run,
                                  double *alpha,
                                  size_t n,
                                  double *omega,
                                  size_t p);

/**
 * # Safety
 * `run` must be a live handle and `out` must hold `m` doubles.
 */
ForumStatus forum_run_final_lambda(const ForumRun *run, double *out, size_t m);

/**
 * # Safety
 * `run` must be null or a handle not yet freed.
 */
void forum_run_free(ForumRun *run);

/**
 * Euclidean projection of `v` onto the probability simplex.
 *
 * # Safety
 * `v` and `out` must each hold `len` doubles.
 */
ForumStatus forum_project_simplex(const double *v, size_t len, double *out);

/**
 * Solves the weight subproblem for `m` row-major gradients of length `dim`,
 * the constraint gradient `grad_q` and margin `phi`. `dual_objective` and
 * `converged` may be null.
 *
 * # Safety
 * `grads` must hold `m * dim` doubles, `grad_q` `dim`, `lambda` `m`.
 */
ForumStatus forum_solve_dual_qp(const double *grads,
                                size_t m,
                                size_t dim,
                                const double *grad_q,
                                double phi,
                                double *lambda,
                                double *dual_objective,
                                bool *converged);

/**
 * Min-norm weights over `m` row-major gradients; `direction` receives the
 * negated min-norm combination.
 *
 * # Safety
 * `grads` must hold `m * dim` doubles, `lambda` `m`, `direction` `dim`.
 */
ForumStatus forum_mgda_direction(const double *grads,
                                 size_t m,
                                 size_t dim,
                                 double *lambda,
                                 double *direction);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FORUM_H */
