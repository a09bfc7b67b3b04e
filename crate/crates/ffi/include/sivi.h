#ifndef SIVI_H
#define SIVI_H

/* Generated by cbindgen from crates/ffi/src. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum SiviStatus {
  SIVI_STATUS_OK = 0,
  SIVI_STATUS_NULL_POINTER = 1,
  SIVI_STATUS_INVALID_ARGUMENT = 2,
  SIVI_STATUS_NUMERICAL = 3,
  SIVI_STATUS_ITERATION_LIMIT = 4,
  SIVI_STATUS_UNSUPPORTED = 5,
  SIVI_STATUS_IO = 6,
  SIVI_STATUS_PANIC = 7,
} SiviStatus;

/**
 * Opaque problem handle.
 */
typedef struct SiviProblem SiviProblem;

/**
 * Opaque solver trace handle.
 */
typedef struct SiviTrace SiviTrace;

/**
 * Solver settings. Obtain defaults from [`sivi_solver_options_default`].
 */
typedef struct SiviSolverOptions {
  /**
   * Step parameter, positive.
   */
  double eta;
  /**
   * Batch growth: `N_k = ceil((k+1)^(2+2*delta))`, positive.
   */
  double delta;
  /**
   * Upper bound on the batch size; 0 means no bound.
   */
  uint64_t cap;
  /**
   * Number of iterations.
   */
  size_t iters;
  uint64_t seed;
  /**
   * Independent random stream under `seed`, e.g. a replication index.
   */
  uint64_t stream;
  size_t record_every;
  /**
   * 0 evaluates the recorded gap with the exact mean map; otherwise the
   * number of fresh samples used to estimate it.
   */
  uint64_t gap_samples;
} SiviSolverOptions;

/**
 * One recorded iteration.
 */
typedef struct SiviRecord {
  size_t k;
  uint64_t cumulative_samples;
  double gap_norm;
  /**
   * Distance to the known solution, NaN when none is known.
   */
  double err;
  double wall_time;
} SiviRecord;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or NULL. The string stays
 * valid until the next library call on the same thread.
 */
const char *sivi_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *sivi_version(void);

/**
 * The three-dimensional affine box problem with Gaussian noise of the given
 * standard deviation per coordinate.
 *
 * # Safety
 * `out` must be valid for writes.
 */
enum SiviStatus sivi_problem_example1_new(double noise_scale, struct SiviProblem **out);

/**
 * A random transportation network with `m` supply markets, `n` demand
 * markets and `q` coupling halfspaces, generated from `model_seed`.
 *
 * # Safety
 * `out` must be valid for writes.
 */
enum SiviStatus sivi_problem_example2_new(uint64_t model_seed,
                                          size_t m,
                                          size_t n,
                                          size_t q,
                                          double noise_scale,
                                          struct SiviProblem **out);

/**
 * `G(x, xi) = A x + d + noise_scale * xi` over the box `[lower, upper]`.
 * `matrix` is `dim * dim` row-major. `lower`/`upper` may be NULL for an
 * unbounded side, `x0` may be NULL for the origin and `x_star` may be NULL
 * when no solution is known.
 *
 * # Safety
 * Non-NULL pointers must reference arrays of the stated sizes; `out` must be
 * valid for writes.
 */
enum SiviStatus sivi_problem_affine_new(size_t dim,
                                        const double *matrix,
                                        const double *offset,
                                        const double *lower,
                                        const double *upper,
                                        double noise_scale,
                                        const double *x0,
                                        const double *x_star,
                                        struct SiviProblem **out);

/**
 * Dimension of the decision variable, 0 for NULL.
 *
 * # Safety
 * `problem` must be NULL or a live handle.
 */
size_t sivi_problem_dim(const struct SiviProblem *problem);

/**
 * Projects `u` onto the problem's feasible set.
 *
 * # Safety
 * `u` and `out` must reference `len` doubles; `problem` must be a live handle.
 */
enum SiviStatus sivi_problem_project(const struct SiviProblem *problem,
                                     const double *u,
                                     double *out,
                                     size_t len);

/**
 * # Safety
 * `problem` must be NULL or a handle not yet freed.
 */
void sivi_problem_free(struct SiviProblem *problem);

/**
 * Fills `out` with the defaults: eta 1, delta 0.5, no cap, 100 iterations,
 * seed 1, stream 0, every iteration recorded, exact gap evaluation.
 *
 * # Safety
 * `out` must be valid for writes.
 */
enum SiviStatus sivi_solver_options_default(struct SiviSolverOptions *out);

/**
 * Runs the solver. On success `*out` receives a trace handle.
 *
 * # Safety
 * `problem` and `options` must be live; `out` must be valid for writes.
 */
enum SiviStatus sivi_solve(const struct SiviProblem *problem,
                           const struct SiviSolverOptions *options,
                           struct SiviTrace **out);

/**
 * Number of records, 0 for NULL.
 *
 * # Safety
 * `trace` must be NULL or a live handle.
 */
size_t sivi_trace_len(const struct SiviTrace *trace);

/**
 * # Safety
 * `trace` must be live and `out` valid for writes.
 */
enum SiviStatus sivi_trace_record(const struct SiviTrace *trace,
                                  size_t index,
                                  struct SiviRecord *out);

/**
 * Copies the iterate of record `index` into `out[0..len]`; `len` must equal
 * the problem dimension.
 *
 * # Safety
 * `trace` must be live and `out` must reference `len` writable doubles.
 */
enum SiviStatus sivi_trace_iterate(const struct SiviTrace *trace,
                                   size_t index,
                                   double *out,
                                   size_t len);

/**
 * Writes the trace as CSV (`k,cum_samples,gap_norm,err`).
 *
 * # Safety
 * `trace` must be live and `path` a NUL-terminated UTF-8 string.
 */
enum SiviStatus sivi_trace_write_csv(const struct SiviTrace *trace, const char *path);

/**
 * # Safety
 * `trace` must be NULL or a handle not yet freed.
 */
void sivi_trace_free(struct SiviTrace *trace);

/**
 * Batch size at iteration `k` for growth `delta` and `cap` (0 = none).
 *
 * # Safety
 * `out` must be valid for writes.
 */
enum SiviStatus sivi_batch_size(double delta, uint64_t cap, size_t k, uint64_t *out);

/**
 * Projects `u` onto the box `[lo, hi]` (entries may be infinite).
 *
 * # Safety
 * All pointers must reference `len` doubles; `out` must be writable.
 */
enum SiviStatus sivi_project_box(size_t len,
                                 const double *lo,
                                 const double *hi,
                                 const double *u,
                                 double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SIVI_H */
