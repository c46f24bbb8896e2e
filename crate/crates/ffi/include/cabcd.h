#ifndef CABCD_H
#define CABCD_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum CabcdAlgorithm {
  CABCD_ALGORITHM_CG = 0,
  CABCD_ALGORITHM_BCD = 1,
  CABCD_ALGORITHM_CA_BCD = 2,
  CABCD_ALGORITHM_BDCD = 3,
  CABCD_ALGORITHM_CA_BDCD = 4,
} CabcdAlgorithm;

typedef enum CabcdBackend {
  CABCD_BACKEND_LOCKSTEP = 0,
  CABCD_BACKEND_THREADED = 1,
} CabcdBackend;

typedef enum CabcdLayout {
  /**
   * The algorithm's natural layout.
   */
  CABCD_LAYOUT_NATURAL = 0,
  CABCD_LAYOUT_ROW = 1,
  CABCD_LAYOUT_COLUMN = 2,
} CabcdLayout;

typedef enum CabcdStatus {
  CABCD_STATUS_OK = 0,
  CABCD_STATUS_NULL_POINTER = 1,
  CABCD_STATUS_INVALID_ARGUMENT = 2,
  CABCD_STATUS_IO = 3,
  CABCD_STATUS_PARSE = 4,
  CABCD_STATUS_FACTORIZATION = 5,
  CABCD_STATUS_COMM = 6,
  CABCD_STATUS_BUFFER_TOO_SMALL = 7,
  CABCD_STATUS_PANIC = 8,
} CabcdStatus;

typedef struct CabcdConfig CabcdConfig;

/**
 * A ridge problem: `d x n` matrix (features by data points) and labels.
 */
typedef struct CabcdProblem CabcdProblem;

typedef struct CabcdResult CabcdResult;

/**
 * Critical-path cost counters.
 */
typedef struct CabcdCounters {
  uint64_t flops;
  uint64_t words;
  uint64_t messages;
} CabcdCounters;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failure on this thread, or NULL. The pointer stays
 * valid until the next failing call on the same thread.
 */
const char *cabcd_last_error(void);

/**
 * Static description of a status code.
 */
const char *cabcd_status_str(enum CabcdStatus status);

/**
 * Builds a problem from `nnz` coordinate triplets of the `d x n` matrix
 * and `n` labels. Duplicate coordinates are rejected.
 *
 * # Safety
 * `rows`, `cols` and `vals` must point to `nnz` elements, `y` to `n`
 * elements, and `out` must be writable.
 */
enum CabcdStatus cabcd_problem_from_triplets(size_t d,
                                             size_t n,
                                             const size_t *rows,
                                             const size_t *cols,
                                             const double *vals,
                                             size_t nnz,
                                             const double *y,
                                             struct CabcdProblem **out);

/**
 * Reads a LIBSVM file (one data point per line). `features` of 0 infers
 * the dimension from the largest index.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` writable.
 */
enum CabcdStatus cabcd_problem_load_libsvm(const char *path,
                                           size_t features,
                                           struct CabcdProblem **out);

/**
 * # Safety
 * `problem` must come from a `cabcd_problem_*` constructor or be NULL.
 */
void cabcd_problem_free(struct CabcdProblem *problem);

/**
 * # Safety
 * `problem` must be a live handle; the out pointers may be NULL.
 */
enum CabcdStatus cabcd_problem_dims(const struct CabcdProblem *problem,
                                    size_t *d,
                                    size_t *n,
                                    size_t *nnz);

/**
 * A configuration with `s = 1`, tolerance 0, seed 0, one rank, stopping
 * checks once per epoch and no recording.
 *
 * # Safety
 * `out` must be writable.
 */
enum CabcdStatus cabcd_config_new(enum CabcdAlgorithm algorithm,
                                  size_t block_size,
                                  double lambda,
                                  size_t max_iters,
                                  struct CabcdConfig **out);

/**
 * # Safety
 * `config` must come from [`cabcd_config_new`] or be NULL.
 */
void cabcd_config_free(struct CabcdConfig *config);

/**
 * Sets the unrolling depth of the CA variants.
 *
 * # Safety
 * `config` must be a live handle.
 */
enum CabcdStatus cabcd_config_set_s(struct CabcdConfig *config, size_t s);

/**
 * # Safety
 * `config` must be a live handle.
 */
enum CabcdStatus cabcd_config_set_tol(struct CabcdConfig *config, double tol);

/**
 * # Safety
 * `config` must be a live handle.
 */
enum CabcdStatus cabcd_config_set_seed(struct CabcdConfig *config, uint64_t seed);

/**
 * Stopping checks every `every` iterations; 0 disables them.
 *
 * # Safety
 * `config` must be a live handle.
 */
enum CabcdStatus cabcd_config_set_check_interval(struct CabcdConfig *config, size_t every);

/**
 * # Safety
 * `config` must be a live handle.
 */
enum CabcdStatus cabcd_config_set_ranks(struct CabcdConfig *config,
                                        size_t ranks,
                                        enum CabcdLayout layout,
                                        enum CabcdBackend backend);

/**
 * Runs the configured solver on `problem`.
 *
 * # Safety
 * `problem` and `config` must be live handles and `out` writable.
 */
enum CabcdStatus cabcd_solve(const struct CabcdProblem *problem,
                             const struct CabcdConfig *config,
                             struct CabcdResult **out);

/**
 * # Safety
 * `result` must come from [`cabcd_solve`] or be NULL.
 */
void cabcd_result_free(struct CabcdResult *result);

/**
 * Copies the `d` weights into `buf`. `*written` receives `d` even when the
 * buffer is too small, so a first call with `len = 0` sizes the buffer.
 *
 * # Safety
 * `result` must be a live handle, `buf` must hold `len` elements and
 * `written` must be writable.
 */
enum CabcdStatus cabcd_result_weights(const struct CabcdResult *result,
                                      double *buf,
                                      size_t len,
                                      size_t *written);

/**
 * # Safety
 * `result` must be a live handle; the out pointers may be NULL.
 */
enum CabcdStatus cabcd_result_summary(const struct CabcdResult *result,
                                      size_t *iterations,
                                      bool *converged,
                                      struct CabcdCounters *counters);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CABCD_H */
