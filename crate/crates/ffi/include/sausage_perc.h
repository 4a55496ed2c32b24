#ifndef SAUSAGE_PERC_H
#define SAUSAGE_PERC_H

/* Generated by cbindgen from the sausage-perc-ffi crate. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every fallible call.
 */
typedef enum SpStatus {
  SP_STATUS_OK = 0,
  SP_STATUS_NULL_POINTER = 1,
  SP_STATUS_CONFIG = 2,
  SP_STATUS_PARSE = 3,
  SP_STATUS_NOT_FOUND = 4,
  SP_STATUS_SINGULAR = 5,
  SP_STATUS_EXPLOSION = 6,
  SP_STATUS_IO = 7,
  SP_STATUS_BUFFER_TOO_SMALL = 8,
  SP_STATUS_PANIC = 9,
} SpStatus;

/**
 * Capacity estimator selector for [`sp_sausage_capacity`].
 */
typedef enum SpCapMethod {
  SP_CAP_METHOD_HITTING = 0,
  SP_CAP_METHOD_ENERGY_LOWER = 1,
  SP_CAP_METHOD_ZT_UPPER = 2,
} SpCapMethod;

/**
 * A sampled sausage configuration.
 */
typedef struct SpConfiguration SpConfiguration;

/**
 * A finished threshold sweep.
 */
typedef struct SpExperiment SpExperiment;

/**
 * A multi-type offspring kernel.
 */
typedef struct SpKernel SpKernel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Length in bytes of the last error message on this thread, excluding the
 * NUL; 0 when the last call succeeded.
 */
size_t sp_last_error_length(void);

/**
 * Copies the last error message on this thread into `buf`.
 *
 * # Safety
 * `buf` must point to `cap` writable bytes.
 */
enum SpStatus sp_last_error_message(char *buf, size_t cap);

/**
 * Newtonian capacity of a ball of `radius` in dimension `d`.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum SpStatus sp_ball_capacity(size_t d, double radius, double *out);

/**
 * Estimates the capacity of one Wiener sausage of duration `t` and radius
 * `r`, the path drawn from `seed`. `n` is the number of walks (hitting) or
 * pairs (energy); it is ignored by the upper bound, which needs `d = 4`.
 *
 * # Safety
 * `value` and `std_error` must be valid pointers.
 */
enum SpStatus sp_sausage_capacity(size_t d,
                                  double t,
                                  double r,
                                  enum SpCapMethod method,
                                  size_t n,
                                  uint64_t seed,
                                  double *value,
                                  double *std_error);

/**
 * Samples a Poisson configuration of sausages in `[0, box_side]^d` with
 * starting points in the box inflated by `margin`. A nonpositive `delta`
 * selects the default path step.
 *
 * # Safety
 * `out` must be a valid pointer; the handle written there is owned by the
 * caller and released with [`sp_configuration_free`].
 */
enum SpStatus sp_configuration_sample(size_t d,
                                      double lambda,
                                      double t,
                                      double r,
                                      double delta,
                                      double box_side,
                                      double margin,
                                      uint64_t seed,
                                      struct SpConfiguration **out);

/**
 * Number of sausages, or 0 for a null handle.
 *
 * # Safety
 * `cfg` must be null or a live handle.
 */
size_t sp_configuration_len(const struct SpConfiguration *cfg);

/**
 * First time the sausages connect the two faces orthogonal to the first
 * axis. `crossed` is set to false, and `tau` left untouched, when they never
 * do within the horizon.
 *
 * # Safety
 * `cfg` must be a live handle; `tau` and `crossed` valid pointers.
 */
enum SpStatus sp_configuration_crossing_time(const struct SpConfiguration *cfg,
                                             double *tau,
                                             bool *crossed);

/**
 * # Safety
 * `cfg` must be null or a handle not yet freed.
 */
void sp_configuration_free(struct SpConfiguration *cfg);

/**
 * Single-type kernel with Poisson(`mu`) offspring.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum SpStatus sp_kernel_single(double mu, struct SpKernel **out);

/**
 * Parses a kernel from its CSV text.
 *
 * # Safety
 * `csv` must be a NUL-terminated string and `out` a valid pointer.
 */
enum SpStatus sp_kernel_from_csv(const char *csv, struct SpKernel **out);

/**
 * Serializes a kernel to CSV. Call with a null `buf` to learn the size.
 *
 * # Safety
 * `kernel` must be a live handle and `buf` point to `cap` writable bytes.
 */
enum SpStatus sp_kernel_to_csv(const struct SpKernel *kernel,
                               char *buf,
                               size_t cap,
                               size_t *needed);

/**
 * Number of types, or 0 for a null handle.
 *
 * # Safety
 * `kernel` must be null or a live handle.
 */
size_t sp_kernel_n_types(const struct SpKernel *kernel);

/**
 * Runs `runs` Galton-Watson processes from one individual of `root_type`
 * for at most `max_gen` generations and counts those that die out.
 *
 * # Safety
 * `kernel` must be a live handle and `extinct` a valid pointer.
 */
enum SpStatus sp_kernel_extinction_count(const struct SpKernel *kernel,
                                         size_t root_type,
                                         size_t max_gen,
                                         uint64_t runs,
                                         uint64_t seed,
                                         uint64_t *extinct);

/**
 * # Safety
 * `kernel` must be null or a handle not yet freed.
 */
void sp_kernel_free(struct SpKernel *kernel);

/**
 * Number of *-contours of `n` sites around the origin, `4 ≤ n ≤ 9`.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum SpStatus sp_count_star_contours(size_t n, uint64_t *out);

/**
 * Runs a threshold sweep from the text of a key-value configuration file.
 * `workers == 0` uses the global thread pool.
 *
 * # Safety
 * `config` must be a NUL-terminated string and `out` a valid pointer.
 */
enum SpStatus sp_experiment_run(const char *config, size_t workers, struct SpExperiment **out);

/**
 * Per-trial CSV of a sweep.
 *
 * # Safety
 * `exp` must be a live handle and `buf` point to `cap` writable bytes.
 */
enum SpStatus sp_experiment_csv(const struct SpExperiment *exp,
                                char *buf,
                                size_t cap,
                                size_t *needed);

/**
 * JSON summary of a sweep.
 *
 * # Safety
 * `exp` must be a live handle and `buf` point to `cap` writable bytes.
 */
enum SpStatus sp_experiment_summary_json(const struct SpExperiment *exp,
                                         char *buf,
                                         size_t cap,
                                         size_t *needed);

/**
 * Whether any cell of the sweep had too many trials without a crossing.
 *
 * # Safety
 * `exp` must be null or a live handle.
 */
bool sp_experiment_underpowered(const struct SpExperiment *exp);

/**
 * # Safety
 * `exp` must be null or a handle not yet freed.
 */
void sp_experiment_free(struct SpExperiment *exp);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SAUSAGE_PERC_H */
