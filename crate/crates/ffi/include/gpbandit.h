#ifndef GPBANDIT_H
#define GPBANDIT_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum GpbStatus {
  GPB_STATUS_OK = 0,
  GPB_STATUS_NULL_POINTER = 1,
  GPB_STATUS_INVALID_INPUT = 2,
  GPB_STATUS_CONFIG = 3,
  GPB_STATUS_NUMERICAL = 4,
  GPB_STATUS_UNSUPPORTED = 5,
  GPB_STATUS_DOMAIN_EXHAUSTED = 6,
  GPB_STATUS_OBJECTIVE = 7,
  GPB_STATUS_IO = 8,
  GPB_STATUS_BUFFER_TOO_SMALL = 9,
  GPB_STATUS_PANIC = 10,
} GpbStatus;

typedef enum GpbKernelFamily {
  GPB_KERNEL_FAMILY_SQUARED_EXPONENTIAL = 0,
  GPB_KERNEL_FAMILY_MATERN = 1,
} GpbKernelFamily;

typedef enum GpbLenientKind {
  GPB_LENIENT_KIND_INDICATOR = 0,
  GPB_LENIENT_KIND_GAP = 1,
  GPB_LENIENT_KIND_HINGE = 2,
} GpbLenientKind;

/**
 * Opaque GP posterior with a fixed input dimension.
 */
typedef struct GpbPosterior GpbPosterior;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the calling thread's last error message (NUL terminated) into
 * `buf`. `needed` receives the full length including the terminator.
 * Passing a null `buf` only reports the length.
 *
 * # Safety
 * `buf` must be null or writable for `len` bytes; `needed` may be null.
 */
enum GpbStatus gpb_last_error_message(char *buf, size_t len, size_t *needed);

/**
 * `k(x, y)` for two points of dimension `dim`. `nu` is ignored for the
 * squared exponential.
 *
 * # Safety
 * `x` and `y` must point at `dim` values; `out` must be writable.
 */
enum GpbStatus gpb_kernel_eval(enum GpbKernelFamily family,
                               double lengthscale,
                               double scale,
                               double nu,
                               const double *x,
                               const double *y,
                               size_t dim,
                               double *out);

/**
 * Creates an empty posterior. Free it with [`gpb_posterior_free`].
 *
 * # Safety
 * `out` must be writable.
 */
enum GpbStatus gpb_posterior_new(enum GpbKernelFamily family,
                                 double lengthscale,
                                 double scale,
                                 double nu,
                                 double lambda,
                                 size_t dim,
                                 struct GpbPosterior **out);

/**
 * # Safety
 * `handle` must be null or come from [`gpb_posterior_new`], and must not
 * be used afterwards.
 */
void gpb_posterior_free(struct GpbPosterior *handle);

/**
 * Appends one observation `(x, y)`.
 *
 * # Safety
 * `handle` must be live; `x` must point at `dim` values.
 */
enum GpbStatus gpb_posterior_append(struct GpbPosterior *handle, const double *x, double y);

/**
 * Posterior mean and variance at `x`.
 *
 * # Safety
 * `handle` must be live; `x` must point at `dim` values; outputs writable.
 */
enum GpbStatus gpb_posterior_predict(const struct GpbPosterior *handle,
                                     const double *x,
                                     double *mean,
                                     double *variance);

/**
 * Number of observations and `½ ln det(I + K/λ)` of the observed inputs.
 *
 * # Safety
 * `handle` must be live; outputs must be writable or null.
 */
enum GpbStatus gpb_posterior_summary(const struct GpbPosterior *handle,
                                     size_t *count,
                                     double *information_gain);

/**
 * Per-round lenient regret contribution of instantaneous regret `r`.
 *
 * # Safety
 * `out` must be writable.
 */
enum GpbStatus gpb_lenient_regret(enum GpbLenientKind kind, double r, double gap, double *out);

/**
 * The bad-round constants for regularizer `lambda`.
 *
 * # Safety
 * Outputs must be writable.
 */
enum GpbStatus gpb_constants(double lambda, double *c1, double *c2);

/**
 * RKHS confidence half-width for round `t ≥ 1`, given the information
 * gain of the first `t − 1` observations.
 *
 * # Safety
 * `out` must be writable.
 */
enum GpbStatus gpb_beta_rkhs(double norm_bound,
                             double noise_std,
                             double lambda,
                             double delta,
                             size_t t,
                             double gain,
                             double *out);

/**
 * Runs a suite from a JSON config and writes its files to `out_dir`
 * (overriding the config's output). Returns `Objective` when every
 * episode failed.
 *
 * # Safety
 * Both arguments must be NUL-terminated strings.
 */
enum GpbStatus gpb_run_suite_json(const char *config_json, const char *out_dir);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* GPBANDIT_H */
