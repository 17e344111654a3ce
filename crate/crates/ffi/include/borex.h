#ifndef BOREX_H
#define BOREX_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum BorexStatus {
  BOREX_STATUS_OK = 0,
  BOREX_STATUS_NULL_POINTER = 1,
  BOREX_STATUS_INVALID_ARGUMENT = 2,
  BOREX_STATUS_SHAPE = 3,
  BOREX_STATUS_NUMERICAL = 4,
  BOREX_STATUS_CLASSIFIER = 5,
  BOREX_STATUS_IO = 6,
  BOREX_STATUS_DEGENERATE_SAMPLE = 7,
  BOREX_STATUS_PANIC = 8,
} BorexStatus;

/**
 * Opaque Gaussian-process state.
 */
typedef struct BorexGp BorexGp;

/**
 * `nu` must be 0.5, 1.5 or 2.5.
 */
typedef struct BorexKernelParams {
  double nu;
  double length_scale;
  double signal_var;
  double noise_var;
  double frame_scale;
} BorexKernelParams;

typedef struct BorexIndexPoint {
  size_t frame;
  size_t row;
  size_t col;
  size_t side;
  size_t span;
} BorexIndexPoint;

typedef struct BorexDims {
  size_t frames;
  size_t height;
  size_t width;
} BorexDims;

typedef struct BorexWilcoxon {
  size_t n_effective;
  double statistic;
  double p_value;
  /**
   * 1 when the exact null distribution was used, 0 for the normal approximation.
   */
  int exact;
} BorexWilcoxon;

/**
 * Classifier callback: writes the confidence in `[0, 1]` of `label` for
 * one image with the given shape and returns 0, or a non-zero code on failure.
 */
typedef int (*BorexClassifyFn)(void *user,
                               const double *data,
                               struct BorexDims dims,
                               size_t channels,
                               const char *label,
                               double *confidence);

/**
 * Refinement settings. `candidate_stride = 0` picks the default stride.
 */
typedef struct BorexRefineConfig {
  size_t n_iters;
  const size_t *sizes;
  size_t n_sizes;
  const size_t *spans;
  size_t n_spans;
  double kappa;
  size_t candidate_stride;
  bool use_flip;
  bool weighted_avg;
  bool use_prior;
} BorexRefineConfig;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or NULL. The pointer is
 * valid until the next failing call on the same thread.
 */
const char *borex_last_error_message(void);

struct BorexKernelParams borex_kernel_params_default(void);

/**
 * Matérn covariance between two index points.
 *
 * # Safety
 * `a`, `b`, `params` and `out` must be valid pointers.
 */
enum BorexStatus borex_matern_kernel(const struct BorexIndexPoint *a,
                                     const struct BorexIndexPoint *b,
                                     const struct BorexKernelParams *params,
                                     double *out);

/**
 * Creates a GP with a zero prior mean, or with the max-abs normalized
 * `prior` map over `dims` when `prior` is not NULL.
 *
 * # Safety
 * `params` and `out` must be valid; `prior`, when not NULL, must hold
 * `frames * height * width` doubles.
 */
enum BorexStatus borex_gp_new(const struct BorexKernelParams *params,
                              const double *prior,
                              struct BorexDims dims,
                              struct BorexGp **out);

/**
 * # Safety
 * `gp` must come from [`borex_gp_new`] and not be used afterwards. NULL is ignored.
 */
void borex_gp_free(struct BorexGp *gp);

/**
 * # Safety
 * `gp` must be a live handle.
 */
enum BorexStatus borex_gp_observe(struct BorexGp *gp, struct BorexIndexPoint x, double s);

/**
 * # Safety
 * `gp` must be a live handle; `mean` and `var` must be valid.
 */
enum BorexStatus borex_gp_posterior(const struct BorexGp *gp,
                                    struct BorexIndexPoint q,
                                    double *mean,
                                    double *var);

/**
 * Number of observations held by `gp`, or 0 for NULL.
 *
 * # Safety
 * `gp` must be NULL or a live handle.
 */
size_t borex_gp_len(const struct BorexGp *gp);

/**
 * Scales `values` by `1 / max|values|` into `out` (may alias `values`).
 *
 * # Safety
 * Both arrays must hold `len` doubles.
 */
enum BorexStatus borex_normalize_saliency(const double *values, size_t len, double *out);

/**
 * One-sided signed-rank test of `a > b` over `n` pairs.
 *
 * # Safety
 * `a` and `b` must hold `n` doubles; `out` must be valid.
 */
enum BorexStatus borex_wilcoxon_one_sided(const double *a,
                                          const double *b,
                                          size_t n,
                                          struct BorexWilcoxon *out);

/**
 * Refines `prior` (NULL when `config.use_prior` is false) into `out_map`,
 * which must hold `frames * height * width` doubles. `out_calls` may be NULL.
 *
 * # Safety
 * Pointer arguments must be valid for the sizes implied by `dims` and `channels`.
 */
enum BorexStatus borex_refine(BorexClassifyFn classify,
                              void *user,
                              const double *image_data,
                              struct BorexDims dims,
                              size_t channels,
                              const double *prior,
                              const char *target,
                              const struct BorexRefineConfig *config,
                              const struct BorexKernelParams *kernel,
                              double fill,
                              double *out_map,
                              size_t *out_calls);

/**
 * Mean insertion score of `map`.
 *
 * # Safety
 * Pointer arguments must be valid for the sizes implied by `dims` and `channels`.
 */
enum BorexStatus borex_insertion(BorexClassifyFn classify,
                                 void *user,
                                 const double *image_data,
                                 struct BorexDims dims,
                                 size_t channels,
                                 const double *map,
                                 const char *target,
                                 size_t steps,
                                 double fill,
                                 double *out);

/**
 * Mean deletion score of `map`.
 *
 * # Safety
 * Pointer arguments must be valid for the sizes implied by `dims` and `channels`.
 */
enum BorexStatus borex_deletion(BorexClassifyFn classify,
                                void *user,
                                const double *image_data,
                                struct BorexDims dims,
                                size_t channels,
                                const double *map,
                                const char *target,
                                size_t steps,
                                double fill,
                                double *out);

/**
 * Mean F-measure of `map` against `region` (one byte per cell, non-zero = inside).
 *
 * # Safety
 * `map` and `region` must hold `frames * height * width` elements.
 */
enum BorexStatus borex_f_measure(const double *map,
                                 const uint8_t *region,
                                 struct BorexDims dims,
                                 size_t steps,
                                 double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* BOREX_H */
