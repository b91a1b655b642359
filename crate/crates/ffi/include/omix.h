#ifndef OMIX_H
#define OMIX_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

enum OmixStatus
#if defined(__cplusplus) || __STDC_VERSION__ >= 202311L
  : int32_t
#endif // defined(__cplusplus) || __STDC_VERSION__ >= 202311L
 {
  OMIX_STATUS_OK = 0,
  /**
   * A required pointer argument was null.
   */
  OMIX_STATUS_NULL = 1,
  /**
   * Invalid arguments or data.
   */
  OMIX_STATUS_USAGE = 2,
  /**
   * A model text or file failed to parse.
   */
  OMIX_STATUS_FORMAT = 3,
  /**
   * Numerical failure or aborted estimation.
   */
  OMIX_STATUS_NUMERIC = 4,
  OMIX_STATUS_IO = 5,
  /**
   * A Rust panic was caught at the boundary.
   */
  OMIX_STATUS_PANIC = 6,
};
#ifndef __cplusplus
#if __STDC_VERSION__ >= 202311L
typedef enum OmixStatus OmixStatus;
#else
typedef int32_t OmixStatus;
#endif // __STDC_VERSION__ >= 202311L
#endif // __cplusplus

enum OmixFamily
#if defined(__cplusplus) || __STDC_VERSION__ >= 202311L
  : int32_t
#endif // defined(__cplusplus) || __STDC_VERSION__ >= 202311L
 {
  OMIX_FAMILY_GAUSSIAN = 0,
  OMIX_FAMILY_MST = 1,
};
#ifndef __cplusplus
#if __STDC_VERSION__ >= 202311L
typedef enum OmixFamily OmixFamily;
#else
typedef int32_t OmixFamily;
#endif // __STDC_VERSION__ >= 202311L
#endif // __cplusplus

/**
 * Opaque online estimator.
 */
typedef struct OmixFitter OmixFitter;

/**
 * Opaque fitted mixture.
 */
typedef struct OmixModel OmixModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread; empty after a success.
 * The pointer stays valid until the next call into this library on the same
 * thread.
 */
const char *omix_last_error_message(void);

/**
 * Parses a model from its text form.
 */
OmixStatus omix_model_from_text(const char *text, struct OmixModel **out);

/**
 * Loads a model file.
 */
OmixStatus omix_model_load(const char *path, struct OmixModel **out);

/**
 * Releases a model. Null is ignored.
 */
void omix_model_free(struct OmixModel *model);

/**
 * Family, component count and feature dimension.
 */
OmixStatus omix_model_dims(const struct OmixModel *model, OmixFamily *family, size_t *k, size_t *m);

/**
 * Number of free parameters.
 */
OmixStatus omix_model_param_count(const struct OmixModel *model, size_t *out);

/**
 * Log-density of one sample of length `m`.
 */
OmixStatus omix_model_logpdf(const struct OmixModel *model, const double *y, size_t m, double *out);

/**
 * Proximity score of one sample (low means anomalous).
 */
OmixStatus omix_model_proximity(const struct OmixModel *model,
                                const double *y,
                                size_t m,
                                double *out);

/**
 * Text form of a model; release it with [`omix_string_free`].
 */
OmixStatus omix_model_to_text(const struct OmixModel *model, char **out);

/**
 * Releases a string returned by this library. Null is ignored.
 */
void omix_string_free(char *s);

/**
 * Threshold `tau` such that a fraction `alpha` of the `n` held-out normal
 * rows (row-major, `m` columns) score below it.
 */
OmixStatus omix_calibrate_threshold(const struct OmixModel *model,
                                    const double *data,
                                    size_t n,
                                    size_t m,
                                    double alpha,
                                    double *tau);

/**
 * Starts an online estimator from `n` buffered rows, which are also
 * absorbed as the first mini-batches of size `batch`. `family` takes an
 * [`OmixFamily`] value.
 */
OmixStatus omix_fitter_new(int32_t family,
                           size_t k,
                           const double *buffer,
                           size_t n,
                           size_t m,
                           size_t batch,
                           double rho,
                           uint64_t seed,
                           struct OmixFitter **out);

/**
 * One online EM step on `n` rows. `batch_loglik` (optional) receives the
 * mean log-likelihood of the batch under the model before the update.
 */
OmixStatus omix_fitter_step(struct OmixFitter *fitter,
                            const double *data,
                            size_t n,
                            size_t m,
                            double *batch_loglik);

/**
 * Copy of the fitter's current model.
 */
OmixStatus omix_fitter_model(const struct OmixFitter *fitter, struct OmixModel **out);

/**
 * Releases a fitter. Null is ignored.
 */
void omix_fitter_free(struct OmixFitter *fitter);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* OMIX_H */
