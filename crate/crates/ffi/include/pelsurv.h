#ifndef PELSURV_H
#define PELSURV_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum PelStatus {
  PEL_STATUS_OK = 0,
  PEL_STATUS_USAGE_ERROR = 1,
  PEL_STATUS_DATA_ERROR = 2,
  PEL_STATUS_ESTIMATION_ERROR = 3,
  PEL_STATUS_NULL_POINTER = 4,
  PEL_STATUS_INVALID_STRING = 5,
  PEL_STATUS_PANIC = 6,
} PelStatus;

/**
 * A fitted model with its point estimates.
 */
typedef struct PelFit PelFit;

/**
 * A category model.
 */
typedef struct PelModel PelModel;

/**
 * A parsed stratified sample.
 */
typedef struct PelSample PelSample;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or null. The pointer is
 * valid until the next call into this library on the same thread.
 */
const char *pel_last_error_message(void);

/**
 * # Safety
 * `s` must be null or a string returned by this library, not yet freed.
 */
void pel_string_free(char *s);

/**
 * Parses a `stratum,weight,z,y` CSV document against stratum metadata JSON.
 *
 * # Safety
 * `csv` and `meta_json` must be nul-terminated strings; `out` must be writable.
 */
enum PelStatus pel_sample_from_csv(const char *csv, const char *meta_json, struct PelSample **out);

/**
 * # Safety
 * `sample` must be null or a handle from this library, not yet freed.
 */
void pel_sample_free(struct PelSample *sample);

/**
 * Number of units, or 0 for a null handle.
 *
 * # Safety
 * `sample` must be null or a live handle.
 */
size_t pel_sample_len(const struct PelSample *sample);

/**
 * # Safety
 * `sample` must be null or a live handle.
 */
size_t pel_sample_respondents(const struct PelSample *sample);

/**
 * Proportional odds with fixed cutpoints `1..categories-1`.
 *
 * # Safety
 * `out` must be writable.
 */
enum PelStatus pel_model_standard(size_t categories, struct PelModel **out);

/**
 * Builds a model from its JSON description for `categories` categories.
 *
 * # Safety
 * `json` must be a nul-terminated string; `out` must be writable.
 */
enum PelStatus pel_model_from_json(const char *json, size_t categories, struct PelModel **out);

/**
 * # Safety
 * `model` must be null or a live handle.
 */
void pel_model_free(struct PelModel *model);

/**
 * Number of model parameters, or 0 for a null handle.
 *
 * # Safety
 * `model` must be null or a live handle.
 */
size_t pel_model_param_dim(const struct PelModel *model);

/**
 * Fits the model and computes the point estimates.
 *
 * # Safety
 * `sample` and `model` must be live handles; `out` must be writable.
 */
enum PelStatus pel_estimate(const struct PelSample *sample,
                            const struct PelModel *model,
                            struct PelFit **out);

/**
 * # Safety
 * `fit` must be null or a live handle.
 */
void pel_fit_free(struct PelFit *fit);

/**
 * Copies up to `len` fitted parameters into `values`; `written` receives the
 * full parameter count.
 *
 * # Safety
 * `fit` must be a live handle; `values` must hold `len` doubles; `written`
 * must be writable.
 */
enum PelStatus pel_fit_params(const struct PelFit *fit,
                              double *values,
                              size_t len,
                              size_t *written);

/**
 * The estimated overall mean.
 *
 * # Safety
 * `fit` must be a live handle; `mean` must be writable.
 */
enum PelStatus pel_fit_mean(const struct PelFit *fit, double *mean);

/**
 * The estimate report as JSON.
 *
 * # Safety
 * `fit` must be a live handle; `out` must be writable. Free the result with
 * [`pel_string_free`].
 */
enum PelStatus pel_fit_report_json(const struct PelFit *fit, char **out);

/**
 * Bootstrap variances and intervals as JSON. `methods` is null or a
 * comma-separated list of imputation methods to include.
 *
 * # Safety
 * `sample` and `model` must be live handles; `methods` null or a
 * nul-terminated string; `out` writable.
 */
enum PelStatus pel_bootstrap_json(const struct PelSample *sample,
                                  const struct PelModel *model,
                                  size_t replicates,
                                  uint64_t seed,
                                  const char *methods,
                                  char **out);

/**
 * Imputes missing values and returns the filled CSV with an `imputed` column.
 * `model` may be null for the simple methods.
 *
 * # Safety
 * `sample` must be a live handle; `model` null or live; `method` a
 * nul-terminated string; `out` writable.
 */
enum PelStatus pel_impute_csv(const struct PelSample *sample,
                              const struct PelModel *model,
                              const char *method,
                              uint64_t seed,
                              char **out);

/**
 * `P(δ = 1 | Z = j) = logistic(-0.1 + γ j)` for 1-based `j`.
 */
double pel_response_probability(double gamma, size_t j);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PELSURV_H */
