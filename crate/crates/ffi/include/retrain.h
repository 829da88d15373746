#ifndef RETRAIN_H
#define RETRAIN_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every exported function.
 */
typedef enum RetrainStatus {
  RETRAIN_STATUS_OK = 0,
  /**
   * A required pointer argument was null.
   */
  RETRAIN_STATUS_NULL_ARGUMENT = 1,
  /**
   * Arguments were well-formed but rejected by validation.
   */
  RETRAIN_STATUS_INVALID_ARGUMENT = 2,
  /**
   * The value is undefined for this input (zero benchmark scale).
   */
  RETRAIN_STATUS_EXCLUDED = 3,
  /**
   * The run configuration is invalid.
   */
  RETRAIN_STATUS_CONFIG = 4,
  RETRAIN_STATUS_IO = 5,
  /**
   * Any other pipeline failure, including a run where every scenario failed.
   */
  RETRAIN_STATUS_PIPELINE = 6,
  RETRAIN_STATUS_PANIC = 7,
} RetrainStatus;

/**
 * Sampling frequency of a panel.
 */
typedef enum RetrainFrequency {
  RETRAIN_FREQUENCY_DAILY = 0,
  RETRAIN_FREQUENCY_WEEKLY = 1,
} RetrainFrequency;

/**
 * Opaque loaded panel. Release with [`retrain_panel_free`].
 */
typedef struct RetrainPanel RetrainPanel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the most recent failure on this thread, or null if none.
 * The pointer stays valid until the next failing call on the same thread.
 */
const char *retrain_last_error(void);

/**
 * Root mean squared scaled error of `horizon` forecasts against the
 * seasonal-naive in-sample scale with period `season`.
 * Returns `RETRAIN_STATUS_EXCLUDED` when the scale is zero.
 *
 * # Safety
 * `actuals` and `forecasts` must hold `horizon` values, `insample` must hold
 * `insample_len` values, and `out_value` must be writable.
 */
enum RetrainStatus retrain_rmsse(const double *actuals,
                                 const double *forecasts,
                                 size_t horizon,
                                 const double *insample,
                                 size_t insample_len,
                                 size_t season,
                                 double *out_value);

/**
 * Scaled quantile loss of `horizon` quantile forecasts at `level`.
 * Returns `RETRAIN_STATUS_EXCLUDED` when the scale is zero.
 *
 * # Safety
 * Same layout requirements as [`retrain_rmsse`].
 */
enum RetrainStatus retrain_sql(const double *actuals,
                               const double *quantiles,
                               size_t horizon,
                               double level,
                               const double *insample,
                               size_t insample_len,
                               size_t season,
                               double *out_value);

/**
 * Origin and model-fit counts of a rolling-origin schedule.
 *
 * # Safety
 * `out_origins` and `out_fits` must be writable.
 */
enum RetrainStatus retrain_schedule_counts(size_t test_len,
                                           size_t horizon,
                                           size_t step,
                                           size_t retrain,
                                           size_t *out_origins,
                                           size_t *out_fits);

/**
 * Monetary cost of `ct_seconds` at `rate_per_hour`, scaled from
 * `dataset_series` to `target_series`.
 *
 * # Safety
 * `out_cost` must be writable.
 */
enum RetrainStatus retrain_estimate_cost(double ct_seconds,
                                         double rate_per_hour,
                                         size_t dataset_series,
                                         double target_series,
                                         double *out_cost);

/**
 * Friedman test over a row-major `blocks x treatments` matrix where
 * lower values are better. `out_mean_ranks` receives `treatments` values.
 *
 * # Safety
 * `values` must hold `blocks * treatments` values and `out_mean_ranks`
 * must have room for `treatments` values.
 */
enum RetrainStatus retrain_friedman(const double *values,
                                    size_t blocks,
                                    size_t treatments,
                                    double *out_statistic,
                                    double *out_p_value,
                                    double *out_mean_ranks);

/**
 * Nemenyi critical difference for `treatments` compared over `blocks`.
 * `alpha` must be 0.05 or 0.10.
 *
 * # Safety
 * `out_cd` must be writable.
 */
enum RetrainStatus retrain_nemenyi_cd(size_t treatments,
                                      size_t blocks,
                                      double alpha,
                                      double *out_cd);

/**
 * Loads a long-format CSV panel with columns `unique_id`, `ds`, `y`.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out_panel` writable. On
 * success `*out_panel` owns a handle to release with [`retrain_panel_free`].
 */
enum RetrainStatus retrain_panel_load_csv(const char *path,
                                          enum RetrainFrequency frequency,
                                          struct RetrainPanel **out_panel);

/**
 * Number of series in the panel.
 *
 * # Safety
 * `panel` must come from [`retrain_panel_load_csv`] and not yet be freed.
 */
enum RetrainStatus retrain_panel_series_count(const struct RetrainPanel *panel, size_t *out_count);

/**
 * Length of the shortest series in the panel.
 *
 * # Safety
 * Same as [`retrain_panel_series_count`].
 */
enum RetrainStatus retrain_panel_min_length(const struct RetrainPanel *panel, size_t *out_len);

/**
 * Releases a panel handle. Null is a no-op.
 *
 * # Safety
 * `panel` must come from [`retrain_panel_load_csv`] and not be used afterwards.
 */
void retrain_panel_free(struct RetrainPanel *panel);

/**
 * Runs the TOML configuration at `config_path`, writing artifacts to
 * `out_dir` when non-null and to the configured directory otherwise.
 * `out_exit_code` receives the command-line exit code (0, 1 or 2).
 *
 * # Safety
 * `config_path` must be a NUL-terminated string, `out_dir` null or
 * NUL-terminated, and `out_exit_code` writable.
 */
enum RetrainStatus retrain_run_config(const char *config_path,
                                      const char *out_dir,
                                      int32_t *out_exit_code);

/**
 * Validates a TOML configuration without running it.
 *
 * # Safety
 * `config_path` must be a NUL-terminated string.
 */
enum RetrainStatus retrain_check_config(const char *config_path);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* RETRAIN_H */
