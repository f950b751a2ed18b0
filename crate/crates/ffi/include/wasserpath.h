#ifndef WASSERPATH_H
#define WASSERPATH_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Experiment selector for [`wp_run_experiment`].
typedef enum WpExperiment {
  WP_EXPERIMENT_STRONG_RATE = 0,
  WP_EXPERIMENT_MARGINAL_RATE = 1,
  WP_EXPERIMENT_PATHWISE_RATE = 2,
  WP_EXPERIMENT_LOOKBACK_BIAS = 3,
  WP_EXPERIMENT_VERIFY = 4,
  WP_EXPERIMENT_OT_CHECK = 5,
} WpExperiment;

typedef enum WpStatus {
  WP_STATUS_OK = 0,
  WP_STATUS_INVALID_ARGUMENT = 1,
  WP_STATUS_UNKNOWN_MODEL = 2,
  WP_STATUS_DOMAIN_EXIT = 3,
  WP_STATUS_NUMERICAL = 4,
  WP_STATUS_SIZE_OVERFLOW = 5,
  WP_STATUS_CONFIG = 6,
  WP_STATUS_IO = 7,
  WP_STATUS_NULL_POINTER = 8,
  WP_STATUS_PANIC = 9,
  // The caller's buffer is shorter than the value; the needed length was written.
  WP_STATUS_BUFFER_TOO_SMALL = 10,
} WpStatus;

// Opaque parsed experiment configuration.
typedef struct WpConfig WpConfig;

// Opaque diffusion model.
typedef struct WpModel WpModel;

// Opaque experiment result: `report.json` and `rows.csv` contents.
typedef struct WpReport WpReport;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version, e.g. `v0.1.0`. Static storage.
const char *wp_version(void);

// Message of the last failed call on this thread (empty after a success).
// Valid until the next call into the library on this thread.
const char *wp_last_error_message(void);

// Builds a builtin model from `n` parameter name/value pairs.
//
// # Safety
// `name` must be a NUL-terminated string; `keys` and `values` must hold `n`
// entries (may be null when `n == 0`); `out` must be writable.
enum WpStatus wp_model_new(const char *name,
                           const char *const *keys,
                           const double *values,
                           size_t n,
                           struct WpModel **out);

// # Safety
// `model` must come from [`wp_model_new`] and not be used afterwards. Null is ignored.
void wp_model_free(struct WpModel *model);

// Euler values at `t_k = k·T/N`, `k = 0..=N`, for Brownian path `path_index`
// of `seed`. `out` must hold at least `steps + 1` doubles.
//
// # Safety
// `model` must be a live handle and `out` writable for `out_len` doubles.
enum WpStatus wp_euler_path(const struct WpModel *model,
                            uint64_t seed,
                            uint64_t path_index,
                            double horizon,
                            size_t steps,
                            double *out,
                            size_t out_len);

// Exact diffusion values on the same grid and Brownian path as
// [`wp_euler_path`]; fails for models without a closed-form law.
//
// # Safety
// As for [`wp_euler_path`].
enum WpStatus wp_exact_path(const struct WpModel *model,
                            uint64_t seed,
                            uint64_t path_index,
                            double horizon,
                            size_t steps,
                            double *out,
                            size_t out_len);

// `W_p` between the empirical measures of two samples of equal size.
//
// # Safety
// `a` and `b` must hold `na` and `nb` doubles; `out` must be writable.
enum WpStatus wp_wasserstein_1d(const double *a,
                                size_t na,
                                const double *b,
                                size_t nb,
                                double p,
                                double *out);

// Parses configuration text (the same `key = value` format as the CLI).
//
// # Safety
// `text` must be NUL-terminated; `out` must be writable.
enum WpStatus wp_config_parse(const char *text, struct WpConfig **out);

// # Safety
// `config` must come from [`wp_config_parse`]. Null is ignored.
void wp_config_free(struct WpConfig *config);

// Runs an experiment with `workers` threads (0: all cores). Nothing is
// written to disk.
//
// # Safety
// `config` must be a live handle; `out` must be writable.
enum WpStatus wp_run_experiment(const struct WpConfig *config,
                                enum WpExperiment kind,
                                size_t workers,
                                struct WpReport **out);

// Copies the report JSON (NUL-terminated) into `buf`. `needed` receives the
// size including the NUL; pass a null `buf` to query it.
//
// # Safety
// `report` must be live; `buf` writable for `buf_len` bytes; `needed` null or writable.
enum WpStatus wp_report_json(const struct WpReport *report,
                             char *buf,
                             size_t buf_len,
                             size_t *needed);

// Copies the per-row CSV; same buffer protocol as [`wp_report_json`].
//
// # Safety
// As for [`wp_report_json`].
enum WpStatus wp_report_rows_csv(const struct WpReport *report,
                                 char *buf,
                                 size_t buf_len,
                                 size_t *needed);

// 1 when every check passed (always 1 for rate sweeps), 0 otherwise or for null.
//
// # Safety
// `report` must be null or live.
int32_t wp_report_passed(const struct WpReport *report);

// # Safety
// `report` must come from [`wp_run_experiment`]. Null is ignored.
void wp_report_free(struct WpReport *report);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* WASSERPATH_H */
