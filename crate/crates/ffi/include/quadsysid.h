#ifndef QUADSYSID_H
#define QUADSYSID_H

/* Generated by cbindgen from src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum QsidStatus {
  QSID_STATUS_OK = 0,
  QSID_STATUS_NULL_POINTER = 1,
  QSID_STATUS_INVALID_ARGUMENT = 2,
  QSID_STATUS_INVALID_UTF8 = 3,
  QSID_STATUS_CONFIG = 4,
  QSID_STATUS_INGESTION = 5,
  QSID_STATUS_MOTOR = 6,
  QSID_STATUS_INERTIA = 7,
  QSID_STATUS_VALIDATION = 8,
  QSID_STATUS_SERIES_UNAVAILABLE = 9,
  QSID_STATUS_PANIC = 10,
} QsidStatus;

/**
 * Opaque pipeline result.
 */
typedef struct QsidResult QsidResult;

/**
 * Identified motor model in the lumped form; per-motor fits report the
 * mean curve.
 */
typedef struct QsidMotorSummary {
  double time_constant_s;
  double k[3];
  double fit_rmse_m_s2;
  bool boundary_hit;
} QsidMotorSummary;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failure on this thread, or null. The pointer stays
 * valid until the next failing call on this thread.
 */
const char *qsid_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *qsid_version(void);

/**
 * Per-sample decay factor of the first-order motor lag.
 *
 * # Safety
 * `out` must be null or point to writable memory for one `double`.
 */
enum QsidStatus qsid_ema_alpha(double time_constant_s, double dt_s, double *out);

/**
 * Motor speeds under a sequence of commands.
 *
 * `setpoints` and `out` hold `n` rows of 4 values, row-major. `initial`
 * holds 4 values, or is null to start from rest. Row `k + 1` of the output
 * is the update of row `k` under command `k`.
 *
 * # Safety
 * `setpoints` and `out` must be valid for `4 * n` doubles; `initial` must be
 * null or valid for 4 doubles.
 */
enum QsidStatus qsid_simulate_motor_speeds(const double *setpoints,
                                           size_t n,
                                           double time_constant_s,
                                           double dt_s,
                                           const double *initial,
                                           double *out);

/**
 * Yaw inertia from the roll and pitch inertias and the scaling constant.
 *
 * # Safety
 * `out` must be null or point to writable memory for one `double`.
 */
enum QsidStatus qsid_predict_izz(double ixx, double iyy, double c_xy_z, double *out);

/**
 * Run the full pipeline on log files.
 *
 * `config_path` names a TOML or JSON config, or is null for defaults. On
 * success `*out` receives a handle to release with [`qsid_result_free`].
 *
 * # Safety
 * `log_paths` must be valid for `n_logs` NUL-terminated strings; `out` must
 * be valid for one pointer write.
 */
enum QsidStatus qsid_identify_files(const char *config_path,
                                    const char *const *log_paths,
                                    size_t n_logs,
                                    struct QsidResult **out);

/**
 * Report JSON owned by the result; valid until the result is freed.
 * Null when `result` is null.
 *
 * # Safety
 * `result` must be null or a live handle from [`qsid_identify_files`].
 */
const char *qsid_result_report_json(const struct QsidResult *result);

/**
 * Headline motor model numbers.
 *
 * # Safety
 * `result` must be null or a live handle; `out` must be null or writable.
 */
enum QsidStatus qsid_result_motor(const struct QsidResult *result, struct QsidMotorSummary *out);

/**
 * CSV for one plot series: `sweep`, `thrust_fit`, `angular_fit` or
 * `hover_hist`. Release `*out` with [`qsid_string_free`].
 *
 * # Safety
 * `result` must be a live handle, `which` a NUL-terminated string and `out`
 * valid for one pointer write.
 */
enum QsidStatus qsid_result_plot_csv(const struct QsidResult *result,
                                     const char *which,
                                     char **out);

/**
 * Release a result handle. Null is ignored.
 *
 * # Safety
 * `result` must be null or a handle not yet freed.
 */
void qsid_result_free(struct QsidResult *result);

/**
 * Release a string returned by this library. Null is ignored.
 *
 * # Safety
 * `s` must be null or a string from this library not yet freed.
 */
void qsid_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* QUADSYSID_H */
