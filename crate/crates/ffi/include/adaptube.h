#ifndef ADAPTUBE_H
#define ADAPTUBE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum {
  ADAPTUBE_STATUS_OK = 0,
  ADAPTUBE_STATUS_NULL_POINTER = 1,
  ADAPTUBE_STATUS_INVALID_ARGUMENT = 2,
  ADAPTUBE_STATUS_INVALID_CONFIG = 3,
  ADAPTUBE_STATUS_DIMENSION_MISMATCH = 4,
  ADAPTUBE_STATUS_STATE_OUTSIDE_X = 5,
  ADAPTUBE_STATUS_INITIALLY_INFEASIBLE = 6,
  ADAPTUBE_STATUS_BROKEN_INVARIANT = 7,
  ADAPTUBE_STATUS_FAILED = 8,
  ADAPTUBE_STATUS_PANIC = 9,
} AdaptubeStatus;

/**
 * Receding-horizon controller for one closed loop.
 */
typedef struct AdaptubeController AdaptubeController;

/**
 * Completed or truncated closed-loop run.
 */
typedef struct AdaptubeTrace AdaptubeTrace;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the last error message of this thread into `buf` (NUL-terminated,
 * truncated to `len`). Returns the full message length in bytes.
 *
 * # Safety
 * `buf` must be null or point to `len` writable bytes.
 */
size_t adaptube_last_error_message(char *buf, size_t len);

/**
 * Library version as a static NUL-terminated string.
 */
const char *adaptube_version(void);

/**
 * Builds a controller from a JSON configuration and a mode name
 * (`adaptive`, `reach` or `robust`).
 *
 * # Safety
 * `config_json` and `mode` must be NUL-terminated strings; `out` must be
 * writable.
 */
AdaptubeStatus adaptube_controller_new(const char *config_json,
                                       const char *mode,
                                       AdaptubeController **out);

/**
 * State and input dimensions.
 *
 * # Safety
 * `ctrl` must come from [`adaptube_controller_new`]; `n` and `m` must be
 * writable.
 */
AdaptubeStatus adaptube_controller_dims(const AdaptubeController *ctrl, size_t *n, size_t *m);

/**
 * One controller step at the measured state `x` (`n` entries). Writes the
 * input to `u` (`m` entries) and the optimal cost to `cost` when non-null.
 *
 * # Safety
 * `ctrl` must come from [`adaptube_controller_new`]; `x` readable for `n`
 * doubles, `u` writable for `m` doubles.
 */
AdaptubeStatus adaptube_controller_step(AdaptubeController *ctrl,
                                        const double *x,
                                        size_t n,
                                        double *u,
                                        size_t m,
                                        double *cost);

/**
 * # Safety
 * `ctrl` must be null or come from [`adaptube_controller_new`], and not be
 * used afterwards.
 */
void adaptube_controller_free(AdaptubeController *ctrl);

/**
 * Runs the configured closed loop in one mode. On `InitiallyInfeasible`,
 * `BrokenInvariant` and controller failures the truncated trace is still
 * returned through `out`.
 *
 * # Safety
 * As [`adaptube_controller_new`].
 */
AdaptubeStatus adaptube_run(const char *config_json, const char *mode, AdaptubeTrace **out);

/**
 * Number of logged steps.
 *
 * # Safety
 * `trace` must be null or come from [`adaptube_run`].
 */
size_t adaptube_trace_len(const AdaptubeTrace *trace);

/**
 * Cumulative stage cost over the logged steps.
 *
 * # Safety
 * `trace` must be null or come from [`adaptube_run`].
 */
double adaptube_trace_total_cost(const AdaptubeTrace *trace);

/**
 * Copies state `x_t` (`t` up to the trace length inclusive) into `out`.
 *
 * # Safety
 * `trace` must come from [`adaptube_run`]; `out` writable for `n` doubles.
 */
AdaptubeStatus adaptube_trace_state(const AdaptubeTrace *trace, size_t t, double *out, size_t n);

/**
 * Copies input `u_t` into `out`.
 *
 * # Safety
 * `trace` must come from [`adaptube_run`]; `out` writable for `m` doubles.
 */
AdaptubeStatus adaptube_trace_input(const AdaptubeTrace *trace, size_t t, double *out, size_t m);

/**
 * # Safety
 * `trace` must be null or come from [`adaptube_run`], and not be used
 * afterwards.
 */
void adaptube_trace_free(AdaptubeTrace *trace);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ADAPTUBE_H */
