/* C interface for the adiaband experiment runner.
 * All functions are thread-safe; error messages are per-thread and
 * retrieved with adiaband_last_error(). */

#ifndef ADIABAND_H
#define ADIABAND_H

/* Generated with cbindgen:0.29.4 */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

// Status codes returned by every fallible function.
typedef enum AdiabandStatus {
  // Success.
  ADIABAND_STATUS_OK = 0,
  // A required pointer argument was null.
  ADIABAND_STATUS_NULL_ARGUMENT = 1,
  // A string argument was not valid UTF-8.
  ADIABAND_STATUS_INVALID_UTF8 = 2,
  // The configuration failed to parse or validate.
  ADIABAND_STATUS_CONFIG_ERROR = 3,
  // The computation failed (solver, model precondition, or I/O).
  ADIABAND_STATUS_RUNTIME_ERROR = 4,
  // The run completed but at least one check failed.
  ADIABAND_STATUS_ASSERTION_FAILURE = 5,
  // The provided buffer was too small.
  ADIABAND_STATUS_BUFFER_TOO_SMALL = 6,
  // An internal panic was caught at the boundary.
  ADIABAND_STATUS_PANIC = 7,
} AdiabandStatus;

// Opaque parsed run configuration.
typedef struct AdiabandConfig AdiabandConfig;

// Opaque completed run report.
typedef struct AdiabandReport AdiabandReport;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Copies the message of the most recent error on this thread into `buf`
// (NUL-terminated, truncated to `len`). Returns the full message length in
// bytes, excluding the terminator.
uintptr_t adiaband_last_error(char *buf, uintptr_t len);

// Parses and validates a JSON run configuration (schema v1). On success
// `*out` owns a new handle that must be released with
// `adiaband_config_free`.
enum AdiabandStatus adiaband_config_parse(const char *json, struct AdiabandConfig **out);

// Releases a configuration handle. Null is ignored.
void adiaband_config_free(struct AdiabandConfig *cfg);

// Writes the 16-hex-digit configuration hash into `buf` (needs >= 17 bytes).
enum AdiabandStatus adiaband_config_hash(const struct AdiabandConfig *cfg,
                                         char *buf,
                                         uintptr_t len);

// Runs the configured experiment, writing report.json and CSV tables into
// `out_dir`. On success (including failed checks) `*out` owns a report
// handle. Returns `AssertionFailure` when the run completed but a check
// failed.
enum AdiabandStatus adiaband_run(const struct AdiabandConfig *cfg,
                                 const char *out_dir,
                                 struct AdiabandReport **out);

// Loads a completed run directory into a report handle.
enum AdiabandStatus adiaband_report_load(const char *dir, struct AdiabandReport **out);

// Releases a report handle. Null is ignored.
void adiaband_report_free(struct AdiabandReport *report);

// 1 if every check in the report passed, 0 otherwise (or on null).
int adiaband_report_passed(const struct AdiabandReport *report);

// Serializes the report as JSON. The returned string must be released with
// `adiaband_string_free`; returns null on error.
char *adiaband_report_to_json(const struct AdiabandReport *report);

// Releases a string returned by this library. Null is ignored.
void adiaband_string_free(char *s);

// n-th eigenvalue curve of the half-line model -d^2/dt^2 + (t - sigma)^2
// with Robin condition u'(0) = gamma u(0) (pass INFINITY for Dirichlet),
// refined to the continuum limit. `n` is 1-based.
enum AdiabandStatus adiaband_degennes_mu(double gamma, double sigma, unsigned int n, double *out);

// Minimum of the n-th dispersion curve over sigma: location and value.
enum AdiabandStatus adiaband_degennes_dispersion_minimum(double gamma,
                                                         unsigned int n,
                                                         double *sigma_out,
                                                         double *mu_out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ADIABAND_H */
