#ifndef SECGAME_H
#define SECGAME_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every fallible call.
 */
typedef enum SecgameStatus {
  SECGAME_STATUS_OK = 0,
  SECGAME_STATUS_NULL_POINTER = 1,
  SECGAME_STATUS_INVALID_ARGUMENT = 2,
  SECGAME_STATUS_BUFFER_TOO_SMALL = 3,
  SECGAME_STATUS_NOT_CONVERGED = 4,
  SECGAME_STATUS_NUMERICAL = 5,
  SECGAME_STATUS_PANIC = 6,
} SecgameStatus;

/**
 * The outcome of a solve.
 */
typedef struct SecgameReport SecgameReport;

/**
 * A validated scenario: model, starting point and solver settings.
 */
typedef struct SecgameScenario SecgameScenario;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the most recent failure on this thread, or NULL. The pointer
 * stays valid until the next failing call on the same thread.
 */
const char *secgame_last_error_message(void);

/**
 * Parse a scenario from a NUL-terminated JSON document.
 *
 * # Safety
 * `json` must be NULL or a valid NUL-terminated string; `out` must be NULL
 * or point to writable storage for one handle.
 */
enum SecgameStatus secgame_scenario_from_json(const char *json, struct SecgameScenario **out);

/**
 * Load a built-in scenario by name (`exp1` or `exp5`).
 *
 * # Safety
 * `name` must be NULL or a valid NUL-terminated string; `out` must be NULL
 * or point to writable storage for one handle.
 */
enum SecgameStatus secgame_scenario_builtin(const char *name, struct SecgameScenario **out);

/**
 * Release a scenario. NULL is ignored.
 *
 * # Safety
 * `scenario` must be NULL or a handle from this library not yet freed.
 */
void secgame_scenario_free(struct SecgameScenario *scenario);

/**
 * Retailer count `m`, market count `n` and decision-vector length
 * `m*n + 2m`. Any output pointer may be NULL.
 *
 * # Safety
 * `scenario` must be NULL or a live handle; non-NULL outputs must be writable.
 */
enum SecgameStatus secgame_scenario_dims(const struct SecgameScenario *scenario,
                                         size_t *m,
                                         size_t *n,
                                         size_t *dim);

/**
 * Copy the scenario's starting point (quantities row-major, then levels,
 * then multipliers) into `buf`.
 *
 * # Safety
 * `scenario` must be NULL or a live handle; `buf` must be NULL or hold `len`
 * writable doubles.
 */
enum SecgameStatus secgame_scenario_initial(const struct SecgameScenario *scenario,
                                            double *buf,
                                            size_t len);

/**
 * Evaluate the variational-inequality operator at `x` into `out`. Both
 * buffers have the decision-vector length.
 *
 * # Safety
 * `scenario` must be NULL or a live handle; `x` must hold `len` readable
 * doubles and `out` `len` writable doubles (either may be NULL).
 */
enum SecgameStatus secgame_scenario_operator(const struct SecgameScenario *scenario,
                                             const double *x,
                                             size_t len,
                                             double *out);

/**
 * Natural residual `|X - P(X - F(X))|_inf` at `x`.
 *
 * # Safety
 * `scenario` must be NULL or a live handle; `x` must hold `len` readable
 * doubles; `out` must be NULL or writable.
 */
enum SecgameStatus secgame_scenario_residual(const struct SecgameScenario *scenario,
                                             const double *x,
                                             size_t len,
                                             double *out);

/**
 * Expected utility of zero-based `retailer` at `x`.
 *
 * # Safety
 * `scenario` must be NULL or a live handle; `x` must hold `len` readable
 * doubles; `out` must be NULL or writable.
 */
enum SecgameStatus secgame_scenario_utility(const struct SecgameScenario *scenario,
                                            size_t retailer,
                                            const double *x,
                                            size_t len,
                                            double *out);

/**
 * Grid-search every retailer's unilateral deviations from `x` with
 * `density` points per axis. Writes the largest utility gain and whether it
 * is within the default tolerance.
 *
 * # Safety
 * `scenario` must be NULL or a live handle; `x` must hold `len` readable
 * doubles; outputs must be NULL or writable.
 */
enum SecgameStatus secgame_scenario_verify(const struct SecgameScenario *scenario,
                                           const double *x,
                                           size_t len,
                                           size_t density,
                                           double *max_improvement,
                                           bool *certified);

/**
 * Solve with the projection-contraction method. A report is produced even
 * when the status is `NotConverged`; the caller frees it either way.
 *
 * # Safety
 * `scenario` must be NULL or a live handle; `out` must be NULL or point to
 * writable storage for one handle.
 */
enum SecgameStatus secgame_scenario_solve(const struct SecgameScenario *scenario,
                                          struct SecgameReport **out);

/**
 * Solve by alternating best responses; otherwise as
 * [`secgame_scenario_solve`].
 *
 * # Safety
 * Same contract as [`secgame_scenario_solve`].
 */
enum SecgameStatus secgame_scenario_best_response(const struct SecgameScenario *scenario,
                                                  struct SecgameReport **out);

/**
 * Release a report. NULL is ignored.
 *
 * # Safety
 * `report` must be NULL or a handle from this library not yet freed.
 */
void secgame_report_free(struct SecgameReport *report);

/**
 * Whether the solve met its tolerance. False for NULL.
 *
 * # Safety
 * `report` must be NULL or a live handle.
 */
bool secgame_report_converged(const struct SecgameReport *report);

/**
 * Iterations (sweeps for best response). Zero for NULL.
 *
 * # Safety
 * `report` must be NULL or a live handle.
 */
size_t secgame_report_iterations(const struct SecgameReport *report);

/**
 * Final natural residual. NaN for NULL.
 *
 * # Safety
 * `report` must be NULL or a live handle.
 */
double secgame_report_residual(const struct SecgameReport *report);

/**
 * Copy the solution vector into `buf`.
 *
 * # Safety
 * `report` must be NULL or a live handle; `buf` must be NULL or hold `len`
 * writable doubles.
 */
enum SecgameStatus secgame_report_solution(const struct SecgameReport *report,
                                           double *buf,
                                           size_t len);

/**
 * Copy each retailer's expected utility at the solution into `buf`.
 *
 * # Safety
 * `report` must be NULL or a live handle; `buf` must be NULL or hold `len`
 * writable doubles.
 */
enum SecgameStatus secgame_report_utilities(const struct SecgameReport *report,
                                            double *buf,
                                            size_t len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SECGAME_H */
