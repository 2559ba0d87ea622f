/* C interface to the wiener-sampling solver and simulator. */

#ifndef WIENER_SAMPLING_H
#define WIENER_SAMPLING_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status code returned by every fallible function.
 */
typedef enum WsStatus {
  /**
   * Success.
   */
  WsStatus_Ok = 0,
  /**
   * A required pointer argument was null.
   */
  WsStatus_NullArgument = 1,
  /**
   * A string argument was not valid UTF-8.
   */
  WsStatus_InvalidUtf8 = 2,
  /**
   * A model or policy specification did not parse, or an argument was
   * out of range.
   */
  WsStatus_ParseError = 3,
  /**
   * The optimization failed to converge or the integrand was not
   * representable.
   */
  WsStatus_SolverError = 4,
  /**
   * The simulation aborted, for example on a non-finite state.
   */
  WsStatus_SimulationError = 5,
} WsStatus;

/**
 * Opaque handle to a parsed delay model.
 */
typedef struct WsModel WsModel;

/**
 * Optimal sampling policy for one delay model.
 */
typedef struct WsSolution {
  /**
   * Optimal renewal-reward ratio.
   */
  double gamma_star;
  /**
   * Dual level of the sampling-frequency constraint; 0 when slack.
   */
  double nu_star;
  /**
   * Sampling threshold `sqrt(3 (gamma_star + nu_star))`.
   */
  double tau_star;
  /**
   * Mean frame length under the optimal threshold.
   */
  double frame_length_star;
  /**
   * Long-run time-average mean squared estimation error.
   */
  double mse_opt;
  /**
   * Absolute root residual of the solved optimality condition.
   */
  double residual;
} WsSolution;

/**
 * Aggregate results of a batch of simulated replications.
 */
typedef struct WsSummary {
  /**
   * Frames simulated per replication.
   */
  uint64_t frames;
  /**
   * Number of replications.
   */
  uint64_t replications;
  /**
   * Mean over replications of the final time-average MSE.
   */
  double final_timeavg_mse_mean;
  /**
   * Standard error of that mean across replications.
   */
  double final_timeavg_mse_se;
  /**
   * Mean frame length over all replications.
   */
  double final_mean_length;
  /**
   * Frames whose integration step tripped the resolution warning.
   */
  uint64_t warning_frames;
} WsSummary;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Parses a delay model specification such as `"det:1"`, `"uniform:0,1"`,
 * or `"lognormal:0.8,1.2"` into a new handle written to `out`.
 *
 * # Safety
 * `spec` must point to a NUL-terminated string and `out` to a writable
 * `WsModel*` slot. The returned handle must be released with
 * [`ws_model_free`].
 */
enum WsStatus ws_model_parse(const char *spec, struct WsModel **out);

/**
 * Releases a handle returned by [`ws_model_parse`]. Passing null is a
 * no-op.
 *
 * # Safety
 * `model` must be null or a pointer previously returned by
 * [`ws_model_parse`] that has not been freed yet.
 */
void ws_model_free(struct WsModel *model);

/**
 * Solves for the optimal sampling policy under a mean sampling-frequency
 * budget of `f_max` samples per unit time; pass `INFINITY` or any value
 * `<= 0` for the unconstrained problem.
 *
 * # Safety
 * `model` must be a live handle from [`ws_model_parse`] and `out` must
 * point to writable memory for one [`WsSolution`].
 */
enum WsStatus ws_solve(const struct WsModel *model, double f_max, struct WsSolution *out);

/**
 * Simulates `replications` independent traces of `frames` frames under a
 * policy specification (`"online"`, `"optimal"`, `"zerowait"`, or
 * `"const:W"`) and writes the aggregate summary to `out`.
 *
 * The online policy runs with step-size exponent 1, queue scaling `v`,
 * and the frequency budget `f_max` (`INFINITY` or `<= 0` for none);
 * the other policies ignore `v`. Identical arguments always produce
 * identical results.
 *
 * # Safety
 * `model` must be a live handle from [`ws_model_parse`], `policy` a
 * NUL-terminated string, and `out` writable memory for one [`WsSummary`].
 */
enum WsStatus ws_simulate_summary(const struct WsModel *model,
                                  const char *policy,
                                  uint64_t frames,
                                  uint64_t replications,
                                  uint64_t seed,
                                  double f_max,
                                  double v,
                                  struct WsSummary *out);

/**
 * Copies the calling thread's most recent error message (NUL-terminated,
 * possibly truncated) into `buffer` and returns the full length in bytes
 * including the terminator. A null or zero-capacity buffer just reports
 * the required length; no error so far reports an empty string.
 *
 * # Safety
 * `buffer` must be null or point to at least `capacity` writable bytes.
 */
size_t ws_last_error(char *buffer, size_t capacity);

/**
 * Returns the library version as a static NUL-terminated string.
 */
const char *ws_version(void);

#ifdef __cplusplus
} // extern "C"
#endif // __cplusplus

#endif /* WIENER_SAMPLING_H */
