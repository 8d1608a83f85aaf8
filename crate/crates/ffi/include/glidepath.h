#ifndef GLIDEPATH_H
#define GLIDEPATH_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every fallible call.
 */
typedef enum GpStatus {
  GP_STATUS_OK = 0,
  GP_STATUS_NULL_POINTER = 1,
  GP_STATUS_INVALID_ARGUMENT = 2,
  GP_STATUS_IO_ERROR = 3,
  GP_STATUS_PARSE_ERROR = 4,
  GP_STATUS_COMPUTATION_FAILED = 5,
  GP_STATUS_PANIC = 6,
} GpStatus;

/**
 * Jump-diffusion market parameters.
 */
typedef struct GpParams GpParams;

/**
 * Solved adaptive policy.
 */
typedef struct GpPolicy GpPolicy;

/**
 * Accumulation scenario.
 */
typedef struct GpScenario GpScenario;

/**
 * Terminal-wealth summary of a simulation.
 */
typedef struct GpStats {
  double mean;
  double std;
  double standard_error;
  size_t n_paths;
} GpStats;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or an empty string.
 * The pointer stays valid until the next call on the same thread.
 */
const char *gp_last_error_message(void);

/**
 * Parse parameters from a JSON object with keys
 * `mu, sigma, lambda, p_up, eta1, eta2, r, dt_months`.
 *
 * # Safety
 * `json` must be a NUL-terminated string; `out` must be writable.
 */
enum GpStatus gp_params_from_json(const char *json, struct GpParams **out);

/**
 * Read a parameter file written by `glidepath fit`.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum GpStatus gp_params_load(const char *path, struct GpParams **out);

/**
 * # Safety
 * `params` must come from a `gp_params_*` constructor or be null.
 */
void gp_params_free(struct GpParams *params);

/**
 * Scenario with the default schedule: `W0` at date 0, `c` at every later
 * rebalance date, annual rebalancing.
 *
 * # Safety
 * `out` must be writable.
 */
enum GpStatus gp_scenario_new(double horizon_years,
                              double initial_wealth,
                              double contribution,
                              struct GpScenario **out);

/**
 * Parse a scenario `{"T": .., "W0": .., "c": ..}`.
 *
 * # Safety
 * `json` must be a NUL-terminated string; `out` must be writable.
 */
enum GpStatus gp_scenario_from_json(const char *json, struct GpScenario **out);

/**
 * Number of rebalance dates, or 0 for a null handle.
 *
 * # Safety
 * `scenario` must be a live handle or null.
 */
size_t gp_scenario_periods(const struct GpScenario *scenario);

/**
 * # Safety
 * `scenario` must come from a `gp_scenario_*` constructor or be null.
 */
void gp_scenario_free(struct GpScenario *scenario);

/**
 * Mean and standard deviation of terminal wealth for a glide path of
 * `len` fractions.
 *
 * # Safety
 * Handles must be live; `glide` must hold `len` values; outputs writable.
 */
enum GpStatus gp_wealth_moments(const struct GpParams *params,
                                const struct GpScenario *scenario,
                                const double *glide,
                                size_t len,
                                double *mean_out,
                                double *std_out);

/**
 * Minimum-variance glide path with mean `target_mean`, written to
 * `glide_out` (`len` must equal the number of rebalance dates).
 *
 * # Safety
 * Handles must be live; `glide_out` must hold `len` writable values.
 */
enum GpStatus gp_optimize_glide(const struct GpParams *params,
                                const struct GpScenario *scenario,
                                double target_mean,
                                double *glide_out,
                                size_t len);

/**
 * Solve the adaptive policy for a fixed target `w_star` on the default grid.
 *
 * # Safety
 * Handles must be live; `out` must be writable.
 */
enum GpStatus gp_solve_policy(const struct GpParams *params,
                              const struct GpScenario *scenario,
                              double w_star,
                              struct GpPolicy **out);

/**
 * Calibrate `W*` so that the adaptive mean terminal wealth equals `goal_mean`.
 *
 * # Safety
 * Handles must be live; `w_star_out` and `out` must be writable.
 */
enum GpStatus gp_calibrate_target(const struct GpParams *params,
                                  const struct GpScenario *scenario,
                                  double goal_mean,
                                  size_t n_paths,
                                  uint64_t seed,
                                  double *w_star_out,
                                  struct GpPolicy **out);

/**
 * Equity fraction at rebalance date `t` for wealth held before that
 * date's contribution.
 *
 * # Safety
 * `policy` must be live; `out` must be writable.
 */
enum GpStatus gp_policy_lookup(const struct GpPolicy *policy, double wealth, size_t t, double *out);

/**
 * Target `W*` of a policy.
 *
 * # Safety
 * `policy` must be live; `out` must be writable.
 */
enum GpStatus gp_policy_target(const struct GpPolicy *policy, double *out);

/**
 * Optimal expected squared shortfall from the initial wealth.
 *
 * # Safety
 * `policy` must be live; `out` must be writable.
 */
enum GpStatus gp_policy_initial_value(const struct GpPolicy *policy, double *out);

/**
 * # Safety
 * `policy` must be live; `path` must be a NUL-terminated string.
 */
enum GpStatus gp_policy_save(const struct GpPolicy *policy, const char *path);

/**
 * Read a policy file written by `gp_policy_save` or `glidepath solve`.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum GpStatus gp_policy_load(const char *path, struct GpPolicy **out);

/**
 * # Safety
 * `policy` must come from a `gp_policy_*` constructor or be null.
 */
void gp_policy_free(struct GpPolicy *policy);

/**
 * Monte Carlo of a glide path (`len` fractions). `probs_out` receives
 * `P[W_T < thresholds[k]]`.
 *
 * # Safety
 * Handles must be live; arrays must hold the stated lengths.
 */
enum GpStatus gp_simulate_glide(const struct GpParams *params,
                                const struct GpScenario *scenario,
                                const double *glide,
                                size_t len,
                                size_t n_paths,
                                uint64_t seed,
                                const double *thresholds,
                                size_t n_thresholds,
                                double *probs_out,
                                struct GpStats *stats_out);

/**
 * Monte Carlo of an adaptive policy.
 *
 * # Safety
 * Handles must be live; arrays must hold the stated lengths.
 */
enum GpStatus gp_simulate_policy(const struct GpParams *params,
                                 const struct GpScenario *scenario,
                                 const struct GpPolicy *policy,
                                 size_t n_paths,
                                 uint64_t seed,
                                 const double *thresholds,
                                 size_t n_thresholds,
                                 double *probs_out,
                                 struct GpStats *stats_out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* GLIDEPATH_H */
