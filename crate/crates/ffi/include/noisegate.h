#ifndef NOISEGATE_H
#define NOISEGATE_H

#include <stdbool.h>
#include <stdint.h>

typedef enum NgStatus {
  NG_STATUS_OK = 0,
  NG_STATUS_NULL_POINTER = 1,
  NG_STATUS_INVALID_UTF8 = 2,
  NG_STATUS_DOMAIN = 3,
  NG_STATUS_CONTRACT = 4,
  NG_STATUS_UNDEFINED = 5,
  NG_STATUS_TRUNCATION = 6,
  NG_STATUS_PARSE = 7,
  NG_STATUS_CALIBRATION = 8,
  NG_STATUS_IO = 9,
  NG_STATUS_JSON = 10,
  NG_STATUS_PANIC = 11,
} NgStatus;

/**
 * Experiment configuration handle.
 */
typedef struct NgExperiment NgExperiment;

/**
 * Joint spectral amplitude handle.
 */
typedef struct NgJsa NgJsa;

typedef struct NgCountSummary {
  double n_signal;
  double n_idler;
  double n_coincidence;
  double duration;
  double rep_rate;
  uint64_t signal_counts;
  uint64_t idler_counts;
  uint64_t coincidence_counts;
} NgCountSummary;

/**
 * Analytic rates per second, idler dead time included.
 */
typedef struct NgExpectation {
  double n_signal;
  double n_idler_off;
  double n_idler_on;
  double n_coincidence_off;
  double n_coincidence_on;
  double rep_rate;
} NgExpectation;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null if none. Valid
 * until the next failing call on the same thread.
 */
const char *ng_last_error_message(void);

/**
 * Static name of a status code.
 */
const char *ng_status_string(enum NgStatus status);

/**
 * # Safety
 * `out` must be a valid pointer to writable storage for one handle pointer.
 */
enum NgStatus ng_experiment_new_default(struct NgExperiment **out);

/**
 * Loads a `key = value` experiment config.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum NgStatus ng_experiment_load(const char *path, struct NgExperiment **out);

/**
 * # Safety
 * `experiment` must come from this library and not be used afterwards. Null is ignored.
 */
void ng_experiment_free(struct NgExperiment *experiment);

/**
 * # Safety
 * `experiment` must be a live handle.
 */
enum NgStatus ng_experiment_set_pump_power(struct NgExperiment *experiment, double power_mw);

/**
 * # Safety
 * `experiment` must be a live handle.
 */
enum NgStatus ng_experiment_set_seed(struct NgExperiment *experiment, uint64_t seed);

/**
 * Simulated time in seconds.
 *
 * # Safety
 * `experiment` must be a live handle.
 */
enum NgStatus ng_experiment_set_duration(struct NgExperiment *experiment, double duration_s);

/**
 * Rescales the herald-path transmission so the total signal efficiency is `eta`.
 *
 * # Safety
 * `experiment` must be a live handle.
 */
enum NgStatus ng_experiment_set_eta_signal_total(struct NgExperiment *experiment, double eta);

/**
 * Rescales the idler-path transmission so the total idler efficiency is `eta`.
 *
 * # Safety
 * `experiment` must be a live handle.
 */
enum NgStatus ng_experiment_set_eta_idler_total(struct NgExperiment *experiment, double eta);

/**
 * One Monte Carlo run with the gate on (`gate_enabled` true) or off.
 *
 * # Safety
 * `experiment` must be a live handle; `out` must be writable.
 */
enum NgStatus ng_run(const struct NgExperiment *experiment,
                     bool gate_enabled,
                     struct NgCountSummary *out);

/**
 * Analytic expected rates, idler dead time included.
 *
 * # Safety
 * `experiment` must be a live handle; `out` must be writable.
 */
enum NgStatus ng_expectations(const struct NgExperiment *experiment, struct NgExpectation *out);

/**
 * g = N_si R_p / (N_s N_i).
 *
 * # Safety
 * `summary` must be readable; `out` must be writable.
 */
enum NgStatus ng_cross_correlation(const struct NgCountSummary *summary, double *out);

/**
 * Single-mode thermal probability of `n` pairs at mean `mu`.
 *
 * # Safety
 * `out` must be writable.
 */
enum NgStatus ng_thermal_pmf(double mu, int64_t n, double *out);

/**
 * # Safety
 * `out` must be writable.
 */
enum NgStatus ng_purity_from_g2(double g2, double *out);

/**
 * Reads a grid in the JSA text format.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum NgStatus ng_jsa_load(const char *path, struct NgJsa **out);

/**
 * Builds the grid described by a phase-matching config file.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum NgStatus ng_jsa_from_phasematch(const char *path, struct NgJsa **out);

/**
 * Purity sum(lambda_n^2) of the Schmidt spectrum.
 *
 * # Safety
 * `jsa` must be a live handle; `out` must be writable.
 */
enum NgStatus ng_jsa_purity(const struct NgJsa *jsa, double *out);

/**
 * # Safety
 * `jsa` must come from this library and not be used afterwards. Null is ignored.
 */
void ng_jsa_free(struct NgJsa *jsa);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* NOISEGATE_H */
