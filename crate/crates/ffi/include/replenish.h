/* C interface for the replenish simulation engine. */

#pragma once

/* Generated with cbindgen:0.26.0 */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Case selector written by `rp_epoch_lower_bound`.
 */
typedef enum rp_epoch_case {
  RP_EPOCH_CASE_UNDER_ALLOCATION = 0,
  RP_EPOCH_CASE_OVER_ALLOCATION = 1,
  RP_EPOCH_CASE_STRADDLING = 2,
} rp_epoch_case;

/**
 * Result codes returned by every fallible entry point.
 */
typedef enum rp_status {
  RP_STATUS_OK = 0,
  /**
   * A pointer argument was null.
   */
  RP_STATUS_NULL_POINTER = 1,
  /**
   * Input text was not valid UTF-8.
   */
  RP_STATUS_INVALID_UTF8 = 2,
  /**
   * The configuration or instance failed to parse or validate.
   */
  RP_STATUS_INVALID_CONFIG = 3,
  /**
   * A numeric argument was outside its documented domain.
   */
  RP_STATUS_INVALID_ARGUMENT = 4,
  /**
   * The simulation or solver failed; see `rp_last_error_message`.
   */
  RP_STATUS_RUN_FAILED = 5,
  /**
   * A callee panicked; state is still consistent but the call did nothing.
   */
  RP_STATUS_PANIC = 6,
} rp_status;

/**
 * Opaque experiment configuration.
 */
typedef struct rp_config rp_config;

/**
 * Flat summary of one replication.
 */
typedef struct rp_run_summary {
  uint64_t horizon;
  double w_bar;
  double v_bar;
  double delta_eff;
  double delta_fair;
  double h_m;
  double h_0;
  uint64_t clamp_warnings;
} rp_run_summary;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the most recent failure on this thread. The pointer stays
 * valid until the next failing call on the same thread.
 */
const char *rp_last_error_message(void);

/**
 * Library version as a static string.
 */
const char *rp_version(void);

/**
 * Parse and validate an experiment configuration from JSON.
 *
 * # Safety
 * `json` must be a NUL-terminated string and `out` a valid pointer.
 */
enum rp_status rp_config_parse(const char *json, struct rp_config **out);

/**
 * Release a configuration handle. Null is a no-op.
 *
 * # Safety
 * `config` must have come from `rp_config_parse` and not been freed before.
 */
void rp_config_free(struct rp_config *config);

/**
 * Run one replication of the cell `(m, delta)`.
 *
 * # Safety
 * `config` must be a live handle and `out` a valid pointer.
 */
enum rp_status rp_run_replication(const struct rp_config *config,
                                  double m,
                                  double delta,
                                  uint64_t replication,
                                  struct rp_run_summary *out);

/**
 * Run the configured grid sweep and return the result as CSV text.
 *
 * # Safety
 * `config` must be a live handle and `out_csv` a valid pointer; free the
 * returned string with `rp_string_free`.
 */
enum rp_status rp_sweep_csv(const struct rp_config *config, char **out_csv);

/**
 * Release a string allocated by this library. Null is a no-op.
 *
 * # Safety
 * `text` must have been returned through one of this library's `char**`
 * out-parameters.
 */
void rp_string_free(char *text);

/**
 * Closed-form stationary distribution of the center-reverting birth-death
 * chain. `pi_out` must hold `m + 1` doubles.
 *
 * # Safety
 * `pi_out` must point to at least `m + 1` writable doubles.
 */
enum rp_status rp_birth_death_stationary(double p, double delta, uintptr_t m, double *pi_out);

/**
 * Long-run boundary occupancy from hitting statistics.
 *
 * # Safety
 * `h_m_out` and `h_0_out` must be valid pointers.
 */
enum rp_status rp_renewal_identity(double e_m,
                                   double e_0,
                                   double p_m,
                                   double p_0,
                                   double *h_m_out,
                                   double *h_0_out);

/**
 * Exact binomial tail `P(Bin(l, 1/2) >= l/2 + t)` with its lower bound.
 *
 * # Safety
 * The three output pointers must be valid.
 */
enum rp_status rp_binomial_tail_bound(uint64_t l,
                                      uint64_t t,
                                      double *exact_out,
                                      double *bound_out,
                                      bool *holds_out);

/**
 * Epoch lower bound on overflow/stockout for allocation band
 * `[alloc, alloc + delta]` under coin-flip supply and unit demand.
 *
 * # Safety
 * All four output pointers must be valid.
 */
enum rp_status rp_epoch_lower_bound(double alloc,
                                    double delta,
                                    double capacity,
                                    double *w_lb_out,
                                    double *v_lb_out,
                                    uint64_t *epoch_len_out,
                                    enum rp_epoch_case *case_out);

/**
 * Solve a fluid Eisenberg-Gale instance given as JSON
 * (`{"weights": [[...]], "type_means": [...], "supply_means": [...]}`);
 * returns the solution as JSON.
 *
 * # Safety
 * `instance_json` must be NUL-terminated; free the output with
 * `rp_string_free`.
 */
enum rp_status rp_eg_solve_json(const char *instance_json, double tolerance, char **out_json);

/**
 * Run the numerical verification suite; returns the JSON report and writes
 * whether every check passed.
 *
 * # Safety
 * `passed_out` and `out_json` must be valid pointers; free the output with
 * `rp_string_free`.
 */
enum rp_status rp_verify_json(uint64_t seed, bool *passed_out, char **out_json);

#ifdef __cplusplus
} // extern "C"
#endif // __cplusplus
