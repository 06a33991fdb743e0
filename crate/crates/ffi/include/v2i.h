#ifndef V2I_H
#define V2I_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call.
 */
typedef enum V2iStatus {
  V2I_STATUS_OK = 0,
  V2I_STATUS_NULL_POINTER = 1,
  V2I_STATUS_INVALID_UTF8 = 2,
  V2I_STATUS_PARSE = 3,
  V2I_STATUS_UNKNOWN_KEY = 4,
  V2I_STATUS_UNIT_VIOLATION = 5,
  V2I_STATUS_DOMAIN = 6,
  V2I_STATUS_CONVERGENCE = 7,
  V2I_STATUS_DEGENERATE_DENOMINATOR = 8,
  V2I_STATUS_CONFIG_MISMATCH = 9,
  V2I_STATUS_IO = 10,
  V2I_STATUS_OUT_OF_RANGE = 11,
  V2I_STATUS_PANIC = 12,
} V2iStatus;

/**
 * Opaque optimization result handle.
 */
typedef struct V2iOptimization V2iOptimization;

/**
 * Opaque scenario handle.
 */
typedef struct V2iScenario V2iScenario;

/**
 * Model outputs for one operating point. Units: veh/m, veh/s, s, bits/s.
 */
typedef struct V2iMetrics {
  double density;
  double flow;
  double n_mean;
  double stations;
  double tau;
  double p_c;
  double p_tran;
  double p_s;
  double mean_slot;
  double rho;
  double p_block;
  double throughput;
  double throughput_classic;
  double t_delay;
  double t_delay_weighted;
} V2iMetrics;

typedef struct V2iFixedPoint {
  double tau;
  double p_c;
  double residual;
  uint32_t iterations;
} V2iFixedPoint;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the most recent failed call on this thread, or an empty
 * string. Valid until the next call into this library on the same thread.
 */
const char *v2i_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *v2i_version(void);

/**
 * New scenario holding every default. Never null.
 */
struct V2iScenario *v2i_scenario_default(void);

/**
 * Parses scenario text (`[section]` / `key = value`).
 *
 * # Safety
 * `text` must be a NUL-terminated string and `out` a valid pointer.
 */
enum V2iStatus v2i_scenario_parse(const char *text, struct V2iScenario **out);

/**
 * Loads a scenario file.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum V2iStatus v2i_scenario_load(const char *path, struct V2iScenario **out);

/**
 * Sets one key, e.g. `("mac.cw_min", "64")`. The scenario is unchanged if
 * the result would be invalid.
 *
 * # Safety
 * `sc` must come from this library; `key` and `value` must be
 * NUL-terminated strings.
 */
enum V2iStatus v2i_scenario_set(struct V2iScenario *sc, const char *key, const char *value);

/**
 * Resolved scenario text. Release with [`v2i_string_free`].
 *
 * # Safety
 * `sc` must come from this library and `out` must be a valid pointer.
 */
enum V2iStatus v2i_scenario_echo(const struct V2iScenario *sc, char **out);

/**
 * # Safety
 * `s` must be null or a string returned by this library, freed once.
 */
void v2i_string_free(char *s);

/**
 * # Safety
 * `sc` must be null or a handle from this library, freed once.
 */
void v2i_scenario_free(struct V2iScenario *sc);

/**
 * Evaluates the scenario at its configured retry limit.
 *
 * # Safety
 * `sc` must come from this library and `out` must be a valid pointer.
 */
enum V2iStatus v2i_solve(const struct V2iScenario *sc, struct V2iMetrics *out);

/**
 * Backoff fixed point for `n` stations with default MAC timings.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum V2iStatus v2i_fixed_point(uint32_t n,
                               uint32_t cw_min,
                               uint32_t max_stage,
                               double tolerance,
                               struct V2iFixedPoint *out);

/**
 * Searches the scenario's retry-limit range under its delay bound.
 *
 * # Safety
 * `sc` must come from this library and `out` must be a valid pointer.
 */
enum V2iStatus v2i_optimize(const struct V2iScenario *sc, struct V2iOptimization **out);

/**
 * # Safety
 * `opt` must be a live handle from [`v2i_optimize`].
 */
uint32_t v2i_optimization_m_star(const struct V2iOptimization *opt);

/**
 * Whether any retry limit met the delay bound.
 *
 * # Safety
 * `opt` must be a live handle from [`v2i_optimize`].
 */
bool v2i_optimization_feasible(const struct V2iOptimization *opt);

/**
 * Number of evaluated retry limits.
 *
 * # Safety
 * `opt` must be a live handle from [`v2i_optimize`].
 */
size_t v2i_optimization_len(const struct V2iOptimization *opt);

/**
 * Row `index` of the per-limit table, in ascending `m`.
 *
 * # Safety
 * `opt` must be a live handle; `m`, `feasible` and `metrics` must be valid
 * pointers.
 */
enum V2iStatus v2i_optimization_row(const struct V2iOptimization *opt,
                                    size_t index,
                                    uint32_t *m,
                                    bool *feasible,
                                    struct V2iMetrics *metrics);

/**
 * # Safety
 * `opt` must be null or a handle from [`v2i_optimize`], freed once.
 */
void v2i_optimization_free(struct V2iOptimization *opt);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* V2I_H */
