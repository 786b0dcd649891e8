#ifndef CELLFREE_HAPS_H
#define CELLFREE_HAPS_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum CfhStatus {
  CFH_STATUS_OK = 0,
  CFH_STATUS_NULL_POINTER = 1,
  CFH_STATUS_INVALID_UTF8 = 2,
  CFH_STATUS_CONFIG = 3,
  CFH_STATUS_SOLVER = 4,
  CFH_STATUS_DOMAIN = 5,
  CFH_STATUS_BUFFER_TOO_SMALL = 6,
  CFH_STATUS_IO = 7,
  CFH_STATUS_PANIC = 8,
} CfhStatus;

typedef enum CfhScheme {
  CFH_SCHEME_AERIAL_CELLFREE = 0,
  CFH_SCHEME_AERIAL_CELLULAR = 1,
  CFH_SCHEME_TERRESTRIAL_CELLFREE = 2,
} CfhScheme;

typedef enum CfhOptimizeMode {
  CFH_OPTIMIZE_MODE_NONE = 0,
  CFH_OPTIMIZE_MODE_POWER = 1,
  CFH_OPTIMIZE_MODE_PLACEMENT = 2,
  CFH_OPTIMIZE_MODE_JOINT = 3,
} CfhOptimizeMode;

// A user drop with UxNB and HAPS geometry.
typedef struct CfhScenario CfhScenario;

// Result of an optimisation run.
typedef struct CfhTrace CfhTrace;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failure on this thread, or NULL. Valid until the next
// failing call on the same thread.
const char *cfh_last_error_message(void);

// Library version as a static NUL-terminated string.
const char *cfh_version(void);

// Build a user drop from scenario parameters given as JSON; missing fields
// take their defaults.
//
// # Safety
// `params_json` must be a NUL-terminated string and `out` a valid pointer.
enum CfhStatus cfh_scenario_new(const char *params_json, uint64_t seed, struct CfhScenario **out);

// # Safety
// `scenario` must be NULL or a handle from [`cfh_scenario_new`] not yet freed.
void cfh_scenario_free(struct CfhScenario *scenario);

// # Safety
// `scenario` must be NULL or a live handle.
size_t cfh_scenario_num_users(const struct CfhScenario *scenario);

// # Safety
// `scenario` must be NULL or a live handle.
size_t cfh_scenario_num_uxnbs(const struct CfhScenario *scenario);

// Closed-form SINR of every user under a uniform power split, written to
// `out[0..K]`.
//
// # Safety
// `scenario` must be a live handle and `out` must hold `len` doubles.
enum CfhStatus cfh_scenario_uniform_sinr(const struct CfhScenario *scenario,
                                         double *out,
                                         size_t len);

// Optimise the power split and/or UxNB placement of a drop.
//
// # Safety
// `scenario` must be a live handle and `out` a valid pointer.
enum CfhStatus cfh_optimize(const struct CfhScenario *scenario,
                            enum CfhScheme scheme,
                            enum CfhOptimizeMode mode,
                            struct CfhTrace **out);

// # Safety
// `trace` must be NULL or a handle from [`cfh_optimize`] not yet freed.
void cfh_trace_free(struct CfhTrace *trace);

// Final min-SINR (linear), or NaN for a NULL handle.
//
// # Safety
// `trace` must be NULL or a live handle.
double cfh_trace_min_sinr(const struct CfhTrace *trace);

// # Safety
// `trace` must be NULL or a live handle.
size_t cfh_trace_outer_iterations(const struct CfhTrace *trace);

// Final power split `P_km`, row-major in `(k, m)`, `K*M` values.
//
// # Safety
// `trace` must be a live handle and `out` must hold `len` doubles.
enum CfhStatus cfh_trace_power(const struct CfhTrace *trace, double *out, size_t len);

// Final UxNB positions as `x0, y0, x1, y1, ...`, `2*M` values.
//
// # Safety
// `trace` must be a live handle and `out` must hold `len` doubles.
enum CfhStatus cfh_trace_positions(const struct CfhTrace *trace, double *out, size_t len);

// Whole trace as JSON; release with [`cfh_string_free`].
//
// # Safety
// `trace` must be a live handle and `out` a valid pointer.
enum CfhStatus cfh_trace_to_json(const struct CfhTrace *trace, char **out);

// Run an experiment config (JSON) and return the results CSV; release with
// [`cfh_string_free`].
//
// # Safety
// `config_json` must be a NUL-terminated string and `out` a valid pointer.
enum CfhStatus cfh_run_experiment(const char *config_json, char **out);

// # Safety
// `s` must be NULL or a string returned by this library and not yet freed.
void cfh_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CELLFREE_HAPS_H */
