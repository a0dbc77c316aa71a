#ifndef COOPSENSE_H
#define COOPSENSE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdbool.h>
#include <stdint.h>

// Result code of every call.
typedef enum {
  CSS_STATUS_OK = 0,
  CSS_STATUS_NULL_POINTER = 1,
  CSS_STATUS_INVALID_PARAMS = 2,
  CSS_STATUS_OUT_OF_RANGE = 3,
  // The call needs a scenario where attackers do not transmit after punishment.
  CSS_STATUS_REQUIRES_NON_AGGRESSIVE = 4,
  CSS_STATUS_NO_CROSSING = 5,
  CSS_STATUS_NO_FINITE_THRESHOLD = 6,
  CSS_STATUS_INVALID_CONFIG = 7,
  CSS_STATUS_PANIC = 8,
} CssStatus;

// C_p regions relative to the OR-rule optimality interval.
typedef enum {
  CSS_REGION_BELOW = 1,
  CSS_REGION_INSIDE = 2,
  CSS_REGION_ABOVE = 3,
} CssRegion;

// Validated scenario.
typedef struct CssScenario CssScenario;

// Scenario parameters passed by value.
typedef struct {
  uint32_t n_total;
  uint32_t n_attackers;
  double p_idle;
  double p_false_alarm;
  double p_missed_detection;
  double collision_penalty;
  double direct_punishment;
  double discount;
  double total_rate;
} CssParams;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread; empty after a success.
// Valid until the next call on the same thread.
const char *css_last_error(void);

// Library version as a static string.
const char *css_version(void);

// Validate `params` and create a scenario handle.
//
// # Safety
// `params` must point to a `CssParams` and `out` to writable storage.
CssStatus css_scenario_new(const CssParams *params, CssScenario **out);

// Release a handle from `css_scenario_new`. Null is ignored.
//
// # Safety
// `s` must be null or a handle not yet freed.
void css_scenario_free(CssScenario *s);

// Posterior of an idle and a busy channel given `busy_count` of `group_size`
// busy decisions.
//
// # Safety
// `s` must be a live handle; out pointers must be writable.
CssStatus css_posterior(const CssScenario *s,
                        uint32_t group_size,
                        uint32_t busy_count,
                        double *p_idle,
                        double *p_busy);

// Bounds of the C_p interval where the OR rule is optimal, and where the
// scenario's C_p falls.
//
// # Safety
// `s` must be a live handle; out pointers must be writable.
CssStatus css_condition_i_bounds(const CssScenario *s,
                                 double *lower,
                                 double *upper,
                                 CssRegion *region);

// Closed-form direct-punishment threshold for `m` attackers.
//
// # Safety
// `s` must be a live handle; `out` must be writable.
CssStatus css_direct_threshold(const CssScenario *s, uint32_t m, double *out);

// Direct-punishment threshold by bisection over the best-response table.
//
// # Safety
// `s` must be a live handle; `out` must be writable.
CssStatus css_direct_threshold_oracle(const CssScenario *s, uint32_t m, double *out);

// Long-term rewards of the attackers when honest and under their best
// attack policy; `z_star` is -1 when attacking does not pay.
//
// # Safety
// `s` must be a live handle; out pointers must be writable.
CssStatus css_long_term_rewards(const CssScenario *s,
                                double *honest,
                                double *dishonest,
                                int32_t *z_star);

// Smallest discount factor that removes the attack incentive under indirect
// punishment. 1 means no discount factor below 1 does.
//
// # Safety
// `s` must be a live handle; `out` must be writable.
CssStatus css_delta_threshold(const CssScenario *s, double *out);

// Single-slot best response of the attackers in a sensing state.
//
// # Safety
// `s` must be a live handle; out pointers must be writable.
CssStatus css_best_response(const CssScenario *s,
                            uint32_t honest_busy,
                            uint32_t attacker_busy,
                            bool include_direct_punishment,
                            uint32_t *busy_reports,
                            uint32_t *transmitters,
                            double *attacker_reward);

// Run the simulation described by a JSON run configuration (the format the
// command-line tool reads; its command block must be `simulate` or absent)
// and return the statistics as JSON. Free the result with `css_string_free`.
//
// # Safety
// `config_json` must be a NUL-terminated string; `out` must be writable.
CssStatus css_simulate_json(const char *config_json, uint32_t workers, char **out);

// Release a string returned by the library. Null is ignored.
//
// # Safety
// `s` must be null or a string from this library not yet freed.
void css_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* COOPSENSE_H */
