#ifndef TWOHOP_H
#define TWOHOP_H

/* Generated by cbindgen from src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum TwohopStatus {
  TWOHOP_STATUS_OK = 0,
  TWOHOP_STATUS_NULL_POINTER = 1,
  TWOHOP_STATUS_DOMAIN = 2,
  TWOHOP_STATUS_CONFIG = 3,
  TWOHOP_STATUS_MISSING_STATE = 4,
  TWOHOP_STATUS_CAP_EXCEEDED = 5,
  TWOHOP_STATUS_INFEASIBLE = 6,
  TWOHOP_STATUS_PARSE = 7,
  TWOHOP_STATUS_IO = 8,
  TWOHOP_STATUS_INVALID_ARGUMENT = 9,
  TWOHOP_STATUS_PANIC = 10,
} TwohopStatus;

// Opaque handle to a solved MDP policy table.
typedef struct TwohopPolicyTable TwohopPolicyTable;

// Opaque scenario handle.
typedef struct TwohopScenario TwohopScenario;

typedef struct TwohopSimResult {
  double dvp_hat;
  double ci_low;
  double ci_high;
  double mean_departures;
  uint64_t replications;
} TwohopSimResult;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread. The pointer stays valid
// until the next failing call on the same thread.
const char *twohop_last_error_message(void);

// Creates a scenario. `pe` is the per-slot erasure probability.
//
// # Safety
// `out_handle` must be a valid pointer to writable storage for one handle.
enum TwohopStatus twohop_scenario_new(uint32_t slots,
                                      double pe,
                                      uint32_t deadline,
                                      uint32_t batch,
                                      uint32_t x1,
                                      uint32_t x2,
                                      struct TwohopScenario **out_handle);

// # Safety
// `handle` must come from [`twohop_scenario_new`] and not be freed twice.
void twohop_scenario_free(struct TwohopScenario *handle);

// Exact DVP of the schedule `n1[0..len]` (link-1 slots per frame).
//
// # Safety
// `n1` must point to `len` readable values; `out_dvp` must be writable.
enum TwohopStatus twohop_exact_dvp(const struct TwohopScenario *scenario,
                                   const uint32_t *n1,
                                   size_t len,
                                   double *out_dvp);

// Union bound on the DVP, unclamped.
//
// # Safety
// As for [`twohop_exact_dvp`].
enum TwohopStatus twohop_dvpub(const struct TwohopScenario *scenario,
                               const uint32_t *n1,
                               size_t len,
                               double *out_bound);

// Chernoff bound minimised over its exponent; writes the exponent and the
// bound.
//
// # Safety
// As for [`twohop_exact_dvp`]; both output pointers must be writable.
enum TwohopStatus twohop_wtb_min(const struct TwohopScenario *scenario,
                                 const uint32_t *n1,
                                 size_t len,
                                 double *out_s,
                                 double *out_bound);

// Runs a semi-static method by name (`wtb-r`, `wtb-w`, `wtb-d`, `e-wtb`,
// `e-dvpub`, `opt`, `fifty`) and writes `w` link-1 allocations into
// `out_n1`, whose capacity is `len`, plus the method's score.
//
// # Safety
// `method` must be a NUL-terminated string; `out_n1` must hold `len` values.
enum TwohopStatus twohop_solve_semistatic(const struct TwohopScenario *scenario,
                                          const char *method,
                                          uint32_t *out_n1,
                                          size_t len,
                                          double *out_score);

// Solves the throughput-maximising MDP for the scenario.
//
// # Safety
// `out_handle` must be writable.
enum TwohopStatus twohop_policy_table_solve(const struct TwohopScenario *scenario,
                                            struct TwohopPolicyTable **out_handle);

// # Safety
// `handle` must come from [`twohop_policy_table_solve`] and not be freed twice.
void twohop_policy_table_free(struct TwohopPolicyTable *handle);

// Link-1 slots the table assigns at `epoch` in state `(q1, q2)`.
//
// # Safety
// `table` must be a live handle; `out_action` must be writable.
enum TwohopStatus twohop_policy_table_action(const struct TwohopPolicyTable *table,
                                             uint32_t epoch,
                                             uint32_t q1,
                                             uint32_t q2,
                                             uint32_t *out_action);

// Optimal expected departures from the initial state.
//
// # Safety
// `table` must be a live handle; `out_value` must be writable.
enum TwohopStatus twohop_policy_table_initial_value(const struct TwohopPolicyTable *table,
                                                    double *out_value);

// Exact DVP of the table's policy on its own scenario.
//
// # Safety
// `table` must be a live handle; `out_dvp` must be writable.
enum TwohopStatus twohop_policy_table_exact_dvp(const struct TwohopPolicyTable *table,
                                                double *out_dvp);

// Monte Carlo estimate for a schedule. Deterministic in `seed`.
//
// # Safety
// As for [`twohop_exact_dvp`]; `out_result` must be writable.
enum TwohopStatus twohop_simulate(const struct TwohopScenario *scenario,
                                  const uint32_t *n1,
                                  size_t len,
                                  uint64_t replications,
                                  uint64_t seed,
                                  struct TwohopSimResult *out_result);

// Monte Carlo estimate for a solved policy table.
//
// # Safety
// `table` must be a live handle; `out_result` must be writable.
enum TwohopStatus twohop_policy_table_simulate(const struct TwohopPolicyTable *table,
                                               uint64_t replications,
                                               uint64_t seed,
                                               struct TwohopSimResult *out_result);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TWOHOP_H */
