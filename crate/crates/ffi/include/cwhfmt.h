/* C interface to the cwhfmt rendezvous planner. */

#ifndef CWHFMT_H
#define CWHFMT_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

/**
 * Result code of every fallible call.
 */
typedef enum CwhStatus {
  CWH_STATUS_OK = 0,
  CWH_STATUS_NULL_POINTER = 1,
  CWH_STATUS_INVALID_ARGUMENT = 2,
  CWH_STATUS_PARSE_ERROR = 3,
  CWH_STATUS_IO_ERROR = 4,
  CWH_STATUS_SAMPLING_EXHAUSTED = 5,
  CWH_STATUS_DATA_MISMATCH = 6,
  CWH_STATUS_NO_SOLUTION = 7,
  CWH_STATUS_PLAN_FAILED = 8,
  CWH_STATUS_PANIC = 9,
} CwhStatus;

/**
 * Precomputed samples, neighbour sets and certificates.
 */
typedef struct CwhData CwhData;

/**
 * Result of one online planning run.
 */
typedef struct CwhPlan CwhPlan;

/**
 * Parsed and validated scenario.
 */
typedef struct CwhScenario CwhScenario;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *cwh_version(void);

/**
 * Message of the last failure on this thread, or NULL. The pointer stays
 * valid until the next failing call on the same thread.
 */
const char *cwh_last_error_message(void);

/**
 * Coasts the state `x0` (position [m] then velocity [m/s]) for `t` seconds
 * under mean motion `omega` [rad/s] and writes the result to `out`.
 *
 * # Safety
 * `x0` must point to 6 readable doubles and `out` to 6 writable doubles.
 */
enum CwhStatus cwh_propagate_coast(double omega, const double *x0, double t, double *out);

/**
 * Minimum-fuel two-impulse transfer from `x0` to `xf` with duration at
 * most `t_max` seconds. Writes the departure and arrival impulses, the
 * duration and the cost `|dv1| + |dv2|`.
 *
 * # Safety
 * `x0` and `xf` must point to 6 readable doubles, `dv1` and `dv2` to 3
 * writable doubles and `duration`, `cost` to writable doubles.
 */
enum CwhStatus cwh_solve_2pbvp(double omega,
                               const double *x0,
                               const double *xf,
                               double t_max,
                               double *dv1,
                               double *dv2,
                               double *duration,
                               double *cost);

/**
 * Loads and validates a scenario file.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a writable pointer.
 */
enum CwhStatus cwh_scenario_load(const char *path, struct CwhScenario **out);

/**
 * Parses and validates a scenario from TOML text.
 *
 * # Safety
 * `text` must be a NUL-terminated string and `out` a writable pointer.
 */
enum CwhStatus cwh_scenario_from_toml(const char *text, struct CwhScenario **out);

/**
 * Releases a scenario; NULL is ignored.
 *
 * # Safety
 * `scenario` must come from this library and not be used afterwards.
 */
void cwh_scenario_free(struct CwhScenario *scenario);

/**
 * Runs the offline phase for `scenario`.
 *
 * # Safety
 * `scenario` must be a live handle and `out` a writable pointer.
 */
enum CwhStatus cwh_precompute(const struct CwhScenario *scenario, struct CwhData **out);

/**
 * Loads a data file and checks that it belongs to `scenario`.
 *
 * # Safety
 * `path` must be a NUL-terminated string, `scenario` a live handle and
 * `out` a writable pointer.
 */
enum CwhStatus cwh_data_load(const char *path,
                             const struct CwhScenario *scenario,
                             struct CwhData **out);

/**
 * Writes `data` to `path` in the binary format.
 *
 * # Safety
 * `data` must be a live handle and `path` a NUL-terminated string.
 */
enum CwhStatus cwh_data_save(const struct CwhData *data, const char *path);

/**
 * Total number of stored samples over all legs.
 *
 * # Safety
 * `data` must be a live handle or NULL (which yields 0).
 */
uintptr_t cwh_data_sample_count(const struct CwhData *data);

/**
 * Releases precomputed data; NULL is ignored.
 *
 * # Safety
 * `data` must come from this library and not be used afterwards.
 */
void cwh_data_free(struct CwhData *data);

/**
 * Runs the online phase. A plan handle is returned in `out` both on
 * success and on `CWH_STATUS_PLAN_FAILED`, so that the failure report can
 * be read; it must be freed in both cases.
 *
 * # Safety
 * `scenario` and `data` must be live handles and `out` a writable pointer.
 */
enum CwhStatus cwh_plan(const struct CwhScenario *scenario,
                        const struct CwhData *data,
                        bool smooth,
                        struct CwhPlan **out);

/**
 * Total two-norm cost [m/s] of a successful plan.
 *
 * # Safety
 * `plan` must be a live handle and `cost` a writable pointer.
 */
enum CwhStatus cwh_plan_cost(const struct CwhPlan *plan, double *cost);

/**
 * Number of burns of the plan; 0 for a failed plan or NULL.
 *
 * # Safety
 * `plan` must be a live handle or NULL.
 */
uintptr_t cwh_plan_burn_count(const struct CwhPlan *plan);

/**
 * Time [s] and impulse [m/s] of burn `index`.
 *
 * # Safety
 * `plan` must be a live handle, `tau` writable and `dv` 3 writable doubles.
 */
enum CwhStatus cwh_plan_burn(const struct CwhPlan *plan, uintptr_t index, double *tau, double *dv);

/**
 * Run report as JSON. The string must be released with
 * [`cwh_string_free`].
 *
 * # Safety
 * `plan` must be a live handle and `out` a writable pointer.
 */
enum CwhStatus cwh_plan_report_json(const struct CwhPlan *plan, char **out);

/**
 * Writes the trajectory, burns, report, abort-plan and timing files under
 * `prefix`, as the command-line tool does.
 *
 * # Safety
 * `scenario` and `plan` must be live handles and `prefix` a NUL-terminated
 * string.
 */
enum CwhStatus cwh_plan_write(const struct CwhScenario *scenario,
                              const struct CwhPlan *plan,
                              const char *prefix);

/**
 * Releases a plan; NULL is ignored.
 *
 * # Safety
 * `plan` must come from this library and not be used afterwards.
 */
void cwh_plan_free(struct CwhPlan *plan);

/**
 * Releases a string returned by this library; NULL is ignored.
 *
 * # Safety
 * `s` must come from this library and not be used afterwards.
 */
void cwh_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CWHFMT_H */
