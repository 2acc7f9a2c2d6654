#ifndef SWARM_INFER_H
#define SWARM_INFER_H

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

// Result code of every fallible call.
typedef enum SiStatus {
  SI_STATUS_OK = 0,
  SI_STATUS_NULL_POINTER = 1,
  SI_STATUS_INVALID_UTF8 = 2,
  SI_STATUS_INVALID_INPUT = 3,
  // The handle holds no solution to query.
  SI_STATUS_INFEASIBLE = 4,
  SI_STATUS_OUT_OF_RANGE = 5,
  // A Rust panic was caught at the boundary.
  SI_STATUS_INTERNAL = 6,
} SiStatus;

// Outcome of the exact solver.
typedef enum SiSolveStatus {
  SI_SOLVE_STATUS_OPTIMAL = 0,
  SI_SOLVE_STATUS_TIME_LIMIT = 1,
  SI_SOLVE_STATUS_INFEASIBLE = 2,
} SiSolveStatus;

typedef struct SiScenario SiScenario;

typedef struct SiSolveResult SiSolveResult;

typedef struct SiStreamReport SiStreamReport;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or NULL. Valid until the
// next call into the library from the same thread.
const char *si_last_error(void);

// Library version as a static NUL-terminated string.
const char *si_version(void);

// Releases a string returned by this library.
//
// # Safety
// `s` must be NULL or a string from this library not yet freed.
void si_string_free(char *s);

// Parses a scenario document and checks it for consistency.
//
// # Safety
// `json` must be NULL or a NUL-terminated string; `out` must be NULL or writable.
enum SiStatus si_scenario_from_json(const char *json, struct SiScenario **out);

// Generates a random scenario with the default configuration.
//
// # Safety
// `out` must be NULL or writable.
enum SiStatus si_scenario_generate(size_t n_uavs,
                                   size_t n_requests,
                                   size_t depth,
                                   bool residual,
                                   uint64_t seed,
                                   struct SiScenario **out);

// Serializes a scenario; free the string with `si_string_free`.
//
// # Safety
// `scenario` must be NULL or live; `out` must be NULL or writable.
enum SiStatus si_scenario_to_json(const struct SiScenario *scenario, char **out);

// Number of nodes, or 0 for NULL.
//
// # Safety
// `scenario` must be NULL or live.
size_t si_scenario_node_count(const struct SiScenario *scenario);

// Number of requests, or 0 for NULL.
//
// # Safety
// `scenario` must be NULL or live.
size_t si_scenario_request_count(const struct SiScenario *scenario);

// # Safety
// `scenario` must be NULL or a live handle not yet freed.
void si_scenario_free(struct SiScenario *scenario);

// Solves the joint placement exactly. A `time_limit_secs` of zero or less,
// or a non-finite one, means no limit.
//
// # Safety
// `scenario` must be NULL or live; `out` must be NULL or writable.
enum SiStatus si_solve_exact(const struct SiScenario *scenario,
                             double time_limit_secs,
                             struct SiSolveResult **out);

// # Safety
// `result` must be live.
enum SiSolveStatus si_solve_result_status(const struct SiSolveResult *result);

// Total latency of the returned placements.
//
// # Safety
// `result` must be NULL or live; `out` must be NULL or writable.
enum SiStatus si_solve_result_total(const struct SiSolveResult *result, double *out);

// Copies the nodes hosting layers 1..=M of `request` into `nodes`, which
// holds `capacity` entries. `len` receives M even when the buffer is too
// small, in which case `SI_STATUS_OUT_OF_RANGE` is returned.
//
// # Safety
// `result` must be NULL or live; `nodes` must hold `capacity` entries;
// `len` must be NULL or writable.
enum SiStatus si_solve_result_placement(const struct SiSolveResult *result,
                                        size_t request,
                                        size_t *nodes,
                                        size_t capacity,
                                        size_t *len);

// Search nodes the solver expanded.
//
// # Safety
// `result` must be NULL or live.
uint64_t si_solve_result_nodes_explored(const struct SiSolveResult *result);

// # Safety
// `result` must be NULL or a live handle not yet freed.
void si_solve_result_free(struct SiSolveResult *result);

// Serves the requests in order with the greedy online policy.
// `alpha + beta` must equal 1.
//
// # Safety
// `scenario` must be NULL or live; `out` must be NULL or writable.
enum SiStatus si_run_heuristic(const struct SiScenario *scenario,
                               double alpha,
                               double beta,
                               struct SiStreamReport **out);

// Total latency over the accepted requests.
//
// # Safety
// `report` must be live.
double si_stream_total(const struct SiStreamReport *report);

// # Safety
// `report` must be NULL or live.
size_t si_stream_rejections(const struct SiStreamReport *report);

// Whether `request` was accepted.
//
// # Safety
// `report` must be NULL or live; `out` must be NULL or writable.
enum SiStatus si_stream_accepted(const struct SiStreamReport *report, size_t request, bool *out);

// # Safety
// `report` must be NULL or a live handle not yet freed.
void si_stream_free(struct SiStreamReport *report);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SWARM_INFER_H */
