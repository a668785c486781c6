#ifndef DSRC_CTL_H
#define DSRC_CTL_H

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

typedef enum DsrcAlgo {
  DSRC_ALGO_RATE = 0,
  DSRC_ALGO_POWER = 1,
  DSRC_ALGO_JOINT = 2,
  DSRC_ALGO_LIMERIC = 3,
} DsrcAlgo;

// Result of every fallible call.
typedef enum DsrcStatus {
  DSRC_STATUS_OK = 0,
  // A required pointer argument was null.
  DSRC_STATUS_NULL_ARGUMENT = 1,
  // A string argument was not valid UTF-8.
  DSRC_STATUS_INVALID_UTF8 = 2,
  // Invalid configuration or out-of-domain input.
  DSRC_STATUS_CONFIG = 3,
  // The load target cannot be met.
  DSRC_STATUS_INFEASIBLE = 4,
  // A file could not be read or written.
  DSRC_STATUS_IO = 5,
  // A caller-provided buffer is too small.
  DSRC_STATUS_BUFFER_TOO_SMALL = 6,
  // The library panicked; the handle arguments remain valid.
  DSRC_STATUS_PANIC = 7,
} DsrcStatus;

// The record of one controller run.
typedef struct DsrcRun DsrcRun;

// A configured scenario: positions, link thresholds and utilities.
typedef struct DsrcSimulation DsrcSimulation;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static nul-terminated string.
const char *dsrc_version(void);

// Copy of the calling thread's most recent error message, or null if none.
// Release with [`dsrc_string_free`].
char *dsrc_last_error(void);

// Releases a string returned by this library. Null is ignored.
//
// # Safety
// `s` must come from this library and not have been freed.
void dsrc_string_free(char *s);

// Builds a simulation from a JSON configuration. `seed` overrides the
// configured scenario seed when `use_seed` is true.
//
// # Safety
// `config_json` must be a nul-terminated string; `out` must be writable.
enum DsrcStatus dsrc_simulation_new(const char *config_json,
                                    bool use_seed,
                                    uint64_t seed,
                                    struct DsrcSimulation **out);

// Releases a simulation. Null is ignored.
//
// # Safety
// `sim` must come from [`dsrc_simulation_new`] and not have been freed.
void dsrc_simulation_free(struct DsrcSimulation *sim);

// Number of vehicles, or 0 for a null handle.
//
// # Safety
// `sim` must be null or a live handle.
size_t dsrc_simulation_vehicle_count(const struct DsrcSimulation *sim);

// Load target in msg/s, or NaN for a null handle.
//
// # Safety
// `sim` must be null or a live handle.
double dsrc_simulation_gamma(const struct DsrcSimulation *sim);

// Runs one controller to completion.
//
// # Safety
// `sim` must be a live handle; `out` must be writable.
enum DsrcStatus dsrc_simulation_run(const struct DsrcSimulation *sim,
                                    enum DsrcAlgo algo,
                                    struct DsrcRun **out);

// Writes the run's CSV and JSON outputs into `out_dir`.
//
// # Safety
// `sim` and `run` must be live handles; `out_dir` a nul-terminated path.
enum DsrcStatus dsrc_simulation_emit(const struct DsrcSimulation *sim,
                                     const struct DsrcRun *run,
                                     const char *out_dir);

// Releases a run. Null is ignored.
//
// # Safety
// `run` must come from [`dsrc_simulation_run`] and not have been freed.
void dsrc_run_free(struct DsrcRun *run);

// Number of recorded rounds, or 0 for a null handle.
//
// # Safety
// `run` must be null or a live handle.
size_t dsrc_run_rounds(const struct DsrcRun *run);

// Mean objective over the final half of the run, or NaN for a null handle.
//
// # Safety
// `run` must be null or a live handle.
double dsrc_run_rho_avg(const struct DsrcRun *run);

// Largest tail-averaged channel load as a fraction of airtime, or NaN for a
// null handle.
//
// # Safety
// `run` must be null or a live handle.
double dsrc_run_max_load_frac(const struct DsrcRun *run);

// Copies the final rates (msg/s) into `buf`, which must hold one value per
// vehicle.
//
// # Safety
// `run` must be a live handle; `buf` must be valid for `len` writes.
enum DsrcStatus dsrc_run_final_rates(const struct DsrcRun *run, double *buf, size_t len);

// Copies the final powers (dBm) into `buf`, which must hold one value per
// vehicle.
//
// # Safety
// `run` must be a live handle; `buf` must be valid for `len` writes.
enum DsrcStatus dsrc_run_final_powers(const struct DsrcRun *run, double *buf, size_t len);

// The whole run record as JSON. Release with [`dsrc_string_free`].
//
// # Safety
// `run` must be a live handle; `out` must be writable.
enum DsrcStatus dsrc_run_to_json(const struct DsrcRun *run, char **out);

// Solves one cut subproblem: the largest `g` whose every trailing sum of
// `f[0..g]` is positive, or 0.
//
// # Safety
// `f` must be valid for `len` reads (or null with `len == 0`); `out_cut`
// must be writable.
enum DsrcStatus dsrc_optimal_cut(const double *f, size_t len, size_t *out_cut);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DSRC_CTL_H */
