#ifndef FLOCKLAB_H
#define FLOCKLAB_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes returned by every fallible function.
 */
typedef enum {
  FL_STATUS_OK = 0,
  FL_STATUS_NULL_POINTER = 1,
  FL_STATUS_INVALID_ARGUMENT = 2,
  FL_STATUS_INVALID_CONFIG = 3,
  FL_STATUS_PARSE = 4,
  FL_STATUS_IO = 5,
  /**
   * Vacuum, CFL, blow-up, non-finite or negative values, mass drift.
   */
  FL_STATUS_NUMERICAL = 6,
  FL_STATUS_GRID_MISMATCH = 7,
  FL_STATUS_DEGENERATE_FIT = 8,
  FL_STATUS_OUT_OF_RANGE = 9,
  FL_STATUS_PANIC = 10,
} FlStatus;

/**
 * Opaque experiment configuration.
 */
typedef struct FlConfig FlConfig;

/**
 * Opaque result of a single kinetic run.
 */
typedef struct FlRun FlRun;

/**
 * Opaque result of an epsilon sweep.
 */
typedef struct FlSweep FlSweep;

/**
 * Scalar diagnostics of one snapshot.
 */
typedef struct {
  double t;
  double kinetic_entropy;
  double d1;
  double d2;
  double macro_entropy;
  double rel_entropy;
  double rel_dissipation;
  double jensen_gap;
  double maxwellian_gap;
  double budget_a;
  double budget_b;
  double budget_c;
  double mass;
  double momentum;
} FlReport;

/**
 * One point of a sweep.
 */
typedef struct {
  double epsilon;
  double sup_rel_entropy;
  double integrated_rel_dissipation;
  double error;
  double final_maxwellian_gap;
} FlSweepPoint;

/**
 * Log-log least-squares fit `log error = slope log eps + intercept`.
 */
typedef struct {
  double slope;
  double intercept;
  double max_residual;
} FlRateFit;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *fl_version(void);

/**
 * Copy the last error message of this thread into `buf` (NUL-terminated,
 * truncated to `len`). Returns the full message length, 0 when there is none.
 *
 * # Safety
 * `buf` must be null or point to `len` writable bytes.
 */
size_t fl_last_error(char *buf, size_t len);

/**
 * The built-in demonstration configuration.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
FlStatus fl_config_demo(FlConfig **out);

/**
 * Parse a TOML experiment description.
 *
 * # Safety
 * `toml` must be a NUL-terminated string and `out` a valid pointer.
 */
FlStatus fl_config_from_toml(const char *toml, FlConfig **out);

/**
 * Load a TOML experiment file; relative kernel files resolve next to it.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
FlStatus fl_config_load(const char *path, FlConfig **out);

/**
 * Release a configuration. Null is ignored.
 *
 * # Safety
 * `cfg` must come from one of the `fl_config_*` constructors and not be used afterwards.
 */
void fl_config_free(FlConfig *cfg);

/**
 * Set the relaxation scale used by single runs.
 *
 * # Safety
 * `cfg` must be a live configuration handle.
 */
FlStatus fl_config_set_epsilon(FlConfig *cfg, double epsilon);

/**
 * Set the kinetic grid resolution and velocity cut-off.
 *
 * # Safety
 * `cfg` must be a live configuration handle.
 */
FlStatus fl_config_set_grid(FlConfig *cfg, size_t nx, size_t nv, double v_max);

/**
 * Set the final time and the snapshot interval.
 *
 * # Safety
 * `cfg` must be a live configuration handle.
 */
FlStatus fl_config_set_times(FlConfig *cfg, double t_final, double snapshot_dt);

/**
 * Replace the sweep list.
 *
 * # Safety
 * `cfg` must be a live configuration handle and `values` point to `len` doubles.
 */
FlStatus fl_config_set_epsilon_list(FlConfig *cfg, const double *values, size_t len);

/**
 * Serialise the configuration as TOML. Same buffer convention as [`fl_last_error`];
 * returns the full length, or 0 if `cfg` is null.
 *
 * # Safety
 * `cfg` must be a live handle; `buf` null or `len` writable bytes.
 */
size_t fl_config_to_toml(const FlConfig *cfg, char *buf, size_t len);

/**
 * One kinetic run at the configured epsilon against its Euler reference.
 * `out_dir` may be null; otherwise `reports.csv` (and a failure manifest on abort) go there.
 *
 * # Safety
 * `cfg` must be a live handle, `out_dir` null or NUL-terminated, `out` valid.
 */
FlStatus fl_run_single(const FlConfig *cfg, const char *out_dir, FlRun **out);

/**
 * Release a run. Null is ignored.
 *
 * # Safety
 * `run` must come from [`fl_run_single`] and not be used afterwards.
 */
void fl_run_free(FlRun *run);

/**
 * Number of snapshots recorded by a run (0 for null).
 *
 * # Safety
 * `run` must be null or a live handle.
 */
size_t fl_run_report_count(const FlRun *run);

/**
 * Diagnostics of snapshot `index`.
 *
 * # Safety
 * `run` must be a live handle and `out` valid.
 */
FlStatus fl_run_report(const FlRun *run, size_t index, FlReport *out);

/**
 * `sup_t` relative entropy and the time integral of the relative dissipation.
 *
 * # Safety
 * `run` must be a live handle; `sup_rel_entropy` and `integrated_dissipation` valid.
 */
FlStatus fl_run_error_functional(const FlRun *run,
                                 double *sup_rel_entropy,
                                 double *integrated_dissipation);

/**
 * Check the run against the inequality ledger with default tolerances.
 * `passed` receives 1 when every entry holds, 0 otherwise; the rendered
 * ledger is copied into `buf` with the [`fl_last_error`] convention when non-null.
 *
 * # Safety
 * `run` must be a live handle, `passed` valid, `buf` null or `len` writable bytes.
 */
FlStatus fl_run_verify(const FlRun *run, int32_t *passed, char *buf, size_t len);

/**
 * Kinetic runs over the configured epsilon list and the rate fit.
 *
 * # Safety
 * `cfg` must be a live handle, `out_dir` null or NUL-terminated, `out` valid.
 */
FlStatus fl_sweep_run(const FlConfig *cfg, const char *out_dir, FlSweep **out);

/**
 * Release a sweep. Null is ignored.
 *
 * # Safety
 * `sweep` must come from [`fl_sweep_run`] and not be used afterwards.
 */
void fl_sweep_free(FlSweep *sweep);

/**
 * Number of sweep points (0 for null).
 *
 * # Safety
 * `sweep` must be null or a live handle.
 */
size_t fl_sweep_point_count(const FlSweep *sweep);

/**
 * # Safety
 * `sweep` must be a live handle and `out` valid.
 */
FlStatus fl_sweep_point(const FlSweep *sweep, size_t index, FlSweepPoint *out);

/**
 * The fit over all points (`largest3 == 0`) or over the three largest epsilons.
 *
 * # Safety
 * `sweep` must be a live handle and `out` valid.
 */
FlStatus fl_sweep_fit(const FlSweep *sweep, int32_t largest3, FlRateFit *out);

/**
 * Fit `log error = slope log eps + intercept` to `len` points.
 *
 * # Safety
 * `epsilon` and `error` must point to `len` doubles; `out` must be valid.
 */
FlStatus fl_fit_rate(const double *epsilon, const double *error, size_t len, FlRateFit *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FLOCKLAB_H */
