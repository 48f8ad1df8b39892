#ifndef ACTIVE_RECON_H
#define ACTIVE_RECON_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum ArStatus {
  AR_STATUS_OK = 0,
  AR_STATUS_NULL_POINTER = 1,
  AR_STATUS_INVALID_ARGUMENT = 2,
  AR_STATUS_IO = 3,
  AR_STATUS_PARSE = 4,
  AR_STATUS_GEOMETRY = 5,
  AR_STATUS_SOLVE = 6,
  AR_STATUS_COVERAGE = 7,
  AR_STATUS_PLANNING = 8,
  AR_STATUS_EVALUATION = 9,
  AR_STATUS_PANIC = 10,
} ArStatus;

typedef enum ArTermination {
  AR_TERMINATION_FULLY_COVERED = 0,
  AR_TERMINATION_NO_REACHABLE_NBV = 1,
  AR_TERMINATION_MAX_ITERATIONS = 2,
} ArTermination;

typedef enum ArLabel {
  AR_LABEL_COVERED = 0,
  AR_LABEL_UNCOVERED = 1,
  AR_LABEL_IGNORED = 2,
} ArLabel;

/**
 * Loop parameters.
 */
typedef struct ArConfig ArConfig;

/**
 * Labeled iso-points.
 */
typedef struct ArCoverage ArCoverage;

/**
 * Result of a closed-loop run.
 */
typedef struct ArSimulation ArSimulation;

/**
 * Fused triangle soup.
 */
typedef struct ArSurface ArSurface;

/**
 * Label counts; `fraction` is NaN when nothing is covered or uncovered.
 */
typedef struct ArCoverageSummary {
  size_t covered;
  size_t uncovered;
  size_t ignored;
  double fraction;
} ArCoverageSummary;

typedef struct ArIsoPoint {
  double position[3];
  double normal[3];
  double signal;
  enum ArLabel label;
  size_t good_views;
} ArIsoPoint;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or null. Valid until the
 * next call into the library on the same thread.
 */
const char *ar_last_error(void);

/**
 * # Safety
 * `s` must come from this library and not have been freed.
 */
void ar_string_free(char *s);

/**
 * Library version, static storage.
 */
const char *ar_version(void);

/**
 * Γ for the given mean errors and scales.
 */
double ar_confidence(double e_p,
                     double e_n,
                     double e_v,
                     double sigma_p,
                     double sigma_n,
                     double sigma_v);

/**
 * # Safety
 * `out` must be writable.
 */
enum ArStatus ar_config_new(struct ArConfig **out);

/**
 * Config from JSON; missing fields take defaults.
 *
 * # Safety
 * `json` must be a NUL-terminated string, `out` writable.
 */
enum ArStatus ar_config_from_json(const char *json, struct ArConfig **out);

/**
 * # Safety
 * `cfg` must be a live handle, `out` writable. Free the string with
 * [`ar_string_free`].
 */
enum ArStatus ar_config_to_json(const struct ArConfig *cfg, char **out);

/**
 * # Safety
 * `cfg` must be a live handle.
 */
enum ArStatus ar_config_set_seed(struct ArConfig *cfg, uint64_t seed);

/**
 * # Safety
 * `cfg` must be a live handle.
 */
enum ArStatus ar_config_set_max_iterations(struct ArConfig *cfg, size_t n);

/**
 * # Safety
 * `cfg` must be null or a handle not yet freed.
 */
void ar_config_free(struct ArConfig *cfg);

/**
 * Runs the capture loop from the configured orbit. `scene_json` may be null
 * for the built-in box-with-overhang scene.
 *
 * # Safety
 * `cfg` must be a live handle, `scene_json` null or NUL-terminated, `out`
 * writable.
 */
enum ArStatus ar_simulate(const struct ArConfig *cfg,
                          const char *scene_json,
                          struct ArSimulation **out);

/**
 * Number of recorded iterations (the initial orbit counts as one).
 *
 * # Safety
 * `sim` must be a live handle.
 */
size_t ar_simulation_iteration_count(const struct ArSimulation *sim);

/**
 * # Safety
 * `sim` must be a live handle, `out` writable.
 */
enum ArStatus ar_simulation_summary(const struct ArSimulation *sim,
                                    size_t iteration,
                                    struct ArCoverageSummary *out);

/**
 * Pitch of the plane chosen after `iteration`, degrees; NaN when none was.
 *
 * # Safety
 * `sim` must be a live handle, `out` writable.
 */
enum ArStatus ar_simulation_selected_pitch(const struct ArSimulation *sim,
                                           size_t iteration,
                                           double *out);

/**
 * # Safety
 * `sim` must be a live handle, `out` writable.
 */
enum ArStatus ar_simulation_termination(const struct ArSimulation *sim, enum ArTermination *out);

/**
 * Per-iteration metrics as JSON. Free with [`ar_string_free`].
 *
 * # Safety
 * `sim` must be a live handle, `out` writable.
 */
enum ArStatus ar_simulation_metrics_json(const struct ArSimulation *sim, char **out);

/**
 * Writes all iteration outputs under `dir`.
 *
 * # Safety
 * `sim` must be a live handle, `dir` NUL-terminated.
 */
enum ArStatus ar_simulation_write(const struct ArSimulation *sim, const char *dir);

/**
 * Copy of the fused surface after `iteration`.
 *
 * # Safety
 * `sim` must be a live handle, `out` writable.
 */
enum ArStatus ar_simulation_surface(const struct ArSimulation *sim,
                                    size_t iteration,
                                    struct ArSurface **out);

/**
 * # Safety
 * `sim` must be null or a handle not yet freed.
 */
void ar_simulation_free(struct ArSimulation *sim);

/**
 * Reads a fused surface PLY (ASCII or binary).
 *
 * # Safety
 * `path` must be NUL-terminated, `out` writable.
 */
enum ArStatus ar_surface_read_ply(const char *path, struct ArSurface **out);

/**
 * # Safety
 * `surface` must be a live handle.
 */
size_t ar_surface_triangle_count(const struct ArSurface *surface);

/**
 * # Safety
 * `surface` must be null or a handle not yet freed.
 */
void ar_surface_free(struct ArSurface *surface);

/**
 * Samples and labels `surface` against cameras given as a JSON array of
 * camera records, using the config's coverage parameters.
 *
 * # Safety
 * Handles must be live, `cameras_json` NUL-terminated, `out` writable.
 */
enum ArStatus ar_coverage_compute(const struct ArSurface *surface,
                                  const char *cameras_json,
                                  const struct ArConfig *cfg,
                                  struct ArCoverage **out);

/**
 * # Safety
 * `coverage` must be a live handle, `out` writable.
 */
enum ArStatus ar_coverage_summary(const struct ArCoverage *coverage, struct ArCoverageSummary *out);

/**
 * # Safety
 * `coverage` must be a live handle.
 */
size_t ar_coverage_point_count(const struct ArCoverage *coverage);

/**
 * # Safety
 * `coverage` must be a live handle, `out` writable.
 */
enum ArStatus ar_coverage_point(const struct ArCoverage *coverage,
                                size_t index,
                                struct ArIsoPoint *out);

/**
 * # Safety
 * `coverage` must be null or a handle not yet freed.
 */
void ar_coverage_free(struct ArCoverage *coverage);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ACTIVE_RECON_H */
