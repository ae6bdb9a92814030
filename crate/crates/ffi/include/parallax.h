#ifndef PARALLAX_H
#define PARALLAX_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Synthetic scene families understood by `px_sample_generate`.
enum PxPreset
#ifdef __cplusplus
  : int32_t
#endif // __cplusplus
 {
  PX_PRESET_STANDARD = 0,
  PX_PRESET_RANDOM = 1,
};
#ifndef __cplusplus
typedef int32_t PxPreset;
#endif // __cplusplus

// Ground-truth maps selectable through `px_sample_map`.
enum PxSampleMap
#ifdef __cplusplus
  : int32_t
#endif // __cplusplus
 {
  PX_SAMPLE_MAP_GAMMA = 0,
  PX_SAMPLE_MAP_DEPTH = 1,
  PX_SAMPLE_MAP_HEIGHT = 2,
};
#ifndef __cplusplus
typedef int32_t PxSampleMap;
#endif // __cplusplus

// Result code of every fallible call.
enum PxStatus
#ifdef __cplusplus
  : int32_t
#endif // __cplusplus
 {
  PX_STATUS_OK = 0,
  PX_STATUS_NULL_POINTER = 1,
  PX_STATUS_INVALID_UTF8 = 2,
  PX_STATUS_PANIC = 3,
  PX_STATUS_NON_POSITIVE_DEPTH = 10,
  PX_STATUS_DEGENERATE_PLANE = 11,
  PX_STATUS_MAPS_TO_INFINITY = 12,
  PX_STATUS_PARALLAX_SINGULARITY = 13,
  PX_STATUS_GRID_MISMATCH = 14,
  PX_STATUS_SINGULAR_HOMOGRAPHY = 15,
  PX_STATUS_DEGENERATE_INPUT = 16,
  PX_STATUS_NO_CONSENSUS = 17,
  PX_STATUS_EPIPOLE_DEGENERACY = 18,
  PX_STATUS_SINGULAR_RATIO = 19,
  PX_STATUS_ZERO_TRANSLATION = 20,
  PX_STATUS_PATCH_TOO_LARGE = 21,
  PX_STATUS_EMPTY_MASK = 22,
  PX_STATUS_EMPTY_BUCKET = 23,
  PX_STATUS_SHAPE_MISMATCH = 24,
  PX_STATUS_INVALID_PARAMETER = 25,
  PX_STATUS_MALFORMED_HEADER = 26,
  PX_STATUS_SIZE_MISMATCH = 27,
  PX_STATUS_MISSING_FILE = 28,
  PX_STATUS_INCONGRUENT_GRIDS = 29,
  PX_STATUS_IO_FAILURE = 30,
  PX_STATUS_JSON = 31,
};
#ifndef __cplusplus
typedef int32_t PxStatus;
#endif // __cplusplus

// Residual-flow field with per-cell validity.
typedef struct PxFlowField PxFlowField;

// A two-view dataset sample with its ground truth.
typedef struct PxSample PxSample;

// Scalar map (gamma, depth or height) with per-cell validity.
typedef struct PxScalarMap PxScalarMap;

// Output of the closed-form gamma solver.
typedef struct PxSolverReport PxSolverReport;

// Pinhole intrinsics; pixel centers sit on integer coordinates.
typedef struct PxCamera {
  double fx;
  double fy;
  double cx;
  double cy;
  size_t width;
  size_t height;
} PxCamera;

// Source-to-target rigid motion `P_t = R P_s + T`, `R` row-major.
typedef struct PxMotion {
  double rotation[9];
  double translation[3];
} PxMotion;

// Plane `N . P = h_c` with unit normal `N` and camera height `h_c > 0`.
typedef struct PxPlane {
  double normal[3];
  double camera_height;
} PxPlane;

// Cell counts of a solver run.
typedef struct PxSolverCounts {
  size_t solved;
  size_t degenerate_epipole;
  size_t singular;
} PxSolverCounts;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *px_version(void);

// Copies the calling thread's last error message (NUL-terminated, truncated
// to fit) into `buf` and returns the full message length excluding the NUL.
// Call with `buf = NULL, len = 0` to query the length.
//
// # Safety
// `buf` must be NULL or point to `len` writable bytes.
size_t px_last_error_message(char *buf, size_t len);

// Plane-induced homography `K (R + T N^T / h_c) K^-1`, row-major, mapping
// source pixels to target pixels.
//
// # Safety
// Pointers must be valid; `out` must hold 9 doubles.
PxStatus px_homography(const struct PxCamera *camera,
                       const struct PxMotion *motion,
                       const struct PxPlane *plane,
                       double *out_h);

// Applies a row-major homography to pixel `(x, y)`.
//
// # Safety
// `h` must hold 9 doubles, `out_xy` 2.
PxStatus px_apply_homography(const double *h, double x, double y, double *out_xy);

// Epipole `K T / T_z`; `*out_defined` is 0 (and `out_xy` untouched) when `T_z` is ~0.
//
// # Safety
// Pointers must be valid; `out_xy` must hold 2 doubles.
PxStatus px_epipole(const struct PxCamera *camera,
                    const struct PxMotion *motion,
                    double *out_xy,
                    int32_t *out_defined);

// Re-expresses a source-frame plane in the target frame of `motion`; depth
// recovery on the target grid needs this form.
//
// # Safety
// Pointers must be valid.
PxStatus px_plane_in_target_frame(const struct PxPlane *plane,
                                  const struct PxMotion *motion,
                                  struct PxPlane *out_plane);

// Creates a `width x height` scalar map. `valid` may be NULL (all valid);
// otherwise nonzero bytes mark valid cells.
//
// # Safety
// `values` must hold `width * height` doubles, `valid` (if not NULL) as many bytes.
PxStatus px_scalar_map_new(size_t width,
                           size_t height,
                           const double *values,
                           const uint8_t *valid,
                           struct PxScalarMap **out_map);

// # Safety
// `map` must be NULL or a handle from this library not yet freed.
void px_scalar_map_free(struct PxScalarMap *map);

// Writes the map's width and height.
//
// # Safety
// Pointers must be valid.
PxStatus px_scalar_map_size(const struct PxScalarMap *map, size_t *out_width, size_t *out_height);

// Copies values and validity out. Invalid cells read as NaN. Either output
// may be NULL; `len` must equal `width * height`.
//
// # Safety
// Non-NULL outputs must hold `len` elements.
PxStatus px_scalar_map_copy(const struct PxScalarMap *map,
                            double *out_values,
                            uint8_t *out_valid,
                            size_t len);

// Creates a flow field from interleaved `(u, v)` pairs (`2 * width * height`
// doubles). `valid` may be NULL (all valid).
//
// # Safety
// Buffers must have the stated lengths.
PxStatus px_flow_field_new(size_t width,
                           size_t height,
                           const double *uv,
                           const uint8_t *valid,
                           struct PxFlowField **out_flow);

// # Safety
// `flow` must be NULL or a handle from this library not yet freed.
void px_flow_field_free(struct PxFlowField *flow);

// # Safety
// Pointers must be valid.
PxStatus px_flow_field_size(const struct PxFlowField *flow, size_t *out_width, size_t *out_height);

// Copies interleaved `(u, v)` (NaN on invalid cells) and validity out.
// `cells` must equal `width * height`; `out_uv` then holds `2 * cells` doubles.
//
// # Safety
// Non-NULL outputs must have the stated lengths.
PxStatus px_flow_field_copy(const struct PxFlowField *flow,
                            double *out_uv,
                            uint8_t *out_valid,
                            size_t cells);

// Dense residual flow `p - p^w` implied by a target-grid gamma map.
//
// # Safety
// Pointers must be valid.
PxStatus px_residual_flow_map(const struct PxScalarMap *gamma,
                              const struct PxCamera *camera,
                              const struct PxMotion *motion,
                              const struct PxPlane *plane,
                              struct PxFlowField **out_flow);

// Closed-form gamma from residual flow.
//
// # Safety
// Pointers must be valid.
PxStatus px_solve_gamma_map(const struct PxFlowField *flow,
                            const struct PxCamera *camera,
                            const struct PxMotion *motion,
                            const struct PxPlane *plane,
                            struct PxSolverReport **out_report);

// # Safety
// `report` must be NULL or a handle from this library not yet freed.
void px_solver_report_free(struct PxSolverReport *report);

// # Safety
// Pointers must be valid.
PxStatus px_solver_report_counts(const struct PxSolverReport *report,
                                 struct PxSolverCounts *out_counts);

// New handle holding a copy of the solved gamma map.
//
// # Safety
// Pointers must be valid.
PxStatus px_solver_report_gamma(const struct PxSolverReport *report, struct PxScalarMap **out_map);

// New handle holding a copy of the orthogonal (off-epipolar-line) residual.
//
// # Safety
// Pointers must be valid.
PxStatus px_solver_report_orthogonal_residual(const struct PxSolverReport *report,
                                              struct PxScalarMap **out_map);

// Depth `Z = h_c / (gamma + N . K^-1 p)`. `plane` must be in the frame of the
// grid's camera (see `px_plane_in_target_frame`).
//
// # Safety
// Pointers must be valid.
PxStatus px_depth_from_gamma(const struct PxScalarMap *gamma,
                             const struct PxPlane *plane,
                             const struct PxCamera *camera,
                             struct PxScalarMap **out_depth);

// Height `h = gamma Z` on jointly valid cells.
//
// # Safety
// Pointers must be valid.
PxStatus px_height_from_gamma(const struct PxScalarMap *gamma,
                              const struct PxScalarMap *depth,
                              struct PxScalarMap **out_height);

// Renders a synthetic scene and its ground truth. `preset` is a `PxPreset` value.
//
// # Safety
// `out_sample` must be valid.
PxStatus px_sample_generate(int32_t preset,
                            uint64_t seed,
                            size_t width,
                            size_t height,
                            struct PxSample **out_sample);

// Reads a sample directory written by `px_sample_write` or `parallax gen`.
//
// # Safety
// `dir` must be a NUL-terminated string; `out_sample` must be valid.
PxStatus px_sample_read(const char *dir, struct PxSample **out_sample);

// # Safety
// `dir` must be a NUL-terminated string; `sample` a live handle.
PxStatus px_sample_write(const struct PxSample *sample, const char *dir);

// # Safety
// `sample` must be NULL or a handle from this library not yet freed.
void px_sample_free(struct PxSample *sample);

// Camera, motion and (source-frame) plane of a sample. Any output may be NULL.
//
// # Safety
// `sample` must be a live handle; non-NULL outputs must be valid.
PxStatus px_sample_geometry(const struct PxSample *sample,
                            struct PxCamera *out_camera,
                            struct PxMotion *out_motion,
                            struct PxPlane *out_plane);

// New handle holding a copy of one ground-truth scalar map; `which` is a `PxSampleMap` value.
//
// # Safety
// Pointers must be valid.
PxStatus px_sample_map(const struct PxSample *sample, int32_t which, struct PxScalarMap **out_map);

// New handle holding a copy of the ground-truth residual flow.
//
// # Safety
// Pointers must be valid.
PxStatus px_sample_residual_flow(const struct PxSample *sample, struct PxFlowField **out_flow);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PARALLAX_H */
