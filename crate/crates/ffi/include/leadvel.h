#ifndef LEADVEL_H
#define LEADVEL_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum LvStatus {
  LV_STATUS_OK = 0,
  // A required pointer argument was NULL.
  LV_STATUS_NULL_ARGUMENT = 1,
  // Bad enum value, non-UTF-8 path or invalid configuration.
  LV_STATUS_INVALID_ARGUMENT = 2,
  // The output buffer holds fewer elements than the result.
  LV_STATUS_BUFFER_TOO_SMALL = 3,
  // Missing or malformed input data.
  LV_STATUS_DATA_ERROR = 4,
  // A bug in the library, including a caught panic.
  LV_STATUS_INTERNAL_ERROR = 5,
} LvStatus;

typedef enum LvTracker {
  LV_TRACKER_ORACLE = 0,
  LV_TRACKER_NCC = 1,
} LvTracker;

typedef enum LvEstimator {
  LV_ESTIMATOR_MODE = 0,
  LV_ESTIMATOR_KDE = 1,
  LV_ESTIMATOR_RESAMPLED = 2,
} LvEstimator;

// A trained velocity regressor.
typedef struct LvModel LvModel;

// A loaded scene directory.
typedef struct LvScene LvScene;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failure on this thread, or NULL. The pointer stays
// valid until the next failing call on the same thread.
const char *lv_last_error(void);

// Loads a scene directory (`scene.json` plus rasters).
//
// # Safety
// `path` must be a NUL-terminated string and `out` a writable pointer.
enum LvStatus lv_scene_load(const char *path, struct LvScene **out);

// # Safety
// `scene` must come from [`lv_scene_load`] and not be used afterwards.
void lv_scene_free(struct LvScene *scene);

// Number of frames; 0 for NULL.
//
// # Safety
// `scene` must be NULL or a live handle.
size_t lv_scene_frame_count(const struct LvScene *scene);

// Ground-truth lead velocity per frame. Fails with `DataError` if any
// frame lacks it.
//
// # Safety
// `scene` must be a live handle and `out` must hold `capacity` doubles.
enum LvStatus lv_scene_truth(const struct LvScene *scene, double *out, size_t capacity);

// Per-frame lead distance in metres. `tracker_kind` is an [`LvTracker`]
// and `estimator_kind` an [`LvEstimator`] value.
//
// # Safety
// `scene` must be a live handle and `out` must hold `capacity` doubles.
enum LvStatus lv_scene_distances(const struct LvScene *scene,
                                 uint32_t tracker_kind,
                                 uint32_t estimator_kind,
                                 double *out,
                                 size_t capacity);

// Per-frame lead velocity. A NULL `model` selects gap arithmetic; the
// kind arguments are as for [`lv_scene_distances`].
//
// # Safety
// `scene` must be a live handle, `model` NULL or a live handle, and `out`
// must hold `capacity` doubles.
enum LvStatus lv_scene_predict(const struct LvScene *scene,
                               const struct LvModel *model,
                               uint32_t tracker_kind,
                               uint32_t estimator_kind,
                               double *out,
                               size_t capacity);

// Aggregates one box worth of per-pixel distances into a single estimate.
// `estimator_kind` is an [`LvEstimator`] value.
//
// # Safety
// `samples` must hold `n` doubles and `out` must be writable.
enum LvStatus lv_estimate_distance(uint32_t estimator_kind,
                                   const double *samples,
                                   size_t n,
                                   double *out);

// `v_ego + (d_curr - d_prev) / dt`.
//
// # Safety
// `out` must be writable.
enum LvStatus lv_relative_velocity(double d_prev_m,
                                   double d_curr_m,
                                   double dt_s,
                                   double v_ego_mps,
                                   double *out);

// Loads a model file written by `leadvel train`.
//
// # Safety
// `path` must be a NUL-terminated string and `out` a writable pointer.
enum LvStatus lv_model_load(const char *path, struct LvModel **out);

// # Safety
// `model` must come from [`lv_model_load`] and not be used afterwards.
void lv_model_free(struct LvModel *model);

// Number of lagged velocity features the model expects; 0 for NULL.
//
// # Safety
// `model` must be NULL or a live handle.
size_t lv_model_lags(const struct LvModel *model);

// Root-mean-square error of `n` predictions against `n` truths.
//
// # Safety
// `predictions` and `truths` must hold `n` doubles and `out` be writable.
enum LvStatus lv_rmse(const double *predictions, const double *truths, size_t n, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* LEADVEL_H */
