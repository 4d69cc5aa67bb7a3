#ifndef TCDTRACK_H
#define TCDTRACK_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes returned by every fallible function.
 */
typedef enum TtStatus {
  TT_STATUS_OK = 0,
  TT_STATUS_NULL_POINTER = 1,
  /**
   * Empty or non-finite input, bad sizes or an invalid config value.
   */
  TT_STATUS_INVALID_ARGUMENT = 2,
  /**
   * Output buffer capacity is smaller than required.
   */
  TT_STATUS_BUFFER_TOO_SMALL = 3,
  TT_STATUS_IO = 4,
  /**
   * Malformed file contents.
   */
  TT_STATUS_FORMAT = 5,
  /**
   * Latent size or frame layout does not match the model.
   */
  TT_STATUS_MISMATCH = 6,
  /**
   * Wrong number of frames for the call.
   */
  TT_STATUS_PROTOCOL = 7,
  TT_STATUS_PANIC = 8,
  TT_STATUS_OTHER = 9,
} TtStatus;

typedef struct TtModel TtModel;

typedef struct TtPointCloud TtPointCloud;

typedef struct TtTrackingResult TtTrackingResult;

/**
 * Test-time latent fitting settings.
 */
typedef struct TtInferConfig {
  size_t iterations;
  double learning_rate;
  uint64_t seed;
} TtInferConfig;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *tt_version(void);

/**
 * Message for the last failed call on this thread, or null if none.
 * Valid until the next failing call on the same thread.
 */
const char *tt_last_error_message(void);

struct TtInferConfig tt_infer_config_default(void);

/**
 * Builds a cloud from `count` points stored as `x0 y0 z0 x1 ...`.
 *
 * # Safety
 * `xyz` must point to `3 * count` readable doubles; `out` must be writable.
 */
enum TtStatus tt_cloud_new(const double *xyz,
                           size_t count,
                           size_t frame_index,
                           struct TtPointCloud **out);

/**
 * Reads a whitespace-separated `.xyz` file.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum TtStatus tt_cloud_read_xyz(const char *path, size_t frame_index, struct TtPointCloud **out);

/**
 * Number of points, or 0 for a null handle.
 *
 * # Safety
 * `cloud` must be null or a live handle.
 */
size_t tt_cloud_len(const struct TtPointCloud *cloud);

/**
 * Copies the coordinates into `xyz`, which holds `capacity` doubles.
 *
 * # Safety
 * `cloud` must be a live handle and `xyz` must hold `capacity` writable doubles.
 */
enum TtStatus tt_cloud_copy_points(const struct TtPointCloud *cloud, double *xyz, size_t capacity);

/**
 * # Safety
 * `cloud` must be null or a handle not yet freed.
 */
void tt_cloud_free(struct TtPointCloud *cloud);

/**
 * Two-way Chamfer distance between `a` and `b`.
 *
 * # Safety
 * `a` and `b` must be live handles; `out` must be writable.
 */
enum TtStatus tt_chamfer(const struct TtPointCloud *a, const struct TtPointCloud *b, double *out);

/**
 * Gradient of the Chamfer distance w.r.t. the points of `a`, as `3 * len(a)` doubles.
 *
 * # Safety
 * `a` and `b` must be live handles; `grad` must hold `capacity` writable doubles.
 */
enum TtStatus tt_chamfer_gradient(const struct TtPointCloud *a,
                                  const struct TtPointCloud *b,
                                  double *grad,
                                  size_t capacity);

/**
 * Nearest point of `target` for each point of `transformed`.
 *
 * # Safety
 * Handles must be live; `matches` must hold `capacity` writable entries.
 */
enum TtStatus tt_extract_correspondence(const struct TtPointCloud *transformed,
                                        const struct TtPointCloud *target,
                                        size_t *matches,
                                        size_t capacity);

/**
 * Loads a `.ckpt` file written by training.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum TtStatus tt_model_load(const char *path, struct TtModel **out);

/**
 * # Safety
 * `model` must be null or a handle not yet freed.
 */
void tt_model_free(struct TtModel *model);

/**
 * Latent state size, or 0 for a null handle.
 *
 * # Safety
 * `model` must be null or a live handle.
 */
size_t tt_model_latent_dim(const struct TtModel *model);

/**
 * Learned mixing weight, or NaN for a null handle.
 *
 * # Safety
 * `model` must be null or a live handle.
 */
double tt_model_omega(const struct TtModel *model);

/**
 * Fits latent states to `count >= 2` frames and tracks each consecutive pair.
 * A null `config` uses the defaults.
 *
 * # Safety
 * `model` must be live, `frames` must point to `count` live handles and
 * `out` must be writable.
 */
enum TtStatus tt_track(const struct TtModel *model,
                       const struct TtPointCloud *const *frames,
                       size_t count,
                       const struct TtInferConfig *config,
                       struct TtTrackingResult **out);

/**
 * Predicts the frame after three observed frames.
 *
 * # Safety
 * As for [`tt_track`]; `count` must be 3 or the call fails with `Protocol`.
 */
enum TtStatus tt_forecast(const struct TtModel *model,
                          const struct TtPointCloud *const *frames,
                          size_t count,
                          const struct TtInferConfig *config,
                          struct TtPointCloud **out);

/**
 * Number of tracked pairs, or 0 for a null handle.
 *
 * # Safety
 * `result` must be null or a live handle.
 */
size_t tt_result_pairs(const struct TtTrackingResult *result);

/**
 * Chamfer distance of pair `pair` after displacement.
 *
 * # Safety
 * `result` must be live; `out` must be writable.
 */
enum TtStatus tt_result_chamfer(const struct TtTrackingResult *result, size_t pair, double *out);

/**
 * Correspondence indices of pair `pair` (one per source point).
 *
 * # Safety
 * `result` must be live; `matches` must hold `capacity` writable entries.
 */
enum TtStatus tt_result_matches(const struct TtTrackingResult *result,
                                size_t pair,
                                size_t *matches,
                                size_t capacity);

/**
 * A new cloud holding the displaced source of pair `pair`.
 *
 * # Safety
 * `result` must be live; `out` must be writable.
 */
enum TtStatus tt_result_transformed(const struct TtTrackingResult *result,
                                    size_t pair,
                                    struct TtPointCloud **out);

/**
 * # Safety
 * `result` must be null or a handle not yet freed.
 */
void tt_result_free(struct TtTrackingResult *result);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TCDTRACK_H */
