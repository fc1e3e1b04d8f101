#ifndef MINICONVNET_H
#define MINICONVNET_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Model architectures accepted by [`mcn_model_build`].
 */
typedef enum McnArch {
  MCN_ARCH_VGG16 = 0,
  MCN_ARCH_VGG_MINI = 1,
} McnArch;

/**
 * Status codes returned by every fallible function.
 */
typedef enum McnStatus {
  MCN_STATUS_OK = 0,
  MCN_STATUS_NULL_POINTER = 1,
  MCN_STATUS_INVALID_ARGUMENT = 2,
  MCN_STATUS_SHAPE = 3,
  MCN_STATUS_FORMAT = 4,
  MCN_STATUS_IO = 5,
  MCN_STATUS_NUMERIC = 6,
  MCN_STATUS_BUFFER_TOO_SMALL = 7,
  MCN_STATUS_PANIC = 8,
  MCN_STATUS_OTHER = 9,
} McnStatus;

/**
 * Opaque model handle.
 */
typedef struct McnModel McnModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Build a freshly initialized model. Writes the new handle to `*out`.
 *
 * # Safety
 * `out` must be a valid pointer to writable storage for one handle.
 */
enum McnStatus mcn_model_build(enum McnArch arch,
                               size_t height,
                               size_t width,
                               size_t channels,
                               size_t class_count,
                               uint64_t seed,
                               struct McnModel **out);

/**
 * Load a weight file, rebuilding the architecture it describes.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum McnStatus mcn_model_load(const char *path, struct McnModel **out);

/**
 * Save the model's weights.
 *
 * # Safety
 * `model` must be a live handle and `path` a NUL-terminated string.
 */
enum McnStatus mcn_model_save(const struct McnModel *model, const char *path);

/**
 * Write the model input shape as height, width, channels.
 *
 * # Safety
 * `model` must be a live handle; `dims` must point to three writable `size_t`.
 */
enum McnStatus mcn_model_input_shape(const struct McnModel *model, size_t *dims);

/**
 * Number of output classes, or 0 for a null handle.
 *
 * # Safety
 * `model` must be null or a live handle.
 */
size_t mcn_model_class_count(const struct McnModel *model);

/**
 * Classify one preprocessed image: `len` floats in `[0, 1]`, laid out
 * height × width × channels to match the model input shape. `probs` may be
 * null; otherwise it receives `class_count` probabilities.
 *
 * # Safety
 * `pixels` must point to `len` floats; `probs` to `probs_len` writable
 * floats or null; `label` to a writable `size_t` or null.
 */
enum McnStatus mcn_model_predict(const struct McnModel *model,
                                 const float *pixels,
                                 size_t len,
                                 float *probs,
                                 size_t probs_len,
                                 size_t *label);

/**
 * Classify a PPM file. When `keypoints` is non-null the image is first
 * cropped around the landmarks with the given margin fraction.
 *
 * # Safety
 * Paths must be NUL-terminated strings (`keypoints` may be null); output
 * pointers as for [`mcn_model_predict`].
 */
enum McnStatus mcn_predict_ppm(const struct McnModel *model,
                               const char *image_path,
                               const char *keypoints,
                               double margin,
                               float *probs,
                               size_t probs_len,
                               size_t *label);

/**
 * Release a model handle. Null is ignored.
 *
 * # Safety
 * `model` must be null or a handle not yet freed.
 */
void mcn_model_free(struct McnModel *model);

/**
 * Message for the last failed call on this thread, or null. Valid until
 * the next call into the library from the same thread.
 */
const char *mcn_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *mcn_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MINICONVNET_H */
