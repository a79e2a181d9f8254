#ifndef OFPNET_H
#define OFPNET_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Architecture preset for [`ofp_model_new`]: the full-size network.
 */
#define OFP_PRESET_FULL 0

/**
 * Architecture preset for [`ofp_model_new`]: the small single-core network.
 */
#define OFP_PRESET_DESK 1

/**
 * Result of every fallible call.
 */
typedef enum OfpStatus {
  OFP_STATUS_OK = 0,
  OFP_STATUS_NULL_POINTER = 1,
  OFP_STATUS_INVALID_ARGUMENT = 2,
  OFP_STATUS_IO = 3,
  OFP_STATUS_CHECKPOINT = 4,
  OFP_STATUS_SIZE = 5,
  OFP_STATUS_PANIC = 6,
  OFP_STATUS_INTERNAL = 7,
} OfpStatus;

/**
 * Opaque model handle.
 */
typedef struct OfpModel OfpModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Creates a freshly initialized model. `preset` is [`OFP_PRESET_FULL`] or
 * [`OFP_PRESET_DESK`]. A fresh model returns its input unchanged.
 *
 * # Safety
 * `out` must be a valid pointer to writable storage for one handle.
 */
enum OfpStatus ofp_model_new(uint32_t preset, uint64_t seed, struct OfpModel **out);

/**
 * Loads the model stored in a checkpoint file.
 *
 * # Safety
 * `path` must be a NUL-terminated UTF-8 string; `out` as in [`ofp_model_new`].
 */
enum OfpStatus ofp_model_load(const char *path, struct OfpModel **out);

/**
 * Releases a handle. Null is ignored.
 *
 * # Safety
 * `model` must be null or a handle from this library that was not freed.
 */
void ofp_model_free(struct OfpModel *model);

/**
 * Number of learnable scalars.
 *
 * # Safety
 * `model` must be a live handle and `out` writable.
 */
enum OfpStatus ofp_model_param_count(const struct OfpModel *model, size_t *out);

/**
 * Angular grid the model was built for.
 *
 * # Safety
 * `model` must be a live handle; `u` and `v` writable.
 */
enum OfpStatus ofp_model_angular_size(const struct OfpModel *model, size_t *u, size_t *v);

/**
 * Super-resolves a bicubically upsampled luma field. `lr` and `sr` both
 * hold `u * v * h * w` floats; `h` and `w` must be multiples of 4 and
 * `(u, v)` must match the model. `sr_len` guards the output size.
 *
 * # Safety
 * `model` must be a live handle, `lr` readable and `sr` writable for the
 * stated lengths. The buffers must not overlap.
 */
enum OfpStatus ofp_model_forward(const struct OfpModel *model,
                                 const float *lr,
                                 size_t u,
                                 size_t v,
                                 size_t h,
                                 size_t w,
                                 float *sr,
                                 size_t sr_len);

/**
 * Mean per-view PSNR in dB between two luma fields, peak 1.
 *
 * # Safety
 * `sr` and `gt` must each hold `u * v * h * w` readable floats; `out` writable.
 */
enum OfpStatus ofp_psnr_y(const float *sr,
                          const float *gt,
                          size_t u,
                          size_t v,
                          size_t h,
                          size_t w,
                          double *out);

/**
 * Message for the last failed call on this thread, or null. The pointer
 * stays valid until the next call into this library on the same thread.
 */
const char *ofp_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *ofp_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* OFPNET_H */
