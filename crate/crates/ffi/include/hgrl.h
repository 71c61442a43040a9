#ifndef HGRL_H
#define HGRL_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum HgrlStatus {
  HGRL_STATUS_OK = 0,
  HGRL_STATUS_NULL_POINTER = 1,
  HGRL_STATUS_INVALID_ARGUMENT = 2,
  HGRL_STATUS_IO = 3,
  HGRL_STATUS_FORMAT = 4,
  HGRL_STATUS_SHAPE_MISMATCH = 5,
  HGRL_STATUS_INTERNAL = 6,
} HgrlStatus;

/**
 * Opaque model handle.
 */
typedef struct HgrlModel HgrlModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or null. Valid until the
 * next call on the same thread.
 */
const char *hgrl_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *hgrl_version(void);

/**
 * Builds a model with default settings for `variant` ("fAR", "fcAR-UL",
 * "fcAR-SL", "dnn" or "cnn") and log-mel inputs of `frames x n_mels`.
 *
 * # Safety
 * `variant` must be a NUL-terminated string and `out` a valid pointer.
 */
enum HgrlStatus hgrl_model_new(const char *variant,
                               size_t frames,
                               size_t n_mels,
                               uint64_t seed,
                               struct HgrlModel **out);

/**
 * Builds the model described by a TOML run config.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum HgrlStatus hgrl_model_from_config(const char *path, struct HgrlModel **out);

/**
 * Releases a handle; null is ignored.
 *
 * # Safety
 * `m` must be null or a handle not yet freed.
 */
void hgrl_model_free(struct HgrlModel *m);

/**
 * # Safety
 * `m` must be a live handle; the out pointers must be valid.
 */
enum HgrlStatus hgrl_model_input_shape(struct HgrlModel *m, size_t *frames, size_t *n_mels);

/**
 * Number of trainable scalars.
 *
 * # Safety
 * `m` must be a live handle and `out` a valid pointer.
 */
enum HgrlStatus hgrl_model_num_params(struct HgrlModel *m, size_t *out);

/**
 * Non-zero when the model has coarse outputs.
 *
 * # Safety
 * `m` must be a live handle and `out` a valid pointer.
 */
enum HgrlStatus hgrl_model_has_coarse(struct HgrlModel *m, int32_t *out);

/**
 * Loads an HGRLW1 file. With `allow_partial` non-zero only conv-block
 * entries are read; otherwise names and shapes must match exactly.
 *
 * # Safety
 * `m` must be a live handle and `path` a NUL-terminated string.
 */
enum HgrlStatus hgrl_model_load_weights(struct HgrlModel *m,
                                        const char *path,
                                        int32_t allow_partial);

/**
 * # Safety
 * `m` must be a live handle and `path` a NUL-terminated string.
 */
enum HgrlStatus hgrl_model_save_weights(struct HgrlModel *m, const char *path);

/**
 * Eval-mode predictions for `batch` log-mel inputs stored row-major as
 * `batch x frames x n_mels`.
 *
 * Writes `batch x 24` event probabilities to `fae`, `batch x 7` coarse
 * probabilities to `cae` (skipped when null or when the model has none) and
 * `batch` ratings to `ar`. Null output pointers are skipped.
 *
 * # Safety
 * `features` must hold `batch * frames * n_mels` floats and each non-null
 * output must have room for its values.
 */
enum HgrlStatus hgrl_model_predict(struct HgrlModel *m,
                                   const float *features,
                                   size_t batch,
                                   float *fae,
                                   float *cae,
                                   float *ar);

/**
 * Featurizes a WAV file with the model's feature settings and predicts it.
 * Outputs are as for [`hgrl_model_predict`] with a batch of one.
 *
 * # Safety
 * `m` must be a live handle, `path` a NUL-terminated string and each
 * non-null output large enough.
 */
enum HgrlStatus hgrl_model_predict_wav(struct HgrlModel *m,
                                       const char *path,
                                       float *fae,
                                       float *cae,
                                       float *ar);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* HGRL_H */
