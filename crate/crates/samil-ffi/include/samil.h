#ifndef SAMIL_FFI_H
#define SAMIL_FFI_H

/* Generated by cbindgen from the samil-ffi crate; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

#define SAMIL_OK 0

// A required pointer argument was null.
#define SAMIL_ERR_NULL 1

// A string argument was not valid UTF-8.
#define SAMIL_ERR_UTF8 2

#define SAMIL_ERR_IO 3

#define SAMIL_ERR_FORMAT 4

#define SAMIL_ERR_CONFIG 5

#define SAMIL_ERR_DOMAIN 6

#define SAMIL_ERR_SHAPE 7

#define SAMIL_ERR_NONFINITE 8

#define SAMIL_ERR_DEGENERATE 9

// An internal panic was caught at the boundary.
#define SAMIL_ERR_PANIC 10

// A loaded dataset (opaque).
typedef struct SamilDataset SamilDataset;

// A trained model ready for prediction (opaque).
typedef struct SamilModel SamilModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Text of the last failure on this thread; empty string if none. The
// pointer stays valid until the next failing call on the same thread.
const char *samil_last_error(void);

// Crate version as a static string.
const char *samil_version(void);

// Opens a dataset file. On success stores a fresh handle in `out`.
//
// # Safety
// `path` must be a valid NUL-terminated string; `out` must be writable.
int32_t samil_dataset_open(const char *path, struct SamilDataset **out);

// Frees a dataset handle; a null pointer is a no-op.
//
// # Safety
// `ds` must be a pointer from `samil_dataset_open`, freed at most once.
void samil_dataset_free(struct SamilDataset *ds);

// Dataset fingerprint as hex; the pointer lives as long as the handle.
//
// # Safety
// `ds` must be a live dataset handle.
const char *samil_dataset_fingerprint(const struct SamilDataset *ds);

// Number of studies in a split (0 train, 1 val, 2 test, 3 unlabeled).
//
// # Safety
// `ds` must be a live dataset handle; `out` must be writable.
int32_t samil_dataset_split_len(const struct SamilDataset *ds, int32_t split, uintptr_t *out);

// Instance count of one study.
//
// # Safety
// `ds` must be a live dataset handle; `out` must be writable.
int32_t samil_dataset_study_k(const struct SamilDataset *ds,
                              int32_t split,
                              uintptr_t index,
                              uintptr_t *out);

// Loads a trained checkpoint. `experiment_toml` may be null for default
// settings; otherwise it must name the experiment file the checkpoint was
// trained under (the model shape comes from it).
//
// # Safety
// Strings must be valid or null as documented; `ds` must be a live handle;
// `out` must be writable.
int32_t samil_model_open(const char *checkpoint,
                         const char *experiment_toml,
                         const struct SamilDataset *ds,
                         struct SamilModel **out);

// Frees a model handle; a null pointer is a no-op.
//
// # Safety
// `m` must be a pointer from `samil_model_open`, freed at most once.
void samil_model_free(struct SamilModel *m);

// Classifies one study: writes three class probabilities and the argmax
// label.
//
// # Safety
// Handles must be live; `probs_out` must hold 3 doubles; `label_out` must
// be writable.
int32_t samil_model_predict(const struct SamilModel *m,
                            const struct SamilDataset *ds,
                            int32_t split,
                            uintptr_t index,
                            double *probs_out,
                            int32_t *label_out);

// Writes the final pooling attention of one study into `buf`. `k_out`
// always receives the instance count; a too-small buffer is a shape error.
//
// # Safety
// Handles must be live; `buf` must hold `buf_len` doubles; `k_out` must be
// writable.
int32_t samil_model_attention(const struct SamilModel *m,
                              const struct SamilDataset *ds,
                              int32_t split,
                              uintptr_t index,
                              double *buf,
                              uintptr_t buf_len,
                              uintptr_t *k_out);

// Balanced accuracy of the model over a labeled split.
//
// # Safety
// Handles must be live; `out` must be writable.
int32_t samil_model_balanced_accuracy(const struct SamilModel *m,
                                      const struct SamilDataset *ds,
                                      int32_t split,
                                      double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SAMIL_FFI_H */
