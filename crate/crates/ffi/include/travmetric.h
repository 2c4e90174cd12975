#ifndef TRAVMETRIC_H
#define TRAVMETRIC_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Label codes accepted by [`tm_evaluate`].
#define TM_LABEL_NEGATIVE 0

#define TM_LABEL_POSITIVE 1

#define TM_LABEL_UNLABELED 2

// TPE weighting codes accepted by [`tm_evaluate`].
// False positives weigh `1 - t`, the formula as printed.
#define TM_TPE_AS_PRINTED 0

// False positives weigh `t`.
#define TM_TPE_TRAVERSABILITY_WEIGHTED 1

// Result of every fallible call.
typedef enum TmStatus {
  TM_STATUS_OK = 0,
  // A required pointer argument was null.
  TM_STATUS_NULL_POINTER = 1,
  // An argument value is out of range (bad label code, non-UTF-8 path, ...).
  TM_STATUS_INVALID_ARGUMENT = 2,
  // File could not be read.
  TM_STATUS_IO = 3,
  // File content is malformed.
  TM_STATUS_PARSE = 4,
  // Data violates a precondition (too few points, dimension mismatch, ...).
  TM_STATUS_DATA = 5,
  // Configuration rejected.
  TM_STATUS_CONFIG = 6,
  // Non-finite values during computation.
  TM_STATUS_NUMERIC = 7,
  // Internal error; the library caught a panic.
  TM_STATUS_INTERNAL = 8,
} TmStatus;

// Opaque handle to a loaded checkpoint.
typedef struct TmModel TmModel;

// Pooled evaluation over one array of points. IoU fields are NaN when the
// class is absent from the labels.
typedef struct TmMetrics {
  uint64_t tp;
  uint64_t tn;
  uint64_t fp;
  uint64_t fn_;
  double tpe;
  double iou_positive;
  double iou_negative;
  double miou;
} TmMetrics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or null. The pointer stays
// valid until the next call into the library on the same thread.
const char *tm_last_error(void);

// Library version as a static NUL-terminated string.
const char *tm_version(void);

// Loads a checkpoint file. On success `*out` receives a new handle.
//
// # Safety
// `path` must be a NUL-terminated string and `out` a valid pointer.
enum TmStatus tm_model_load(const char *path, struct TmModel **out);

// Releases a handle. Null is ignored.
//
// # Safety
// `model` must come from [`tm_model_load`] and not have been freed.
void tm_model_free(struct TmModel *model);

// Embedding dimension, or 0 for a null handle.
//
// # Safety
// `model` must be null or a live handle.
size_t tm_model_embed_dim(const struct TmModel *model);

// Proxies per class, or 0 for a null handle.
//
// # Safety
// `model` must be null or a live handle.
size_t tm_model_proxies(const struct TmModel *model);

// Neighbourhood size the encoder needs; clouds must hold at least this many points.
//
// # Safety
// `model` must be null or a live handle.
size_t tm_model_min_points(const struct TmModel *model);

// Segments a point cloud given as `n_points` interleaved `x y z` triples.
//
// Writes per point: `out_s` 1 traversable / 0 not, `out_t` the regressed
// traversability in (0,1), and, if `out_masked` is non-null, `t * s`.
//
// # Safety
// `xyz` must hold `3 * n_points` doubles; `out_s` and `out_t` (and
// `out_masked` when non-null) must hold `n_points` elements.
enum TmStatus tm_model_infer(const struct TmModel *model,
                             const double *xyz,
                             size_t n_points,
                             uint8_t *out_s,
                             double *out_t,
                             double *out_masked);

// Computes TPE and IoU for `n` points. `s` holds 0/1 decisions, `t`
// traversability, `labels` the `TM_LABEL_*` codes; unlabeled points are
// ignored. `variant` is one of the `TM_TPE_*` codes.
//
// # Safety
// `s`, `t` and `labels` must hold `n` elements; `out` must be valid.
enum TmStatus tm_evaluate(const uint8_t *s,
                          const double *t,
                          const uint8_t *labels,
                          size_t n,
                          uint32_t variant,
                          struct TmMetrics *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TRAVMETRIC_H */
