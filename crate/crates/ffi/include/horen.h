#ifndef HOREN_H
#define HOREN_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum HorenStatus {
  HOREN_STATUS_OK = 0,
  HOREN_STATUS_NULL_POINTER = 1,
  HOREN_STATUS_INVALID_ARGUMENT = 2,
  HOREN_STATUS_ZERO_NORM = 3,
  HOREN_STATUS_DIMENSION_MISMATCH = 4,
  HOREN_STATUS_EMPTY_CODEBOOK = 5,
  HOREN_STATUS_NON_FINITE = 6,
  HOREN_STATUS_INVALID_PARAMS = 7,
  HOREN_STATUS_FORMAT = 8,
  HOREN_STATUS_IO = 9,
  HOREN_STATUS_INDEX_OUT_OF_RANGE = 10,
  HOREN_STATUS_PANIC = 11,
  HOREN_STATUS_OTHER = 12,
} HorenStatus;

typedef enum HorenOutcome {
  HOREN_OUTCOME_INSERTED = 0,
  HOREN_OUTCOME_REFINED = 1,
  HOREN_OUTCOME_CONFLICT_INSERTED = 2,
} HorenOutcome;

/**
 * Opaque codebook handle.
 */
typedef struct HorenCodebook HorenCodebook;

/**
 * Refinement and matching settings.
 */
typedef struct HorenParams {
  double beta;
  double gamma;
  uint32_t max_steps;
  double epsilon;
  double threshold;
} HorenParams;

/**
 * Payload training settings.
 */
typedef struct HorenAdaptorParams {
  double learning_rate;
  uint32_t max_steps;
  double loss_threshold;
  uint32_t patience;
} HorenAdaptorParams;

typedef struct HorenEditResult {
  enum HorenOutcome outcome;
  /**
   * Entry that was written.
   */
  uint64_t index;
  /**
   * Entry whose basin was contested; -1 unless the outcome is a conflict.
   */
  int64_t contested;
  int32_t payload_trained;
  int32_t adaptor_failed;
} HorenEditResult;

typedef struct HorenRoute {
  /**
   * 1 when the best score exceeds the threshold.
   */
  int32_t matched;
  /**
   * -1 for an empty codebook.
   */
  int64_t best_index;
  double best_score;
  uint32_t steps_taken;
} HorenRoute;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failing call on this thread, or NULL. Owned by the
 * library; valid until the next failing call on the same thread.
 */
const char *horen_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *horen_version(void);

struct HorenParams horen_params_default(void);

struct HorenAdaptorParams horen_adaptor_params_default(void);

/**
 * New empty codebook of dimension `dim`; NULL when `dim` is 0.
 */
struct HorenCodebook *horen_codebook_new(size_t dim);

/**
 * # Safety
 * `cb` must be NULL or a handle from this library that was not yet freed.
 */
void horen_codebook_free(struct HorenCodebook *cb);

/**
 * Entry count; 0 for NULL.
 *
 * # Safety
 * `cb` must be NULL or a live handle.
 */
size_t horen_codebook_len(const struct HorenCodebook *cb);

/**
 * Key dimension; 0 for NULL.
 *
 * # Safety
 * `cb` must be NULL or a live handle.
 */
size_t horen_codebook_dim(const struct HorenCodebook *cb);

/**
 * Applies one edit. `params` and `adaptor` may be NULL for defaults.
 *
 * # Safety
 * `query` and `target` must point to `len` readable doubles, `label` to a
 * NUL-terminated UTF-8 string, `out` to a writable result (or be NULL).
 */
enum HorenStatus horen_codebook_apply_edit(struct HorenCodebook *cb,
                                           const double *query,
                                           const double *target,
                                           size_t len,
                                           const char *label,
                                           const struct HorenParams *params,
                                           const struct HorenAdaptorParams *adaptor,
                                           struct HorenEditResult *out);

/**
 * Refines and matches a raw query. `params` may be NULL for defaults.
 *
 * # Safety
 * `query` must point to `len` readable doubles and `out` to a writable
 * [`HorenRoute`].
 */
enum HorenStatus horen_codebook_route(const struct HorenCodebook *cb,
                                      const double *query,
                                      size_t len,
                                      const struct HorenParams *params,
                                      struct HorenRoute *out);

/**
 * Copies entry `index`'s payload into `out` (`len` must equal the
 * dimension).
 *
 * # Safety
 * `out` must point to `len` writable doubles.
 */
enum HorenStatus horen_codebook_payload(const struct HorenCodebook *cb,
                                        size_t index,
                                        double *out,
                                        size_t len);

/**
 * Copies entry `index`'s label, NUL-terminated, into `buf` of `cap` bytes.
 * Writes the full label length (excluding NUL) to `needed` when non-NULL;
 * fails with `HOREN_STATUS_INVALID_ARGUMENT` if it does not fit.
 *
 * # Safety
 * `buf` must point to `cap` writable bytes; `needed` must be NULL or
 * writable.
 */
enum HorenStatus horen_codebook_label(const struct HorenCodebook *cb,
                                      size_t index,
                                      char *buf,
                                      size_t cap,
                                      size_t *needed);

/**
 * # Safety
 * `path` must be a NUL-terminated UTF-8 string.
 */
enum HorenStatus horen_codebook_save(const struct HorenCodebook *cb, const char *path);

/**
 * Loads a codebook file into a new handle written to `out`.
 *
 * # Safety
 * `path` must be a NUL-terminated UTF-8 string and `out` writable.
 */
enum HorenStatus horen_codebook_load(const char *path, struct HorenCodebook **out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* HOREN_H */
