#ifndef MEDLANG_H
#define MEDLANG_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum MedlangStatus {
  MEDLANG_STATUS_OK = 0,
  MEDLANG_STATUS_CONFIG = 2,
  MEDLANG_STATUS_DATA = 3,
  MEDLANG_STATUS_NUMERICAL = 4,
  MEDLANG_STATUS_NULL_POINTER = 5,
  MEDLANG_STATUS_INVALID_UTF8 = 6,
  MEDLANG_STATUS_PANIC = 7,
} MedlangStatus;

/**
 * Encoded causal records ready for estimation.
 */
typedef struct MedlangDataset MedlangDataset;

/**
 * A validated structural causal model.
 */
typedef struct MedlangScm MedlangScm;

typedef struct MedlangEffect {
  double nde;
  double nie;
  double nie_reversed;
  double total_effect;
  /**
   * Interval bounds; NaN when no bootstrap was requested.
   */
  double nde_lower;
  double nde_upper;
  double nie_lower;
  double nie_upper;
  size_t n_units;
  size_t n_bootstrap;
} MedlangEffect;

typedef struct MedlangOracle {
  double nde;
  double nie;
  double te;
  double nie_reversed;
} MedlangOracle;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Loads records (newline-delimited JSON) and their schema file.
 *
 * # Safety
 * The path arguments must be valid C strings; `out` must be writable.
 */
enum MedlangStatus medlang_dataset_load(const char *records_path,
                                        const char *schema_path,
                                        struct MedlangDataset **out);

/**
 * # Safety
 * `dataset` must be null or a handle from this library not yet freed.
 */
void medlang_dataset_free(struct MedlangDataset *dataset);

/**
 * Number of records; 0 for a null handle.
 *
 * # Safety
 * `dataset` must be null or a live handle.
 */
size_t medlang_dataset_len(const struct MedlangDataset *dataset);

/**
 * Estimates effects for one mediator. `n_bootstrap` is 0 (no intervals) or at least 100.
 *
 * # Safety
 * `dataset` must be a live handle, `mediator` a valid C string, `out` writable.
 */
enum MedlangStatus medlang_estimate(const struct MedlangDataset *dataset,
                                    const char *mediator,
                                    size_t n_bootstrap,
                                    uint64_t seed,
                                    double ci_level,
                                    struct MedlangEffect *out);

/**
 * Loads and validates a structural model spec file.
 *
 * # Safety
 * `spec_path` must be a valid C string; `out` must be writable.
 */
enum MedlangStatus medlang_scm_load(const char *spec_path, struct MedlangScm **out);

/**
 * # Safety
 * `scm` must be null or a live handle.
 */
void medlang_scm_free(struct MedlangScm *scm);

/**
 * Number of mediators in the model; 0 for a null handle.
 *
 * # Safety
 * `scm` must be null or a live handle.
 */
size_t medlang_scm_mediator_count(const struct MedlangScm *scm);

/**
 * Exact effects for the mediator at `mediator_index`.
 *
 * # Safety
 * `scm` must be a live handle; `out` writable.
 */
enum MedlangStatus medlang_scm_exact(const struct MedlangScm *scm,
                                     size_t mediator_index,
                                     struct MedlangOracle *out);

/**
 * Samples `n` units with the given seed into a new dataset handle.
 *
 * # Safety
 * `scm` must be a live handle; `out` writable.
 */
enum MedlangStatus medlang_scm_generate(const struct MedlangScm *scm,
                                        size_t n,
                                        uint64_t seed,
                                        struct MedlangDataset **out);

/**
 * Binary hedging and disfluency labels for one utterance, with the bundled lexicon.
 *
 * # Safety
 * `text` must be a valid C string; both outputs must be writable.
 */
enum MedlangStatus medlang_measure_text(const char *text, int *hedging, int *disfluency);

/**
 * Message for the last failed call on this thread, or null. The pointer is
 * valid until the next call into this library on the same thread.
 */
const char *medlang_last_error(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MEDLANG_H */
