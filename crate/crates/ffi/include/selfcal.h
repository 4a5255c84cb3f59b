#ifndef SELFCAL_H
#define SELFCAL_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum SelfcalMethod {
  SELFCAL_METHOD_WANDA = 0,
  SELFCAL_METHOD_SPARSEGPT = 1,
  SELFCAL_METHOD_GPTQ = 2,
  SELFCAL_METHOD_RTN = 3,
  SELFCAL_METHOD_AWS = 4,
} SelfcalMethod;

typedef enum SelfcalSource {
  SELFCAL_SOURCE_SELF_GENERATED = 0,
  SELFCAL_SOURCE_CORPUS = 1,
  SELFCAL_SOURCE_RANDOM_VOCAB = 2,
} SelfcalSource;

typedef enum SelfcalStatus {
  SELFCAL_STATUS_OK = 0,
  SELFCAL_STATUS_NULL_POINTER = 1,
  SELFCAL_STATUS_INVALID_ARGUMENT = 2,
  SELFCAL_STATUS_IO = 3,
  SELFCAL_STATUS_FORMAT = 4,
  SELFCAL_STATUS_NUMERICAL = 5,
  SELFCAL_STATUS_INTERNAL = 6,
} SelfcalStatus;

/**
 * Opaque calibration-set handle.
 */
typedef struct SelfcalCalibSet SelfcalCalibSet;

/**
 * Opaque model handle.
 */
typedef struct SelfcalModel SelfcalModel;

/**
 * Linear temperature ramp from `t_initial` to `t_final` over `ramp` steps.
 */
typedef struct SelfcalSchedule {
  double t_initial;
  double t_final;
  size_t ramp;
} SelfcalSchedule;

typedef struct SelfcalTextMetrics {
  double ppl;
  double repetitions;
  double coverage;
  double diversity;
  double zipf;
} SelfcalTextMetrics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message describing the last failure on this thread; empty after a
 * successful call. Valid until the next call on the same thread.
 */
const char *selfcal_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *selfcal_version(void);

/**
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum SelfcalStatus selfcal_model_load(const char *path, struct SelfcalModel **out);

/**
 * Loads the model shipped with the library.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum SelfcalStatus selfcal_model_load_bundled(struct SelfcalModel **out);

/**
 * # Safety
 * `model` must come from this library; `path` must be NUL-terminated.
 */
enum SelfcalStatus selfcal_model_save(const struct SelfcalModel *model, const char *path);

/**
 * # Safety
 * `model` must come from this library and not be used afterwards. Null is ignored.
 */
void selfcal_model_free(struct SelfcalModel *model);

/**
 * Vocabulary size, or 0 for a null handle.
 *
 * # Safety
 * `model` must be null or come from this library.
 */
size_t selfcal_model_vocab_size(const struct SelfcalModel *model);

/**
 * Maximum context length, or 0 for a null handle.
 *
 * # Safety
 * `model` must be null or come from this library.
 */
size_t selfcal_model_context_len(const struct SelfcalModel *model);

/**
 * Next-token logits after `tokens[0..n]`, written to `out[0..vocab_size]`.
 *
 * # Safety
 * `tokens` must hold `n` ids and `out` must hold `out_len` doubles.
 */
enum SelfcalStatus selfcal_model_logits(const struct SelfcalModel *model,
                                        const uint32_t *tokens,
                                        size_t n,
                                        double *out,
                                        size_t out_len);

/**
 * Fraction of zero weights over the linear layers of all blocks.
 *
 * # Safety
 * `model` must come from this library; `out` must be valid.
 */
enum SelfcalStatus selfcal_model_sparsity(const struct SelfcalModel *model, double *out);

/**
 * Perplexity and next-token accuracy on the first `windows` held-out
 * windows of the bundled corpus.
 *
 * # Safety
 * `model` must come from this library; `ppl` and `acc` must be valid.
 */
enum SelfcalStatus selfcal_model_eval_heldout(const struct SelfcalModel *model,
                                              size_t windows,
                                              double *ppl,
                                              double *acc);

/**
 * Temperature at generation step `step` (1-based).
 *
 * # Safety
 * `schedule` and `out` must be valid pointers.
 */
enum SelfcalStatus selfcal_schedule_temperature(const struct SelfcalSchedule *schedule,
                                                size_t step,
                                                double *out);

/**
 * Builds a calibration set. `model` is required for the self source;
 * `schedule` may be null for constant temperature 1. The corpus source
 * samples the bundled training text.
 *
 * # Safety
 * Pointers must be null or valid; `out` must be valid.
 */
enum SelfcalStatus selfcal_calib_generate(const struct SelfcalModel *model,
                                          enum SelfcalSource source,
                                          size_t num_examples,
                                          size_t example_len,
                                          uint64_t seed,
                                          const struct SelfcalSchedule *schedule,
                                          bool stopword_constraint,
                                          struct SelfcalCalibSet **out);

/**
 * # Safety
 * `path` must be NUL-terminated and `out` valid.
 */
enum SelfcalStatus selfcal_calib_load(const char *path, struct SelfcalCalibSet **out);

/**
 * # Safety
 * `set` must come from this library; `path` must be NUL-terminated.
 */
enum SelfcalStatus selfcal_calib_save(const struct SelfcalCalibSet *set, const char *path);

/**
 * # Safety
 * `set` must come from this library and not be used afterwards. Null is ignored.
 */
void selfcal_calib_free(struct SelfcalCalibSet *set);

/**
 * Number of examples and tokens per example.
 *
 * # Safety
 * `set` must come from this library; outputs must be valid.
 */
enum SelfcalStatus selfcal_calib_shape(const struct SelfcalCalibSet *set,
                                       size_t *num_examples,
                                       size_t *example_len);

/**
 * Copies example `index` into `out[0..example_len]`.
 *
 * # Safety
 * `set` must come from this library; `out` must hold `out_len` ids.
 */
enum SelfcalStatus selfcal_calib_example(const struct SelfcalCalibSet *set,
                                         size_t index,
                                         uint32_t *out,
                                         size_t out_len);

/**
 * Perplexity, repetitions, coverage, 4-gram diversity and Zipf exponent.
 *
 * # Safety
 * Handles must come from this library; `out` must be valid.
 */
enum SelfcalStatus selfcal_analyze(const struct SelfcalModel *model,
                                   const struct SelfcalCalibSet *set,
                                   struct SelfcalTextMetrics *out);

/**
 * Compresses `model` with `set` using the method's default settings and
 * returns a new model handle.
 *
 * # Safety
 * Handles must come from this library; `out` must be valid.
 */
enum SelfcalStatus selfcal_compress(const struct SelfcalModel *model,
                                    const struct SelfcalCalibSet *set,
                                    enum SelfcalMethod method,
                                    struct SelfcalModel **out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SELFCAL_H */
