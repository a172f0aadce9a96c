#ifndef CONTAMKIT_H
#define CONTAMKIT_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum CtkStatus {
  CTK_STATUS_OK = 0,
  CTK_STATUS_NULL_ARGUMENT = 1,
  CTK_STATUS_INVALID_ARGUMENT = 2,
  CTK_STATUS_IO = 3,
  CTK_STATUS_FORMAT = 4,
  CTK_STATUS_CONFIG = 5,
  CTK_STATUS_CAPACITY = 6,
  CTK_STATUS_MISMATCH = 7,
  CTK_STATUS_OVERFLOW = 8,
  CTK_STATUS_INTERNAL = 99,
} CtkStatus;

typedef enum CtkFormat {
  CTK_FORMAT_JSONL = 0,
  CTK_FORMAT_BINARY = 1,
} CtkFormat;

typedef enum CtkLabel {
  CTK_LABEL_CLEAN = 0,
  CTK_LABEL_SOURCE_ONLY = 1,
  CTK_LABEL_TARGET_ONLY = 2,
  CTK_LABEL_BOTH = 3,
} CtkLabel;

typedef enum CtkSmoothing {
  CTK_SMOOTHING_NONE = 0,
  CTK_SMOOTHING_ADD_ONE = 1,
} CtkSmoothing;

typedef enum CtkMode {
  CTK_MODE_FULL_PROMPTED = 0,
  CTK_MODE_SOURCE_ONLY = 1,
  CTK_MODE_TARGET_ONLY = 2,
  CTK_MODE_SPLIT_PAIR = 3,
  CTK_MODE_BATCHED_PAIR = 4,
} CtkMode;

typedef enum CtkTemporal {
  CTK_TEMPORAL_EARLY = 0,
  CTK_TEMPORAL_MIDDLE = 1,
  CTK_TEMPORAL_LATE = 2,
  CTK_TEMPORAL_UNIFORM = 3,
} CtkTemporal;

/**
 * Opaque n-gram index.
 */
typedef struct CtkIndex CtkIndex;

typedef struct CtkScore {
  double s_source;
  double s_target;
  size_t source_matched;
  size_t target_matched;
  enum CtkLabel label;
} CtkScore;

typedef struct CtkPlanConfig {
  size_t total_steps;
  size_t batch_size;
  double max_replace_frac;
  double window_frac;
  uint64_t seed;
  bool strict_cap;
} CtkPlanConfig;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or NULL. Valid until the
 * next call into this library on the same thread.
 */
const char *ctk_last_error(void);

/**
 * Static, NUL-terminated version string.
 */
const char *ctk_version(void);

/**
 * Build an index over a corpus file or shard directory.
 */
enum CtkStatus ctk_index_build(const char *corpus_path,
                               enum CtkFormat format,
                               size_t ngram_order,
                               uint32_t fingerprint_bits,
                               struct CtkIndex **out);

enum CtkStatus ctk_index_load(const char *path, struct CtkIndex **out);

enum CtkStatus ctk_index_save(const struct CtkIndex *index, const char *path);

void ctk_index_free(struct CtkIndex *index);

/**
 * Document count, or 0 for NULL.
 */
size_t ctk_index_num_docs(const struct CtkIndex *index);

/**
 * Posting count, or 0 for NULL.
 */
size_t ctk_index_num_postings(const struct CtkIndex *index);

/**
 * Score one source/target pair of token fields against `index`.
 */
enum CtkStatus ctk_score_fields(const struct CtkIndex *index,
                                const uint32_t *source,
                                size_t source_len,
                                const uint32_t *target,
                                size_t target_len,
                                double threshold,
                                struct CtkScore *out);

/**
 * A field is contaminated when its fraction is strictly above `threshold`.
 */
enum CtkLabel ctk_classify(double s_source, double s_target, double threshold);

/**
 * Corpus BLEU. Segments are concatenated in `hyp_tokens` / `ref_tokens`
 * with per-segment lengths in `hyp_lens` / `ref_lens`.
 */
enum CtkStatus ctk_corpus_bleu(const uint32_t *hyp_tokens,
                               const size_t *hyp_lens,
                               const uint32_t *ref_tokens,
                               const size_t *ref_lens,
                               size_t segments,
                               size_t max_order,
                               enum CtkSmoothing smoothing,
                               double *out);

/**
 * Plan a schedule for a test-set file and write it to `schedule_path`.
 */
enum CtkStatus ctk_plan_schedule(const char *testset_path,
                                 enum CtkMode mode,
                                 enum CtkTemporal temporal,
                                 uint32_t copies,
                                 const struct CtkPlanConfig *config,
                                 const char *schedule_path,
                                 size_t *entries_out);

/**
 * Count invariant violations of a schedule file against its own header.
 */
enum CtkStatus ctk_verify_schedule(const char *schedule_path, size_t *violations_out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CONTAMKIT_H */
