#ifndef DAIAN_H
#define DAIAN_H

/* Generated by cbindgen from the daian-ffi crate. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every exported function.
 */
typedef enum DaianStatus {
  DAIAN_STATUS_OK = 0,
  /**
   * Null pointer, bad UTF-8, out-of-range index or too small a buffer.
   */
  DAIAN_STATUS_INVALID_ARGUMENT = 1,
  DAIAN_STATUS_CONFIG = 2,
  /**
   * Non-finite input, undefined metric or numeric failure.
   */
  DAIAN_STATUS_NUMERIC = 3,
  DAIAN_STATUS_IO = 4,
  DAIAN_STATUS_CHECKPOINT = 5,
  /**
   * Inconsistent or malformed data.
   */
  DAIAN_STATUS_DATA = 6,
  /**
   * A Rust panic was caught at the boundary.
   */
  DAIAN_STATUS_PANIC = 7,
} DaianStatus;

/**
 * A synthetic corpus with its item similarity table.
 */
typedef struct DaianCorpus DaianCorpus;

/**
 * A trained model loaded from a checkpoint.
 */
typedef struct DaianModel DaianModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. The pointer is
 * valid until the next call into the library on the same thread.
 */
const char *daian_last_error_message(void);

/**
 * Generate a corpus. `config` is optional `key=value` text (null for the
 * defaults); only its `synth.*` keys matter here.
 */
enum DaianStatus daian_corpus_generate(const char *config, uint64_t seed, struct DaianCorpus **out);

/**
 * Read a corpus directory written by `daian generate`.
 */
enum DaianStatus daian_corpus_load(const char *dir, struct DaianCorpus **out);

enum DaianStatus daian_corpus_save(const struct DaianCorpus *corpus, const char *dir);

/**
 * Number of requests; impressions are grouped by request.
 */
enum DaianStatus daian_corpus_num_requests(const struct DaianCorpus *corpus, uintptr_t *out);

enum DaianStatus daian_corpus_num_impressions(const struct DaianCorpus *corpus, uintptr_t *out);

/**
 * Release a corpus. Null is ignored.
 */
void daian_corpus_free(struct DaianCorpus *corpus);

enum DaianStatus daian_model_load(const char *path, struct DaianModel **out);

/**
 * Release a model. Null is ignored.
 */
void daian_model_free(struct DaianModel *model);

/**
 * Click probabilities for every impression of request `request`.
 * `*out_len` receives the count; fails if it exceeds `capacity`.
 */
enum DaianStatus daian_model_score_request(const struct DaianModel *model,
                                           const struct DaianCorpus *corpus,
                                           uintptr_t request,
                                           double *out_scores,
                                           uintptr_t capacity,
                                           uintptr_t *out_len);

/**
 * Predicted intent distribution of request `request` (n_levels values).
 */
enum DaianStatus daian_model_predict_intent(const struct DaianModel *model,
                                            const struct DaianCorpus *corpus,
                                            uintptr_t request,
                                            double *out_probs,
                                            uintptr_t capacity,
                                            uintptr_t *out_len);

/**
 * Rank-sum AUC with tie-averaged ranks. Labels are 0 or 1.
 */
enum DaianStatus daian_auc(const double *scores, const uint8_t *labels, uintptr_t len, double *out);

/**
 * Impression-weighted mean of per-user AUC; users with one label class are skipped.
 */
enum DaianStatus daian_gauc(const uint64_t *user_ids,
                            const double *scores,
                            const uint8_t *labels,
                            uintptr_t len,
                            double *out);

/**
 * Relative improvement in percent: (measured − 0.5) / (base − 0.5) − 1, × 100.
 */
enum DaianStatus daian_rela_impr(double measured, double base, double *out);

/**
 * Jensen–Shannon divergence (natural log) of two distributions of length `n`.
 */
enum DaianStatus daian_js_divergence(const double *p, const double *q, uintptr_t n, double *out);

/**
 * Similarity level in `0..n` of a cosine similarity.
 */
enum DaianStatus daian_bin_similarity(double sim, uintptr_t n, uintptr_t *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DAIAN_H */
