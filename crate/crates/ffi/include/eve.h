#ifndef EVE_H
#define EVE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum EveComponentKind {
  EVE_COMPONENT_KIND_SENSOR = 0,
  EVE_COMPONENT_KIND_CONTROLLER = 1,
  EVE_COMPONENT_KIND_ACTUATOR = 2,
} EveComponentKind;

/**
 * Result code of every fallible call.
 */
typedef enum EveStatus {
  EVE_STATUS_OK = 0,
  /**
   * A required pointer argument was null.
   */
  EVE_STATUS_NULL_ARGUMENT = 1,
  /**
   * A string argument was not valid UTF-8.
   */
  EVE_STATUS_INVALID_UTF8 = 2,
  /**
   * An argument was out of range or inconsistent.
   */
  EVE_STATUS_INVALID_ARGUMENT = 3,
  /**
   * Input text (JSON, TOML, model reply) could not be parsed.
   */
  EVE_STATUS_PARSE = 4,
  /**
   * The model backend failed: credentials, transport, cassette miss.
   */
  EVE_STATUS_GATEWAY = 5,
  /**
   * A pipeline stage failed for another reason.
   */
  EVE_STATUS_PIPELINE = 6,
  /**
   * A Rust panic was caught at the boundary.
   */
  EVE_STATUS_PANIC = 7,
} EveStatus;

typedef enum EveTieRule {
  EVE_TIE_RULE_ACCEPT_TIE = 0,
  EVE_TIE_RULE_HALF_TIE = 1,
  EVE_TIE_RULE_REJECT_TIE = 2,
} EveTieRule;

/**
 * Opaque pipeline: configuration, prompt pools and model backend.
 */
typedef struct EvePipeline EvePipeline;

typedef struct EveMetrics {
  double recall;
  double precision;
  double f1;
  size_t tp;
  size_t fp;
  size_t fn_;
} EveMetrics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string. Do not free.
 */
const char *eve_version(void);

/**
 * Message of the last failed call on this thread, or null. The pointer
 * stays valid until the next failing call on the same thread.
 */
const char *eve_last_error_message(void);

/**
 * Releases a string returned by this library. Null is ignored.
 *
 * # Safety
 * `s` must come from this library and not have been freed.
 */
void eve_string_free(char *s);

/**
 * Builds a pipeline from TOML configuration text (null or empty for the
 * defaults). Relative paths in the configuration resolve against
 * `base_dir`, or the working directory when `base_dir` is null.
 *
 * # Safety
 * String arguments must be NUL-terminated; `out` must be writable.
 */
enum EveStatus eve_pipeline_new(const char *config_toml,
                                const char *base_dir,
                                struct EvePipeline **out);

/**
 * Destroys a pipeline. Null is ignored.
 *
 * # Safety
 * `pipeline` must come from [`eve_pipeline_new`] and not have been freed.
 */
void eve_pipeline_free(struct EvePipeline *pipeline);

/**
 * Runs the full pipeline on a document and returns the report as JSON.
 *
 * # Safety
 * `pipeline` must be live; strings NUL-terminated; `out_json` writable.
 */
enum EveStatus eve_pipeline_analyze(const struct EvePipeline *pipeline,
                                    const char *doc_id,
                                    const char *document_text,
                                    char **out_json);

/**
 * `f * (n_a + n_c*n_a + n_s*n_c*n_a)`, saturating at `UINT64_MAX`.
 */
uint64_t eve_count_ucas(uint64_t n_s, uint64_t n_c, uint64_t n_a, uint64_t f);

/**
 * Enumerates UCAs for a control-structure JSON (or a report containing
 * one) and returns `{"uca_count": n, "ucas": [...]}`.
 *
 * # Safety
 * `structure_json` must be NUL-terminated; `out_json` writable.
 */
enum EveStatus eve_enumerate_json(const char *structure_json, char **out_json);

/**
 * `1 - prod(1 - p_i)` over `len` probabilities.
 *
 * # Safety
 * `p` must point to `len` doubles (or be null with `len == 0`).
 */
enum EveStatus eve_discovery_probability(const double *p, size_t len, double *out);

/**
 * Probability that `m` voters of accuracy `p` reach the right majority.
 *
 * # Safety
 * `out` must be writable.
 */
enum EveStatus eve_vote_accept_probability(double p, uint32_t m, enum EveTieRule tie, double *out);

/**
 * Exponential bound on the majority-vote error; requires `p > 0.5`.
 *
 * # Safety
 * `out` must be writable.
 */
enum EveStatus eve_chernoff_error_bound(double p, uint32_t m, double *out);

/**
 * Full reliability report as JSON. `params_json` may be null for the
 * defaults (four attempts at 0.6, four voters at 0.8, half-weighted ties).
 *
 * # Safety
 * `params_json` null or NUL-terminated; `out_json` writable.
 */
enum EveStatus eve_combined_success_json(const char *params_json, char **out_json);

/**
 * Seeded Monte Carlo estimate of the combined success probability.
 *
 * # Safety
 * `params_json` null or NUL-terminated; outputs writable.
 */
enum EveStatus eve_monte_carlo(const char *params_json,
                               uint64_t trials,
                               uint64_t seed,
                               double *out_estimate,
                               double *out_stderr);

/**
 * Parses a raw extraction reply into `{"entries": [...], "truncated": b}`.
 *
 * # Safety
 * `raw` NUL-terminated; `out_json` writable.
 */
enum EveStatus eve_parse_component_answer(const char *raw, char **out_json);

/**
 * Reads a yes/no verdict from a raw validator reply.
 *
 * # Safety
 * `raw` NUL-terminated; `out` writable.
 */
enum EveStatus eve_parse_boolean_answer(const char *raw, bool *out);

/**
 * Recall, precision and F1 from raw counts.
 */
struct EveMetrics eve_metrics_from_counts(size_t tp, size_t fp, size_t fn_);

/**
 * Scores predicted entities against gold annotations of one kind. Both
 * arguments are JSON arrays: predictions as `{"canonical_name", "aliases",
 * "kind", "function", "support_count"}`, gold as `{"canonical",
 * "aliases"}`.
 *
 * # Safety
 * Strings NUL-terminated; `out` writable.
 */
enum EveStatus eve_match_predictions(const char *predicted_json,
                                     const char *gold_json,
                                     enum EveComponentKind kind,
                                     struct EveMetrics *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* EVE_H */
