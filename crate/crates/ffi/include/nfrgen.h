#ifndef NFRGEN_H
#define NFRGEN_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result of every fallible call.
typedef enum NfrStatus {
  NFR_STATUS_OK = 0,
  NFR_STATUS_NULL_ARGUMENT = 1,
  NFR_STATUS_INVALID_UTF8 = 2,
  NFR_STATUS_INVALID_ARGUMENT = 3,
  NFR_STATUS_VALIDATION = 4,
  NFR_STATUS_UNKNOWN_ATTRIBUTE = 5,
  NFR_STATUS_PARSE = 6,
  NFR_STATUS_NOT_FOUND = 7,
  NFR_STATUS_UNAUTHORIZED = 8,
  NFR_STATUS_CONFLICT = 9,
  NFR_STATUS_CAPACITY = 10,
  NFR_STATUS_INTEGRITY = 11,
  NFR_STATUS_IO = 12,
  NFR_STATUS_STORAGE = 13,
  NFR_STATUS_TRANSPORT = 14,
  NFR_STATUS_PANIC = 15,
} NfrStatus;

// Agreement between the model's attribute and the expert's choice.
typedef enum NfrMatchKind {
  NFR_MATCH_KIND_EXACT = 0,
  NFR_MATCH_KIND_NEAR_MISS = 1,
  NFR_MATCH_KIND_MISMATCH = 2,
} NfrMatchKind;

// Metrics computed once from a dataset.
typedef struct NfrAnalyzer NfrAnalyzer;

// An open evaluation store.
typedef struct NfrEvalStore NfrEvalStore;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or null after a success.
// The pointer stays valid until the next call into this library on the
// same thread.
const char *nfr_last_error_message(void);

// Frees a string returned by this library. Null is ignored.
//
// # Safety
// `s` must come from this library and not have been freed.
void nfr_string_free(char *s);

// Library version, statically allocated.
const char *nfr_version(void);

// Number of quality attributes.
size_t nfr_attribute_count(void);

// Canonical attribute name for `index`, statically allocated; null when
// out of range.
const char *nfr_attribute_name(size_t index);

// Resolves an attribute name or alias to its index.
//
// # Safety
// `name` must be a valid C string; `out_index` must be writable.
enum NfrStatus nfr_resolve_attribute(const char *name, size_t *out_index);

// Classifies an (LLM attribute, expert attribute) pair. `relatedness_json`
// may be null for the default map.
//
// # Safety
// String arguments must be valid C strings or null where allowed;
// `out_kind` must be writable.
enum NfrStatus nfr_classify_match(const char *llm_attribute,
                                  const char *expert_attribute,
                                  const char *relatedness_json,
                                  enum NfrMatchKind *out_kind);

// Renders a prompt from a JSON prompt spec
// (`{"techniques": [...], "frs": [{"id", "text"}]}`).
//
// # Safety
// `spec_json` must be a valid C string; `out_prompt` must be writable.
enum NfrStatus nfr_build_prompt(const char *spec_json, char **out_prompt);

// Parses a raw model response into JSON `{"nfrs", "rejections", "raw"}`.
// `fr_ids_json` is a JSON array of the FR ids in the request.
//
// # Safety
// String arguments must be valid C strings; `out_json` must be writable.
enum NfrStatus nfr_parse_response(const char *raw,
                                  const char *model_id,
                                  const char *fr_ids_json,
                                  char **out_json);

// Loads an exported dataset directory and computes its metrics.
//
// # Safety
// `dataset_dir` must be a valid C string, `relatedness_json` a valid C
// string or null; `out` must be writable.
enum NfrStatus nfr_analyzer_open(const char *dataset_dir,
                                 const char *relatedness_json,
                                 struct NfrAnalyzer **out);

// Like [`nfr_analyzer_open`] for a dataset given as JSON text.
//
// # Safety
// As for [`nfr_analyzer_open`].
enum NfrStatus nfr_analyzer_from_json(const char *dataset_json,
                                      const char *relatedness_json,
                                      struct NfrAnalyzer **out);

// The metrics report as JSON.
//
// # Safety
// `analyzer` must be a live handle; `out_json` must be writable.
enum NfrStatus nfr_analyzer_report_json(const struct NfrAnalyzer *analyzer, char **out_json);

// The metrics report as plain text.
//
// # Safety
// As for [`nfr_analyzer_report_json`].
enum NfrStatus nfr_analyzer_report_text(const struct NfrAnalyzer *analyzer, char **out_text);

// Number of NFRs in the analyzed dataset.
//
// # Safety
// `analyzer` must be a live handle or null (returns 0).
size_t nfr_analyzer_nfr_count(const struct NfrAnalyzer *analyzer);

// # Safety
// `analyzer` must come from this library and not be used afterwards.
void nfr_analyzer_free(struct NfrAnalyzer *analyzer);

// Opens (creating if needed) an evaluation store file.
//
// # Safety
// `path` must be a valid C string; `out` must be writable.
enum NfrStatus nfr_store_open(const char *path, struct NfrEvalStore **out);

// The evaluator's blind payload for `task` ("scoring" or
// "attribute_selection") as JSON.
//
// # Safety
// `store` must be a live handle, string arguments valid C strings;
// `out_json` must be writable.
enum NfrStatus nfr_store_payload_json(const struct NfrEvalStore *store,
                                      const char *token,
                                      const char *task,
                                      char **out_json);

// Records (or replaces) a score for a scoring item.
//
// # Safety
// `store` must be a live handle and string arguments valid C strings.
enum NfrStatus nfr_store_record_score(const struct NfrEvalStore *store,
                                      const char *token,
                                      const char *item_id,
                                      uint8_t validity,
                                      uint8_t applicability);

// Records (or replaces) the chosen attribute for a selection item.
//
// # Safety
// `store` must be a live handle and string arguments valid C strings.
enum NfrStatus nfr_store_record_selection(const struct NfrEvalStore *store,
                                          const char *token,
                                          const char *item_id,
                                          const char *attribute);

// The store's full dataset as JSON, ready for [`nfr_analyzer_from_json`].
//
// # Safety
// `store` must be a live handle; `out_json` must be writable.
enum NfrStatus nfr_store_dataset_json(const struct NfrEvalStore *store, char **out_json);

// # Safety
// `store` must come from this library and not be used afterwards.
void nfr_store_free(struct NfrEvalStore *store);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* NFRGEN_H */
