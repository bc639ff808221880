#ifndef SEMLAND_H
#define SEMLAND_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdint.h>
#include <stddef.h>
#include <stdbool.h>

typedef enum SemlandStatus {
  SEMLAND_STATUS_OK = 0,
  SEMLAND_STATUS_NULL_ARGUMENT = 1,
  SEMLAND_STATUS_INVALID_UTF8 = 2,
  SEMLAND_STATUS_INVALID_INPUT = 3,
  SEMLAND_STATUS_NO_PATH = 4,
  SEMLAND_STATUS_INFEASIBLE = 5,
  SEMLAND_STATUS_IO = 6,
  SEMLAND_STATUS_PANIC = 7,
} SemlandStatus;

/**
 * Indexed knowledge base.
 */
typedef struct SemlandKb SemlandKb;

/**
 * Validated scenario.
 */
typedef struct SemlandScenario SemlandScenario;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Knowledge base shipped with the library.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum SemlandStatus semland_kb_default(struct SemlandKb **out);

/**
 * Index a JSON array of knowledge entries.
 *
 * # Safety
 * `json` must be NUL-terminated; `out` must be a valid pointer.
 */
enum SemlandStatus semland_kb_from_json(const char *json, struct SemlandKb **out);

/**
 * # Safety
 * `kb` must come from a `semland_kb_*` constructor and not be used afterwards. Null is ignored.
 */
void semland_kb_free(struct SemlandKb *kb);

/**
 * Top-`k` entries for `caption` as a JSON array of `{id, class_name, score, cosine, overlap}`.
 *
 * # Safety
 * Pointers must be valid; `caption` NUL-terminated.
 */
enum SemlandStatus semland_kb_query(const struct SemlandKb *kb,
                                    const char *caption,
                                    size_t k,
                                    char **out);

/**
 * Safety spec for `caption` from the deterministic reasoner, with fallback.
 * Writes the spec as JSON.
 *
 * # Safety
 * Pointers must be valid; `caption` NUL-terminated.
 */
enum SemlandStatus semland_infer_safety(const struct SemlandKb *kb,
                                        const char *caption,
                                        double capture_time,
                                        char **out);

/**
 * Strictly parse a raw reasoner answer into `{is_dynamic, z_min}` JSON.
 * Malformed answers return `InvalidInput`.
 *
 * # Safety
 * `raw` must be NUL-terminated; `out` must be a valid pointer.
 */
enum SemlandStatus semland_parse_response(const char *raw, char **out);

/**
 * Plan from a JSON request (`start`, `goal`, `corridor`, optional
 * `unsafe_regions` and `config`) and write the reference trajectory JSON.
 *
 * # Safety
 * `request` must be NUL-terminated; `out` must be a valid pointer.
 */
enum SemlandStatus semland_plan_json(const char *request, char **out);

/**
 * # Safety
 * `json` must be NUL-terminated; `out` must be a valid pointer.
 */
enum SemlandStatus semland_scenario_from_json(const char *json, struct SemlandScenario **out);

/**
 * # Safety
 * `path` must be NUL-terminated; `out` must be a valid pointer.
 */
enum SemlandStatus semland_scenario_load(const char *path, struct SemlandScenario **out);

/**
 * Bundled scenario: `open_field`, `urban` or `grassland`.
 *
 * # Safety
 * `name` must be NUL-terminated; `out` must be a valid pointer.
 */
enum SemlandStatus semland_scenario_builtin(const char *name, struct SemlandScenario **out);

/**
 * # Safety
 * `s` must come from a `semland_scenario_*` constructor and not be used afterwards. Null is ignored.
 */
void semland_scenario_free(struct SemlandScenario *s);

/**
 * Run one trial and write its result JSON. `pipeline_json` may be null for
 * the full pipeline with the deterministic backend; otherwise it is a
 * pipeline object such as `{"variant":"Baseline", ...}`.
 *
 * # Safety
 * Handles must be valid; `pipeline_json` null or NUL-terminated; `out` valid.
 */
enum SemlandStatus semland_run_trial(const struct SemlandScenario *scenario,
                                     const struct SemlandKb *kb,
                                     const char *pipeline_json,
                                     uint64_t seed,
                                     char **out);

/**
 * # Safety
 * `s` must come from this library and not be used afterwards. Null is ignored.
 */
void semland_string_free(char *s);

/**
 * Message of the last failed call on this thread; empty after a success.
 * Valid until the next call into the library on this thread.
 */
const char *semland_last_error(void);

/**
 * Library version, statically allocated.
 */
const char *semland_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SEMLAND_H */
