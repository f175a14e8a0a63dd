#ifndef COGFORM_COGFORM_H
#define COGFORM_COGFORM_H

/*
 * C interface to the cogform library.
 *
 * Every function returns a cogform_status. On failure a message is available
 * from cogform_last_error() until the next call on the same thread.
 * Strings returned through char** out-parameters are owned by the caller and
 * must be released with cogform_string_free(). Handles are released with
 * their matching *_free function; passing NULL to a free function is a no-op.
 * All JSON passed in or out is UTF-8.
 */

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define COGFORM_API __declspec(dllexport)
#elif defined(COGFORM_BUILDING_LIBRARY)
#define COGFORM_API __attribute__((visibility("default")))
#else
#define COGFORM_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum cogform_status {
  COGFORM_OK = 0,
  COGFORM_E_INVALID_ARGUMENT = 1,
  COGFORM_E_PARSE = 2,
  COGFORM_E_SCHEMA = 3,
  COGFORM_E_IO = 4,
  COGFORM_E_BACKEND = 5,
  COGFORM_E_INTERNAL = 6
} cogform_status;

typedef struct cogform_formula cogform_formula;
typedef struct cogform_kb cogform_kb;
typedef struct cogform_rule_store cogform_rule_store;

COGFORM_API const char* cogform_version(void);
/* Message of the last failed call on this thread, or "". Never NULL. */
COGFORM_API const char* cogform_last_error(void);
COGFORM_API void cogform_string_free(char* s);
/* Silences library warnings on stderr (0) or restores them (1). */
COGFORM_API void cogform_set_warnings(int enabled);

/* ---- LTL formulas ---- */

COGFORM_API cogform_status cogform_formula_parse(const char* text, cogform_formula** out);
COGFORM_API void cogform_formula_free(cogform_formula* f);
COGFORM_API cogform_status cogform_formula_to_string(const cogform_formula* f, char** out);
/* {"formula": <printed>, "ast": <tree>} */
COGFORM_API cogform_status cogform_formula_to_json(const cogform_formula* f, char** out);
COGFORM_API cogform_status cogform_formula_canonicalize(const cogform_formula* f, cogform_formula** out);
/* Structural equality; *out is 1 or 0. */
COGFORM_API cogform_status cogform_formula_equal(const cogform_formula* a, const cogform_formula* b, int* out);
/* {"verdict": "Convertible", "antecedent", "consequent"} or
 * {"verdict": "InferenceError", "reason"}. A verdict is not a failure. */
COGFORM_API cogform_status cogform_formula_classify(const cogform_formula* f, char** out_json);

/* ---- knowledge bases ---- */

COGFORM_API cogform_status cogform_kb_load(const char* path, cogform_kb** out);
COGFORM_API cogform_status cogform_kb_from_json(const char* json, cogform_kb** out);
/* Built-in scenario KB: "highway_cut_in", "signalized_intersection" or
 * "lane_change_interference". */
COGFORM_API cogform_status cogform_kb_scenario(const char* archetype, cogform_kb** out);
COGFORM_API cogform_status cogform_kb_to_json(const cogform_kb* kb, char** out);
COGFORM_API void cogform_kb_free(cogform_kb* kb);

/* ---- rule stores ---- */

COGFORM_API cogform_status cogform_rule_store_new(cogform_rule_store** out);
COGFORM_API cogform_status cogform_rule_store_load(const char* path, cogform_rule_store** out);
COGFORM_API cogform_status cogform_rule_store_from_json(const char* json, cogform_rule_store** out);
/* {"rules": [...]} */
COGFORM_API cogform_status cogform_rule_store_to_json(const cogform_rule_store* s, char** out);
COGFORM_API cogform_status cogform_rule_store_save(const cogform_rule_store* s, const char* path);
COGFORM_API cogform_status cogform_rule_store_size(const cogform_rule_store* s, size_t* out);
COGFORM_API void cogform_rule_store_free(cogform_rule_store* s);

/* ---- pipeline stages ---- */

/* Compiles one formula into the store. options_json may be NULL or
 * {"source_id", "text", "duplicate_threshold", "top_k", "repair_rounds",
 *  "initial_utility", "prompt_mode": "literal"|"supply", "writer": <backend>,
 *  "base_dir"}. *out_json receives the outcome record; every outcome,
 * including a rejection, returns COGFORM_OK. */
COGFORM_API cogform_status cogform_compile(const cogform_kb* kb, cogform_rule_store* store, const char* formula,
                                           const char* options_json, char** out_json);

/* Refines one text through the translator and critic tree of a config file
 * (sections "translator", "critic_tree", optional "knowledge_base").
 * overrides_json may be NULL or {"backend": <backend>, "no_record": bool};
 * no_record drops transcript recording from every role.
 * request_json: {"text", "initial"?, "seed"}. *out_json: {"initial",
 * "refined", "tree"}. */
COGFORM_API cogform_status cogform_translate(const char* config_path, const char* overrides_json,
                                             const char* request_json, char** out_json);

/* request_json: {"scenario": {...}, "policy": "cautious"|"assertive"|<table>|
 * {"mixture": [...]}, "episodes": n, "seed": s}. *out_jsonl receives the
 * episode JSON Lines. */
COGFORM_API cogform_status cogform_generate_episodes(const char* request_json, char** out_jsonl);

/* Trains a copy of `rules`. train_json holds the training constants and
 * "seed". kb may be NULL; when given, episodes are validated against it.
 * *out_trained receives the trained store; *out_curve_csv the learning curve. */
COGFORM_API cogform_status cogform_train(const cogform_kb* kb, const cogform_rule_store* rules,
                                         const char* episodes_jsonl, const char* train_json,
                                         cogform_rule_store** out_trained, char** out_curve_csv);

/* options_json: {"sigma", "seed", "runs", "top_k", "js_runs"}.
 * *out_json: {"agreement", "distributions", "mean_js", "rsr"}. */
COGFORM_API cogform_status cogform_evaluate(const cogform_rule_store* rules, const char* episodes_jsonl,
                                            const char* options_json, char** out_json);

/* Runs the whole experiment described by config_path into out_dir.
 * overrides_json may be NULL or {"seed", "prompt_mode", "jobs", "backend"}.
 * *out_manifest_json receives the manifest. */
COGFORM_API cogform_status cogform_run_experiment(const char* config_path, const char* overrides_json,
                                                  const char* out_dir, char** out_manifest_json);

#ifdef __cplusplus
}
#endif

#endif /* COGFORM_COGFORM_H */
