/*
 * guiq - change-targeted GUI test-input generation over simulated app models.
 *
 * C API for the shared library. All functions return a guiq_status; on
 * failure guiq_last_error() holds a thread-local description. Objects are
 * opaque handles owned by the caller and released with the matching _free /
 * _close call. Strings returned through `char**` out-parameters are
 * heap-allocated and must be released with guiq_string_free().
 */
#ifndef GUIQ_H
#define GUIQ_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define GUIQ_API __declspec(dllexport)
#else
#define GUIQ_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum guiq_status {
    GUIQ_OK = 0,
    GUIQ_ERR_INVALID_ARG = 1,
    GUIQ_ERR_PARSE = 2,
    GUIQ_ERR_VALIDATION = 3,
    GUIQ_ERR_IO = 4,
    GUIQ_ERR_PROTOCOL = 5,
    GUIQ_ERR_RUNTIME = 6,
} guiq_status;

/* Opaque handles. */
typedef struct guiq_app_model guiq_app_model;
typedef struct guiq_session guiq_session;

GUIQ_API const char* guiq_version(void);

/* Description of the most recent failure on this thread; never NULL. */
GUIQ_API const char* guiq_last_error(void);

GUIQ_API void guiq_string_free(char* s);

/* ---- app models ---------------------------------------------------------- */

/* Load a model file (JSON), validating every invariant. */
GUIQ_API guiq_status guiq_app_model_load(const char* path, guiq_app_model** out_model);

/* Generate a synthetic model from a generator-spec JSON document. */
GUIQ_API guiq_status guiq_app_model_generate(const char* generator_json,
                                             guiq_app_model** out_model);

GUIQ_API guiq_status guiq_app_model_save(const guiq_app_model* model, const char* path);

/* Summary JSON: name, screen/transition/function counts, fingerprint. */
GUIQ_API guiq_status guiq_app_model_info(const guiq_app_model* model, char** out_json);

/* Minimal number of actions from the entry screen until some outcome covers
 * the function; -1 when unreachable. */
GUIQ_API guiq_status guiq_app_model_shortest_distance(const guiq_app_model* model,
                                                      uint32_t function_id,
                                                      int32_t* out_distance);

GUIQ_API void guiq_app_model_free(guiq_app_model* model);

/* ---- simulator sessions --------------------------------------------------- */

/* A session owns its current GUI state and random stream; the model itself is
 * immutable and may back any number of concurrent sessions. */
GUIQ_API guiq_status guiq_session_open(const guiq_app_model* model, uint64_t seed,
                                       guiq_session** out_session);

/* Current GUI state as JSON. */
GUIQ_API guiq_status guiq_session_state(const guiq_session* session, char** out_json);

/* Available actions on the current state, as a JSON array in the library's
 * deterministic enumeration order. */
GUIQ_API guiq_status guiq_session_actions(const guiq_session* session, char** out_json);

/* Execute one action (JSON, as produced by guiq_session_actions). The result
 * JSON carries the next state, the covered function ids and the exited flag. */
GUIQ_API guiq_status guiq_session_step(guiq_session* session, const char* action_json,
                                       char** out_result_json);

GUIQ_API void guiq_session_close(guiq_session* session);

/* ---- experiment verbs ------------------------------------------------------ */

/* Each verb consumes an experiment-spec JSON document and writes its outputs
 * (manifest, reports, logs) into out_dir. */

GUIQ_API guiq_status guiq_run_train(const char* spec_json, const char* out_dir);

GUIQ_API guiq_status guiq_run_evaluate(const char* spec_json, const char* checkpoint_path,
                                       const char* out_dir);

GUIQ_API guiq_status guiq_run_commit_eval(const char* spec_json, const char* checkpoint_path,
                                          const char* out_dir);

GUIQ_API guiq_status guiq_run_baseline(const char* spec_json, const char* out_dir);

GUIQ_API guiq_status guiq_run_report(const char* const* run_dirs, size_t run_dir_count,
                                     const char* out_dir);

/* Re-executes the run recorded in a manifest and byte-compares the primary
 * report. out_identical receives 1 when the reports match. */
GUIQ_API guiq_status guiq_run_replay(const char* manifest_path, const char* out_dir,
                                     int* out_identical);

#ifdef __cplusplus
}
#endif

#endif /* GUIQ_H */
