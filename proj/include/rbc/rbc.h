/* C interface of the rbc library.
 *
 * Every function returns an rbc_status; on failure the message is available
 * from rbc_last_error() on the same thread until the next call. Strings
 * returned through `char**` are owned by the caller and released with
 * rbc_string_free(). Handles are released with their *_free function; passing
 * NULL to a free function is a no-op.
 */
#ifndef RBC_RBC_H
#define RBC_RBC_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#  if defined(RBC_BUILDING_LIBRARY)
#    define RBC_API __declspec(dllexport)
#  else
#    define RBC_API __declspec(dllimport)
#  endif
#else
#  define RBC_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum rbc_status {
  RBC_OK = 0,
  RBC_E_INVALID_ARGUMENT = 1,
  RBC_E_IO = 2,
  RBC_E_SCHEMA = 3,
  RBC_E_EMPTY_DATA = 4,
  RBC_E_EMPTY_REGION = 5,
  RBC_E_PARTITION = 6,
  RBC_E_STRATIFICATION = 7,
  RBC_E_DEGENERATE_SHAPE = 8,
  RBC_E_INSUFFICIENT_TEXTURE = 9,
  RBC_E_UNSUPPORTED = 10,
  RBC_E_DIVERGENCE = 11,
  RBC_E_EMPTY_SELECTION = 12,
  RBC_E_PARSE = 13,
  RBC_E_INTERNAL = 100
} rbc_status;

typedef struct rbc_dataset rbc_dataset;
typedef struct rbc_model rbc_model;

/* ---- library ---------------------------------------------------------- */

RBC_API const char* rbc_version(void);
RBC_API int rbc_format_version(void);
RBC_API const char* rbc_status_name(rbc_status status);
RBC_API const char* rbc_last_error(void);
RBC_API void rbc_string_free(char* s);
/* 0 = one worker per hardware thread. */
RBC_API rbc_status rbc_set_threads(int threads);
/* 0 = errors only, 1 = warnings (default), 2 = info. */
RBC_API void rbc_set_log_level(int level);

/* Feature registry: {"schema_hash", "count", "groups": {...}, "features": [{name, group}]}. */
RBC_API rbc_status rbc_registry_json(char** out_json);
RBC_API rbc_status rbc_registry_hash(char** out_hash);

/* ---- datasets --------------------------------------------------------- */

/* Loads a feature CSV, a manifest CSV (id,label,path[,mask]) or a directory
 * of class folders. Images are extracted with `options_json` (may be NULL):
 * {"groups": ["shape", ...], "target_side": 72, "rescale": true}. */
RBC_API rbc_status rbc_dataset_load(const char* path, const char* options_json, rbc_dataset** out);
RBC_API rbc_status rbc_dataset_save_csv(const rbc_dataset* ds, const char* path);
/* {"rows", "features", "schema_hash", "labeled", "class_counts"} */
RBC_API rbc_status rbc_dataset_info(const rbc_dataset* ds, char** out_json);
RBC_API size_t rbc_dataset_rows(const rbc_dataset* ds);
RBC_API void rbc_dataset_free(rbc_dataset* ds);

/* Writes a synthetic smear (class folders, masks, manifest.csv) to `dir`.
 * options_json: {"n_cells", "seed", "canvas", "proportions": [c, e, o], "noise"}. */
RBC_API rbc_status rbc_synth_write(const char* dir, const char* options_json, size_t* out_cells);

/* ---- models ----------------------------------------------------------- */

/* `spec_json` is a learner config ({"kind": "RF", ...}) or an ensemble spec
 * (an object with "members"). `seed` applies when the spec has none. */
RBC_API rbc_status rbc_model_train(const rbc_dataset* train, const char* spec_json, uint64_t seed, rbc_model** out);
RBC_API rbc_status rbc_model_load(const char* path, rbc_model** out);
RBC_API rbc_status rbc_model_save(const rbc_model* model, const char* path);
/* {"format_version", "learner_kind", "schema_hash", "n_features", "standardized", "spec"} */
RBC_API rbc_status rbc_model_info(const rbc_model* model, char** out_json);
/* Writes `labels` (capacity `n`, must equal the dataset rows). */
RBC_API rbc_status rbc_model_predict(const rbc_model* model, const rbc_dataset* data, int* labels, size_t n);
/* One raw feature vector; `proba` (may be NULL) receives 3 class probabilities. */
RBC_API rbc_status rbc_model_predict_vector(const rbc_model* model, const double* x, size_t n, int* label,
                                            double* proba);
/* Writes the input table with the predicted class as a trailing column:
 * `label` for unlabeled input, `predicted` next to an existing label. */
RBC_API rbc_status rbc_model_predict_csv(const rbc_model* model, const rbc_dataset* data, const char* out_path);
/* {"matrix", "metrics", "markdown_row"} on a labeled dataset. */
RBC_API rbc_status rbc_model_evaluate(const rbc_model* model, const rbc_dataset* data, const char* label,
                                      char** out_json);
RBC_API void rbc_model_free(rbc_model* model);

/* ---- metrics and importance ------------------------------------------ */

/* Metric suite of a k x k matrix given as CSV text (rows = true class). */
RBC_API rbc_status rbc_metrics_from_matrix_csv(const char* csv_text, char** out_json);
RBC_API rbc_status rbc_metrics_from_matrix(const int64_t* counts, int k, char** out_json);

/* method "mdi" (tree models) or "permutation" (needs labeled `eval`).
 * options_json: {"metric": "accuracy", "repeats": 5, "seed": 0, "max_rows": 0}.
 * Result: {"report": {...}, "csv": "...", "markdown": "..."}. */
RBC_API rbc_status rbc_importance(const rbc_model* model, const rbc_dataset* eval, const char* method,
                                  const char* options_json, char** out_json);

/* ---- experiments ------------------------------------------------------ */

/* Runs every experiment in a plan file. overrides_json (may be NULL):
 * {"seed", "output_dir", "timing_repeats"}. Reports are written when an
 * output directory is known. Result: array of {"id", "files", "report",
 * "markdown"}. */
RBC_API rbc_status rbc_experiment_run(const char* plan_path, const char* overrides_json, char** out_json);
/* Reference-matrix replay: {"pass", "report", "markdown"}. */
RBC_API rbc_status rbc_replay_fixtures(char** out_json);

#ifdef __cplusplus
}
#endif

#endif /* RBC_RBC_H */
