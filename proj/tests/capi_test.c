/* Exercises the C interface from plain C: handle lifetimes, error codes and
 * the string ownership rules. */
#include <stdio.h>
#include <string.h>

#include "rbc/rbc.h"

static int failures = 0;

#define CHECK(cond)                                                      \
  do {                                                                   \
    if (!(cond)) {                                                       \
      fprintf(stderr, "%s:%d: failed: %s\n", __FILE__, __LINE__, #cond); \
      ++failures;                                                        \
    }                                                                    \
  } while (0)

static int contains(const char* haystack, const char* needle) {
  return haystack != NULL && strstr(haystack, needle) != NULL;
}

int main(int argc, char** argv) {
  const char* dir = argc > 1 ? argv[1] : "capi_work";
  char path[1024];
  char* json = NULL;

  CHECK(strcmp(rbc_version(), "1.0.0") == 0);
  CHECK(rbc_format_version() == 1);
  CHECK(strcmp(rbc_status_name(RBC_E_SCHEMA), "schema") == 0);
  rbc_set_log_level(0);
  CHECK(rbc_set_threads(2) == RBC_OK);
  CHECK(rbc_set_threads(-1) == RBC_E_INVALID_ARGUMENT);
  CHECK(strlen(rbc_last_error()) > 0);

  CHECK(rbc_registry_json(&json) == RBC_OK);
  CHECK(contains(json, "\"count\": 121"));
  rbc_string_free(json);
  json = NULL;

  /* Null arguments are rejected, not dereferenced. */
  CHECK(rbc_dataset_load(NULL, NULL, NULL) == RBC_E_INVALID_ARGUMENT);
  CHECK(rbc_model_info(NULL, &json) == RBC_E_INVALID_ARGUMENT);
  rbc_dataset_free(NULL);
  rbc_model_free(NULL);
  rbc_string_free(NULL);

  rbc_dataset* missing = NULL;
  CHECK(rbc_dataset_load("/nonexistent/features.csv", NULL, &missing) == RBC_E_IO);
  CHECK(missing == NULL);
  CHECK(contains(rbc_last_error(), "nonexistent"));

  size_t cells = 0;
  snprintf(path, sizeof path, "%s/smear", dir);
  CHECK(rbc_synth_write(path, "{\"n_cells\": 60, \"seed\": 11}", &cells) == RBC_OK);
  CHECK(cells == 60);

  rbc_dataset* ds = NULL;
  CHECK(rbc_dataset_load(path, "{\"groups\": [\"shape\", \"texture\"]}", &ds) == RBC_OK);
  if (ds == NULL) {
    fprintf(stderr, "cannot continue: %s\n", rbc_last_error());
    return 1;
  }
  CHECK(rbc_dataset_rows(ds) == 60);
  CHECK(rbc_dataset_info(ds, &json) == RBC_OK);
  CHECK(contains(json, "\"labeled\": true"));
  rbc_string_free(json);
  json = NULL;

  /* A color member cannot be fitted on a table without color columns. */
  rbc_model* model = NULL;
  CHECK(rbc_model_train(ds, "{\"kind\": \"RF\", \"group\": \"color\"}", 1, &model) != RBC_OK);
  CHECK(model == NULL);

  CHECK(rbc_model_train(ds, "{\"kind\": \"NOPE\"}", 1, &model) == RBC_E_PARSE);
  CHECK(model == NULL);

  CHECK(rbc_model_train(ds, "{\"kind\": \"DT\"}", 1, &model) == RBC_OK);
  if (model == NULL) {
    rbc_dataset_free(ds);
    return 1;
  }
  int labels[60];
  CHECK(rbc_model_predict(model, ds, labels, 59) == RBC_E_INVALID_ARGUMENT);
  CHECK(rbc_model_predict(model, ds, labels, 60) == RBC_OK);
  for (int i = 0; i < 60; ++i) CHECK(labels[i] >= 0 && labels[i] <= 2);

  CHECK(rbc_model_evaluate(model, ds, "DT", &json) == RBC_OK);
  CHECK(contains(json, "\"sds\""));
  rbc_string_free(json);
  json = NULL;

  CHECK(rbc_importance(model, NULL, "mdi", NULL, &json) == RBC_OK);
  rbc_string_free(json);
  json = NULL;
  CHECK(rbc_importance(model, NULL, "permutation", NULL, &json) == RBC_E_INVALID_ARGUMENT);

  snprintf(path, sizeof path, "%s/dt.json", dir);
  CHECK(rbc_model_save(model, path) == RBC_OK);
  rbc_model* loaded = NULL;
  CHECK(rbc_model_load(path, &loaded) == RBC_OK);
  if (loaded != NULL) {
    int again[60];
    CHECK(rbc_model_predict(loaded, ds, again, 60) == RBC_OK);
    CHECK(memcmp(labels, again, sizeof labels) == 0);
  }

  /* Vector length must match the model schema. */
  double x[3] = {0.0, 0.0, 0.0};
  int label = -1;
  CHECK(rbc_model_predict_vector(model, x, 3, &label, NULL) == RBC_E_SCHEMA);

  const int64_t counts[9] = {1042, 5, 52, 16, 153, 23, 75, 3, 71};
  CHECK(rbc_metrics_from_matrix(counts, 3, &json) == RBC_OK);
  CHECK(contains(json, "\"sds\": \"89.72\""));
  rbc_string_free(json);
  json = NULL;
  CHECK(rbc_metrics_from_matrix_csv("1,2\n3", &json) == RBC_E_INVALID_ARGUMENT);

  rbc_model_free(loaded);
  rbc_model_free(model);
  rbc_dataset_free(ds);

  if (failures != 0) {
    fprintf(stderr, "%d check(s) failed\n", failures);
    return 1;
  }
  printf("C API checks passed\n");
  return 0;
}
