/* C interface to the gridstab library. All handles are opaque; every call
 * returns a gs_status and, on failure, leaves a message retrievable with
 * gs_last_error() on the calling thread. Strings returned through char** are
 * owned by the caller and released with gs_string_free(). */
#ifndef GRIDSTAB_H
#define GRIDSTAB_H

#include <stddef.h>
#include <stdint.h>

#if defined(GRIDSTAB_BUILDING_LIBRARY)
#define GS_API __attribute__((visibility("default")))
#else
#define GS_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum gs_status {
  GS_OK = 0,
  GS_ERR_INVALID_ARGUMENT = 1,
  GS_ERR_IO = 2,
  GS_ERR_FORMAT = 3,
  GS_ERR_STRUCTURE = 4,
  GS_ERR_INFEASIBLE = 5,
  GS_ERR_NUMERIC = 6,
  GS_ERR_INTERNAL = 7
} gs_status;

typedef struct gs_config gs_config;
typedef struct gs_dataset gs_dataset;
typedef struct gs_features gs_features;
typedef struct gs_model gs_model;

typedef struct gs_metrics {
  double threshold;
  double kkd;
  double ryd;
  double ysl;
  double acc;
  int infeasible; /* calibration could not reach the target reliability */
} gs_metrics;

typedef struct gs_dataset_info {
  int buses;
  int elements;
  int ac_lines;
  int days;
  int slots_per_day;
  long snapshots;
  long faults;
  long unstable;
} gs_dataset_info;

GS_API const char* gs_version(void);
GS_API const char* gs_last_error(void);
GS_API const char* gs_status_name(gs_status status);
GS_API void gs_string_free(char* s);

/* ---- configuration ---- */
GS_API gs_status gs_config_default(gs_config** out);
GS_API gs_status gs_config_load(const char* path, gs_config** out);
GS_API gs_status gs_config_parse(const char* json_text, gs_config** out);
/* A zero argument keeps the current value. */
GS_API gs_status gs_config_set_synth_size(gs_config* cfg, int buses, int days);
GS_API gs_status gs_config_set_synth_seed(gs_config* cfg, uint64_t seed);
/* Model, training and SVM seeds. */
GS_API gs_status gs_config_set_train_seed(gs_config* cfg, uint64_t seed);
GS_API gs_status gs_config_set_target_kkd(gs_config* cfg, double target_kkd);
/* Fixed decision threshold that skips calibration; NaN clears it. */
GS_API gs_status gs_config_set_threshold(gs_config* cfg, double threshold);
GS_API gs_status gs_config_set_day(gs_config* cfg, int day);
GS_API gs_status gs_config_set_epochs(gs_config* cfg, int epochs);
GS_API gs_status gs_config_to_json(const gs_config* cfg, char** out);
/* Logs the resolved configuration at info level. */
GS_API gs_status gs_config_log(const gs_config* cfg);
GS_API void gs_config_free(gs_config* cfg);

/* ---- datasets ---- */
GS_API gs_status gs_dataset_synthesize(const gs_config* cfg, gs_dataset** out);
/* Writes config.json, network.json, snapshots.jsonl and faults.jsonl. */
GS_API gs_status gs_dataset_save(const gs_dataset* ds, const gs_config* cfg, const char* dir);
GS_API gs_status gs_dataset_load(const char* dir, gs_dataset** out);
GS_API gs_status gs_dataset_get_info(const gs_dataset* ds, gs_dataset_info* out);
/* GS_ERR_FORMAT when the dataset was generated from a different synth section. */
GS_API gs_status gs_dataset_check_config(const gs_dataset* ds, const gs_config* cfg);
GS_API void gs_dataset_free(gs_dataset* ds);

/* ---- features ---- */
/* days may be NULL (all days). */
GS_API gs_status gs_features_build(const gs_dataset* ds, const gs_config* cfg, const int* days, size_t n_days,
                                   gs_features** out);
GS_API gs_status gs_features_save(const gs_features* f, const char* path);
GS_API gs_status gs_features_load(const char* path, gs_features** out);
GS_API gs_status gs_features_sample_count(const gs_features* f, size_t* out);
/* GS_ERR_FORMAT when the feature spec differs from the configured one. */
GS_API gs_status gs_features_check_config(const gs_features* f, const gs_config* cfg);
GS_API void gs_features_free(gs_features* f);

/* ---- models ---- */
/* variant: graph | graphpool | mlp | deepcnn5 or a canonical variant name.
 * ablate: NULL or one of global | local | graph | embedding (applies to the
 * full model). Trains on the head of the configured day and calibrates the
 * threshold on its tail. */
GS_API gs_status gs_model_train(const gs_features* f, const gs_config* cfg, const char* variant, const char* ablate,
                                gs_model** out);
GS_API gs_status gs_model_save(const gs_model* m, const char* path);
GS_API gs_status gs_model_load(const char* path, gs_model** out);
GS_API gs_status gs_model_variant(const gs_model* m, char** out);
GS_API gs_status gs_model_threshold(const gs_model* m, double* out);
GS_API gs_status gs_model_history_csv(const gs_model* m, char** out);
/* Scores every sample of `day`; *n receives the sample count. When scores is
 * NULL or capacity is too small, only *n is written. */
GS_API gs_status gs_model_predict(const gs_model* m, const gs_features* f, int day, double* scores, size_t capacity,
                                  size_t* n);
/* Metrics on `day` at the stored threshold, or at `threshold` when it is not NaN. */
GS_API gs_status gs_model_evaluate(const gs_model* m, const gs_features* f, int day, double threshold,
                                   gs_metrics* out);
GS_API void gs_model_free(gs_model* m);

/* ---- experiments ---- */
/* Trains `system` (a variant, an ablation such as no-local, or a baseline:
 * prevday | svm | mlp) on the configured day and evaluates the next one. */
GS_API gs_status gs_run_system(const gs_features* f, const gs_config* cfg, const char* system, gs_metrics* out);

/* Report tables as CSV and aligned text. any_infeasible (may be NULL) is set
 * when some row could not reach the target reliability. */
GS_API gs_status gs_report_daily(const gs_features* f, const gs_config* cfg, const char* system, char** csv,
                                 char** table, int* any_infeasible);
GS_API gs_status gs_report_ablation(const gs_features* f, const gs_config* cfg, char** csv, char** table,
                                    int* any_infeasible);
GS_API gs_status gs_report_compare(const gs_features* f, const gs_config* cfg, char** csv, char** table,
                                   int* any_infeasible);

#ifdef __cplusplus
}
#endif

#endif /* GRIDSTAB_H */
