/* SPDX-License-Identifier: Apache-2.0 */
#ifndef DSA_DSA_H
#define DSA_DSA_H

#include <stddef.h>
#include <stdint.h>

#if defined(DSA_BUILDING_LIBRARY)
#define DSA_API __attribute__((visibility("default")))
#else
#define DSA_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

/* Every function returns a status; on failure dsa_last_error() describes it.
 * Output handles are only written on success unless stated otherwise. */
typedef enum dsa_status {
  DSA_OK = 0,
  DSA_ERR_INVALID_ARGUMENT = 1,
  DSA_ERR_PARSE = 2,
  DSA_ERR_VALIDATION = 3,
  DSA_ERR_IO = 4,
  DSA_ERR_UNKNOWN_LABEL = 5,
  DSA_ERR_MISSING_COLUMN = 6,
  DSA_ERR_SCHEMA_MISMATCH = 7,
  DSA_ERR_TOO_LARGE = 8,
  DSA_ERR_EMPTY_INPUT = 9,
  DSA_ERR_LENGTH_MISMATCH = 10,
  DSA_ERR_NO_DATA = 11,
  DSA_ERR_NO_PATH = 12,
  DSA_ERR_DEGENERATE = 13,
  DSA_ERR_UNKNOWN_TEMPLATE = 14,
  DSA_ERR_UNBOUND_PLACEHOLDER = 15,
  DSA_ERR_BACKEND_UNAVAILABLE = 16,
  DSA_ERR_MALFORMED_RESPONSE = 17,
  DSA_ERR_OPTION_MISSING = 18,
  DSA_ERR_MISSING_REFERENCE = 19,
  DSA_ERR_DIVERGED = 20,
  DSA_ERR_BACKEND_REQUIRED = 21,
  DSA_ERR_COVERAGE_GAP = 22,
  DSA_ERR_INTERNAL = 99
} dsa_status;

typedef struct dsa_schema dsa_schema;
typedef struct dsa_dataset dsa_dataset;
typedef struct dsa_population dsa_population;
typedef struct dsa_table dsa_table;
typedef struct dsa_model dsa_model;

DSA_API const char* dsa_version(void);
DSA_API const char* dsa_status_name(dsa_status status);
/* Message of the last failure on the calling thread ("" if none). */
DSA_API const char* dsa_last_error(void);
/* Frees strings returned through char** outputs. */
DSA_API void dsa_string_free(char* s);
/* Caps worker threads for multi-seed work; 0 = hardware concurrency. */
DSA_API dsa_status dsa_set_threads(size_t threads);
DSA_API dsa_status dsa_sha256_file(const char* path, char** hex_out);

/* Schemas */
DSA_API dsa_status dsa_schema_load(const char* path, dsa_schema** out);
DSA_API dsa_status dsa_schema_from_json(const char* json, dsa_schema** out);
DSA_API dsa_status dsa_schema_to_json(const dsa_schema* schema, char** json_out);
DSA_API dsa_status dsa_schema_hash(const dsa_schema* schema, char** hex_out);
DSA_API uint64_t dsa_schema_num_profiles(const dsa_schema* schema);
DSA_API size_t dsa_schema_num_options(const dsa_schema* schema);
DSA_API void dsa_schema_free(dsa_schema* schema);

/* Respondent data */
DSA_API dsa_status dsa_dataset_load_csv(const dsa_schema* schema, const char* path, dsa_dataset** out);
DSA_API dsa_status dsa_dataset_write_csv(const dsa_dataset* data, const char* path);
/* JSON with respondent count and per-profile cell counts. */
DSA_API dsa_status dsa_dataset_summary(const dsa_dataset* data, char** json_out);
DSA_API size_t dsa_dataset_size(const dsa_dataset* data);
DSA_API void dsa_dataset_free(dsa_dataset* data);

/* Synthetic populations */
DSA_API dsa_status dsa_population_load(const char* path, dsa_population** out);
DSA_API dsa_status dsa_population_schema(const dsa_population* pop, dsa_schema** out);
DSA_API dsa_status dsa_population_sample(const dsa_population* pop, size_t n, uint64_t seed, dsa_dataset** out);
DSA_API dsa_status dsa_population_truth(const dsa_population* pop, dsa_table** out);
DSA_API void dsa_population_free(dsa_population* pop);

/* Distribution tables (profile -> choice distribution) */
DSA_API dsa_status dsa_table_read_csv(const dsa_schema* schema, const char* path, dsa_table** out);
DSA_API dsa_status dsa_table_write_csv(const dsa_table* table, const char* path);
DSA_API size_t dsa_table_size(const dsa_table* table);
DSA_API void dsa_table_free(dsa_table* table);

/* Methods. method_json is a method object such as
 * {"kind": "DSA", "train": {"seed": 1}} or just "\"TS\"". */
DSA_API dsa_status dsa_run_method(const dsa_dataset* train, const char* method_json, dsa_table** out);

/* Trains a TKFT/DSA/AAE model. On DSA_ERR_DIVERGED the model holding the last
 * finite weights and the report are still returned. */
DSA_API dsa_status dsa_train(const dsa_dataset* train, const char* method_json, dsa_model** model_out,
                             char** report_json_out, char** loss_csv_out);
DSA_API dsa_status dsa_model_save(const dsa_model* model, const char* path);
DSA_API dsa_status dsa_model_load(const dsa_schema* schema, const char* path, dsa_model** out);
DSA_API dsa_status dsa_model_predict_all(const dsa_model* model, dsa_table** out);
/* choices: one option index per background question; probs_out: num_options. */
DSA_API dsa_status dsa_model_predict(const dsa_model* model, const uint32_t* choices, size_t num_choices,
                                     double* probs_out, size_t num_options);
DSA_API void dsa_model_free(dsa_model* model);

/* Scores predictions against a truth table; `train` supplies the training
 * table for seen flags and the TS comparison. options_json may be NULL or
 * {"weighting": "respondent" | "uniform", "partial": bool}. */
DSA_API dsa_status dsa_evaluate(const dsa_table* predictions, const dsa_table* truth, const dsa_dataset* train,
                                const char* options_json, char** summary_json_out, char** metrics_csv_out);

/* kind: "data_efficiency" | "size" | "ablation" | "prompt". The result JSON
 * has a "summary" object and a "csv" string. */
DSA_API dsa_status dsa_sweep(const char* kind, const char* config_json, char** result_json_out);

DSA_API dsa_status dsa_kld(const double* p, const double* q, size_t n, double* out);
DSA_API dsa_status dsa_jsd(const double* p, const double* q, size_t n, double* out);

#ifdef __cplusplus
}
#endif

#endif /* DSA_DSA_H */
