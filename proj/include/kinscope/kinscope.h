#ifndef KINSCOPE_KINSCOPE_H
#define KINSCOPE_KINSCOPE_H

#include <stddef.h>

#if defined(_WIN32)
#define KS_API __declspec(dllexport)
#else
#define KS_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum ks_status {
  KS_OK = 0,
  KS_ERR_INVALID_ARGUMENT = 1,
  KS_ERR_PARSE = 2,
  KS_ERR_VALIDATION = 3,
  KS_ERR_CONFIG = 4,
  KS_ERR_LOOKUP = 5,
  KS_ERR_TRANSPORT = 6,
  KS_ERR_SHAPE = 7,
  KS_ERR_NUMERIC = 8,
  KS_ERR_DATA = 9,
  KS_ERR_STATE = 10,
  KS_ERR_LABEL = 11,
  KS_ERR_IO = 12,
  KS_ERR_INTERNAL = 13
} ks_status;

/* Static string such as "KS_ERR_CONFIG". */
KS_API const char* ks_status_name(ks_status status);
/* Message of the last failed call on this thread; "" after a success. */
KS_API const char* ks_last_error(void);
KS_API const char* ks_version(void);

/* Receives one line of output (no trailing newline). */
typedef void (*ks_line_sink)(const char* line, void* user);

/* ---- run configuration ---------------------------------------------- */

typedef struct ks_config ks_config;

/* Defaults: the full-scale settings. */
KS_API ks_status ks_config_create(ks_config** out);
/* Reads key = value lines on top of the defaults. */
KS_API ks_status ks_config_load(const char* path, ks_config** out);
KS_API ks_status ks_config_set(ks_config* config, const char* key, const char* value);
/* Copies the value (NUL-terminated) into buf when it fits; *needed gets the
   required size including the terminator. buf may be NULL when cap is 0. */
KS_API ks_status ks_config_get(const ks_config* config, const char* key, char* buf, size_t cap, size_t* needed);
/* Whole configuration as key = value lines, same buffer contract. */
KS_API ks_status ks_config_dump(const ks_config* config, char* buf, size_t cap, size_t* needed);
KS_API void ks_config_destroy(ks_config* config);

/* ---- trained model ---------------------------------------------------- */

typedef struct ks_model ks_model;

KS_API ks_status ks_model_load(const char* checkpoint_path, ks_model** out);
KS_API void ks_model_destroy(ks_model* model);
/* Number of base models (input rows) and of family labels. */
KS_API ks_status ks_model_shape(const ks_model* model, size_t* n_models, size_t* n_families);
KS_API ks_status ks_model_family_name(const ks_model* model, size_t index, char* buf, size_t cap, size_t* needed);
/* Scores one text from its per-model log-probability rows (registry order).
   family_probs must hold n_families doubles; it may be NULL. */
KS_API ks_status ks_model_detect(const ks_model* model, const double* const* rows, const size_t* lengths,
                                 size_t n_rows, double* y_b, double* family_probs);

/* ---- workflows (mirror the CLI subcommands) --------------------------- */

KS_API ks_status ks_run_synth(const ks_config* config, ks_line_sink sink, void* user);
KS_API ks_status ks_run_score(const ks_config* config, ks_line_sink sink, void* user);
KS_API ks_status ks_run_train(const ks_config* config, ks_line_sink sink, void* user);
/* Emits one JSON object per sample through the sink. */
KS_API ks_status ks_run_detect(const ks_config* config, ks_line_sink sink, void* user);
KS_API ks_status ks_run_eval(const ks_config* config, ks_line_sink sink, void* user);
KS_API ks_status ks_run_benchmark(const ks_config* config, ks_line_sink sink, void* user);
/* mode: "drift" or "heatmap". */
KS_API ks_status ks_run_simulate(const ks_config* config, const char* mode, ks_line_sink sink, void* user);

#ifdef __cplusplus
}
#endif

#endif
