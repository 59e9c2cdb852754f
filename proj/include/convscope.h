/* convscope C API: convnet training engine with deconvnet diagnostics.
 *
 * Opaque handles plus status codes. Every function that can fail returns a
 * convscope_status; the detailed message of the most recent failure on the
 * calling thread is available from convscope_last_error().
 */
#ifndef CONVSCOPE_H
#define CONVSCOPE_H

#include <stdint.h>

#if defined(_WIN32)
#define CONVSCOPE_API __declspec(dllexport)
#else
#define CONVSCOPE_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum convscope_status {
  CONVSCOPE_OK = 0,
  CONVSCOPE_ERR_INVALID_ARGUMENT = 1,
  CONVSCOPE_ERR_SHAPE = 2,
  CONVSCOPE_ERR_CONFIG = 3,
  CONVSCOPE_ERR_IO = 4,
  CONVSCOPE_ERR_FORMAT = 5,
  CONVSCOPE_ERR_INTEGRITY = 6,
  CONVSCOPE_ERR_NUMERIC = 7,
  CONVSCOPE_ERR_INPUT = 8,
  CONVSCOPE_ERR_INTERNAL = 9
} convscope_status;

CONVSCOPE_API const char* convscope_status_name(convscope_status s);

/* Message of the last failed call on this thread; empty string if none. */
CONVSCOPE_API const char* convscope_last_error(void);

/* Worker threads for tensor kernels; 0 restores the hardware default.
 * Results are bit-identical for any thread count. */
CONVSCOPE_API void convscope_set_threads(int n);

CONVSCOPE_API const char* convscope_version(void);

/* ---- experiment runs -------------------------------------------------
 * A run is one configured subcommand execution (train, eval, viz, evolve,
 * occlude, correspond, invariance, transfer, ablate, synth). Options are
 * string key/value pairs; a config file may be loaded first and individual
 * keys overridden. Executing the run writes its outputs and a manifest.json
 * into the configured output directory. */
typedef struct convscope_run convscope_run;

CONVSCOPE_API convscope_status convscope_run_new(const char* subcommand,
                                                 convscope_run** out);
CONVSCOPE_API convscope_status convscope_run_load_config(convscope_run* run,
                                                         const char* path);
CONVSCOPE_API convscope_status convscope_run_set(convscope_run* run, const char* key,
                                                 const char* value);
CONVSCOPE_API convscope_status convscope_run_execute(convscope_run* run);
CONVSCOPE_API void convscope_run_free(convscope_run* run);

/* NULL-terminated list of valid subcommand names. */
CONVSCOPE_API const char* const* convscope_subcommands(void);

/* ---- models ---------------------------------------------------------- */
typedef struct convscope_model convscope_model;

CONVSCOPE_API convscope_status convscope_model_load(const char* checkpoint_path,
                                                    convscope_model** out);
CONVSCOPE_API void convscope_model_free(convscope_model* model);

CONVSCOPE_API convscope_status convscope_model_input_shape(const convscope_model* model,
                                                           int64_t* channels,
                                                           int64_t* height,
                                                           int64_t* width);
CONVSCOPE_API convscope_status convscope_model_class_count(const convscope_model* model,
                                                           int* classes);
CONVSCOPE_API convscope_status convscope_model_epoch(const convscope_model* model,
                                                     int* epoch);

/* Eval-mode forward of one image in channel-major (c,h,w) order, values
 * already preprocessed (mean-subtracted). Writes class probabilities. */
CONVSCOPE_API convscope_status convscope_model_predict(const convscope_model* model,
                                                       const double* chw, int64_t len,
                                                       double* probs, int64_t probs_len);

#ifdef __cplusplus
}
#endif

#endif /* CONVSCOPE_H */
