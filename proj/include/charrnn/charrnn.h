/*
 * charrnn C API
 *
 * Character-level recurrent text generation: vocabulary inspection, training
 * of LSTM / GRU / bidirectional-LSTM models, checkpoint loading, temperature
 * sampling and training-history reports.
 *
 * Conventions
 *   - Every fallible call returns crnn_status; CRNN_OK is 0.
 *   - On failure crnn_last_error() describes the problem. The message is
 *     thread-local and stays valid until the next failing call on the same
 *     thread.
 *   - Objects are opaque handles released with their matching *_free call.
 *     Free functions accept NULL.
 *   - Strings returned through char** are NUL-terminated UTF-8 owned by the
 *     caller and released with crnn_string_free().
 */
#ifndef CHARRNN_H
#define CHARRNN_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#  if defined(CHARRNN_BUILDING)
#    define CHARRNN_API __declspec(dllexport)
#  else
#    define CHARRNN_API __declspec(dllimport)
#  endif
#else
#  define CHARRNN_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum crnn_status {
  CRNN_OK = 0,
  CRNN_ERR_USAGE = 1,
  CRNN_ERR_IO = 2,
  CRNN_ERR_ENCODING = 3,
  CRNN_ERR_CORPUS = 4,
  CRNN_ERR_VOCABULARY = 5,
  CRNN_ERR_SHAPE = 6,
  CRNN_ERR_CONFIG = 7,
  CRNN_ERR_LABEL = 8,
  CRNN_ERR_DISTRIBUTION = 9,
  CRNN_ERR_OPTIMIZER = 10,
  CRNN_ERR_NUMERIC = 11,
  CRNN_ERR_FORMAT = 12,
  CRNN_ERR_INTEGRITY = 13,
  CRNN_ERR_INTERNAL = 100
} crnn_status;

CHARRNN_API const char* crnn_version(void);
CHARRNN_API const char* crnn_status_name(crnn_status status);
CHARRNN_API const char* crnn_last_error(void);
CHARRNN_API void crnn_string_free(char* s);

/* Writes `len` bytes to `path` through a temporary file and rename, so a
 * failed write never leaves a partial file behind. */
CHARRNN_API crnn_status crnn_write_file(const char* path, const char* data,
                                        size_t len);

/* ---- vocabulary ------------------------------------------------------- */

typedef struct crnn_vocab crnn_vocab;

CHARRNN_API crnn_status crnn_vocab_from_corpus(const char* corpus_path,
                                               crnn_vocab** out);
CHARRNN_API size_t crnn_vocab_size(const crnn_vocab* vocab);
/* Code point at `index`, or UINT32_MAX when out of range. */
CHARRNN_API uint32_t crnn_vocab_code_point(const crnn_vocab* vocab, size_t index);
/* "V=<n>\n" followed by "<index>\t<char>\n" per entry; control characters
 * are escaped (\n, \t, \r, \\, \xHH). */
CHARRNN_API crnn_status crnn_vocab_table(const crnn_vocab* vocab, char** out);
CHARRNN_API void crnn_vocab_free(crnn_vocab* vocab);

/* ---- training --------------------------------------------------------- */

typedef struct crnn_train_options {
  const char* corpus;          /* required: UTF-8 text file */
  const char* kind;            /* "lstm" | "gru" | "birnn" */
  const char* preset;          /* "uni" | "bi" | "quad"; NULL uses layer_widths */
  double preset_scale;         /* (0, 1]; shrinks preset widths */
  const size_t* layer_widths;  /* used when preset is NULL */
  size_t num_layers;
  size_t seq_len;
  size_t batch_size;
  size_t epochs;
  size_t embed_dim;
  double lr;
  double dropout;
  double clip_norm;            /* <= 0 disables clipping */
  uint64_t seed;               /* init, shuffle and dropout seeds derive from it */
  int forget_bias;             /* nonzero: LSTM forget-gate bias starts at 1 */
  const char* checkpoint_out;  /* NULL: not written */
  const char* history_out;     /* NULL: not written */
} crnn_train_options;

/* Defaults: lstm, preset uni, scale 1, seq_len 100, batch 64, 75 epochs,
 * embed_dim 256, lr 1e-3, dropout 0.4, clip_norm 5, seed 0, forget_bias 1. */
CHARRNN_API void crnn_train_options_init(crnn_train_options* options);

typedef void (*crnn_epoch_fn)(void* user, size_t epoch, double mean_loss,
                              double ms_per_step);

CHARRNN_API crnn_status crnn_train(const crnn_train_options* options,
                                   crnn_epoch_fn on_epoch, void* user);

/* ---- models and generation -------------------------------------------- */

typedef struct crnn_model crnn_model;

/* Loads a CRNF checkpoint and rebuilds it for single-character generation. */
CHARRNN_API crnn_status crnn_model_load(const char* checkpoint_path,
                                        crnn_model** out);
CHARRNN_API size_t crnn_model_parameter_count(const crnn_model* model);
CHARRNN_API size_t crnn_model_vocab_size(const crnn_model* model);
/* Checkpoint header as JSON (config and vocabulary). */
CHARRNN_API crnn_status crnn_model_describe(const crnn_model* model, char** out);
CHARRNN_API void crnn_model_free(crnn_model* model);

typedef struct crnn_generate_options {
  const char* prime;   /* required, non-empty UTF-8 */
  size_t length;       /* characters generated after the prime */
  double temperature;  /* > 0 */
  const char* mode;    /* "sample" | "argmax" */
  uint64_t seed;
} crnn_generate_options;

/* Defaults: length 200, temperature 1, mode "sample", seed 0. */
CHARRNN_API void crnn_generate_options_init(crnn_generate_options* options);

/* Returns prime followed by the generated characters. */
CHARRNN_API crnn_status crnn_generate(const crnn_model* model,
                                      const crnn_generate_options* options,
                                      char** out);

/* ---- history reports -------------------------------------------------- */

typedef struct crnn_report crnn_report;

CHARRNN_API crnn_status crnn_report_create(crnn_report** out);
/* Appends a history CSV; `run` NULL names the run after the file stem. */
CHARRNN_API crnn_status crnn_report_add(crnn_report* report, const char* run,
                                        const char* history_path);
CHARRNN_API size_t crnn_report_row_count(const crnn_report* report);
/* "run,epoch,mean_loss,ms_per_step" long-format CSV. */
CHARRNN_API crnn_status crnn_report_render(const crnn_report* report, char** out);
CHARRNN_API void crnn_report_free(crnn_report* report);

#ifdef __cplusplus
}
#endif

#endif /* CHARRNN_H */
