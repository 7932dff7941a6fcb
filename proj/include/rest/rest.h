/* Zero-shot action recognition: encoder training, semantic transfer and
 * evaluation behind a C interface.
 *
 * Every function returns a rest_status. On failure the message is available
 * from rest_last_error() until the next call on the same thread. Paths are
 * UTF-8. Optional arguments accept NULL.
 */
#ifndef REST_REST_H
#define REST_REST_H

#include <stddef.h>
#include <stdint.h>

#if defined(REST_BUILDING_LIBRARY)
#define REST_API __attribute__((visibility("default")))
#else
#define REST_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum rest_status {
  REST_OK = 0,
  REST_ERR_INVALID_ARGUMENT = 1,
  REST_ERR_DIMENSION = 2,
  REST_ERR_FORMAT = 3,
  REST_ERR_IO = 4,
  REST_ERR_CONFIG = 5,
  REST_ERR_NUMERIC = 6,
  REST_ERR_CONTRACT = 7,
  REST_ERR_VALIDATION = 8,
  REST_ERR_INDEX = 9,
  REST_ERR_COVERAGE = 10,
  REST_ERR_DISJOINTNESS = 11,
  REST_ERR_SCALE = 12,
  REST_ERR_COMPOSITION = 13,
  REST_ERR_FOLD = 14,
  REST_ERR_PROTOCOL = 15,
  REST_ERR_INTERNAL = 99
} rest_status;

REST_API const char* rest_last_error(void);
/* Newline-separated warnings from the last call (may be empty). */
REST_API const char* rest_last_warnings(void);
REST_API const char* rest_status_name(rest_status status);
REST_API const char* rest_version(void);

typedef struct rest_model rest_model;

/* Called once per training epoch. */
typedef void (*rest_epoch_callback)(size_t epoch, double loss_cls, double loss_mtl, double loss_total,
                                    double train_top1, void* user);

/* config_path: run configuration JSON. seed overrides the config's seed;
 * one of the two must provide it. */
REST_API rest_status rest_synth_generate(const char* config_path, const uint64_t* seed, const char* out_dir);

REST_API rest_status rest_embed_labels(const char* vectors_path, const char* labels_path, const char* out_path);

REST_API rest_status rest_model_train(const char* data_path, const char* config_path, const uint64_t* seed,
                                      const char* log_path, rest_epoch_callback on_epoch, void* user,
                                      rest_model** out_model);
REST_API rest_status rest_model_load(const char* path, rest_model** out_model);
REST_API rest_status rest_model_save(const rest_model* model, const char* path);
REST_API void rest_model_free(rest_model* model);
REST_API size_t rest_model_hidden_dim(const rest_model* model);
REST_API size_t rest_model_parameter_count(const rest_model* model);

/* frames: t rows of p doubles, row-major. out receives hidden_dim values. */
REST_API rest_status rest_model_represent(const rest_model* model, const double* frames, size_t t, size_t p,
                                          double* out, size_t out_len);
REST_API rest_status rest_model_represent_dataset(const rest_model* model, const char* data_path,
                                                  const char* out_path);
/* Classification-head top-1 on a labelled dataset. */
REST_API rest_status rest_model_head_accuracy(const rest_model* model, const char* data_path, double* out);

REST_API rest_status rest_build_prototypes(const char* reps_path, const char* out_path);

typedef struct rest_transfer_options {
  const char* config_path; /* transfer section supplies defaults */
  double theta;            /* <= 0: unset */
  size_t k;                /* 0: unset */
  size_t rho;              /* 0: unset */
  int cv;                  /* nonzero: cross-validate (theta, k, rho) on seen classes */
  const char* grid_path;   /* cv grid; NULL = default grid */
  const char* seen_reps_path; /* seen training representations, required for cv */
  size_t folds;            /* 0: unset */
  const uint64_t* seed;    /* cv fold assignment */
} rest_transfer_options;

REST_API void rest_transfer_options_init(rest_transfer_options* options);
REST_API rest_status rest_transfer(const char* protos_path, const char* seen_emb_path,
                                   const char* unseen_emb_path, const rest_transfer_options* options,
                                   const char* out_path);

typedef struct rest_eval_options {
  const char* config_path; /* eval section supplies defaults */
  double fraction;         /* <= 0: unset */
  size_t splits;           /* 0: unset */
  const uint64_t* seed;
  const char* format;      /* "json" (default) or "csv" */
  int baseline;            /* nonzero: seen-label nearest-neighbour baseline */
  size_t hubness_k;        /* 0: unset */
  double theta;            /* override the transfer document's parameters; <= 0: unset */
  size_t k;
  size_t rho;
} rest_eval_options;

REST_API void rest_eval_options_init(rest_eval_options* options);
/* mean_top1 / mean_skewness may be NULL. */
REST_API rest_status rest_evaluate(const char* reps_path, const char* transfer_path,
                                   const rest_eval_options* options, const char* out_path,
                                   double* mean_top1, double* mean_skewness);

REST_API rest_status rest_hubness(const char* reps_path, const char* protos_path, size_t k,
                                  const char* out_path, double* skewness);

/* Writes the attention grid as text. written receives the byte count
 * excluding the terminator; pass buf = NULL to query the size. */
REST_API rest_status rest_mask_dump(size_t t, size_t words, const char* scheme, char* buf, size_t cap,
                                    size_t* written);

#ifdef __cplusplus
}
#endif

#endif /* REST_REST_H */
