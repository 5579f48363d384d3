#ifndef SWNF_SWNF_H
#define SWNF_SWNF_H

/* C interface to the flow library. Every function returning swnf_status
 * leaves a human-readable message retrievable with swnf_last_error() on
 * failure. Points are row-major [n x dim] arrays of doubles. */

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#  if defined(SWNF_BUILDING_LIBRARY)
#    define SWNF_API __declspec(dllexport)
#  else
#    define SWNF_API __declspec(dllimport)
#  endif
#else
#  define SWNF_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum swnf_status {
  SWNF_OK = 0,
  SWNF_INVALID_ARGUMENT = 1,
  SWNF_SHAPE_MISMATCH = 2,
  SWNF_DOMAIN_ERROR = 3,
  SWNF_NON_FINITE = 4,
  SWNF_IO_ERROR = 5,
  SWNF_FORMAT_ERROR = 6,
  SWNF_TRAINING_ABORTED = 7,
  SWNF_AUTODIFF_ERROR = 8,
  SWNF_BUFFER_TOO_SMALL = 9,
  SWNF_INTERNAL_ERROR = 99
} swnf_status;

typedef enum swnf_dataset_kind {
  SWNF_CIRCLES = 0,
  SWNF_MOONS = 1,
  SWNF_BLOBS = 2
} swnf_dataset_kind;

#define SWNF_NUM_DATASETS 3

typedef enum swnf_objective {
  SWNF_OBJECTIVE_MLE = 0,
  SWNF_OBJECTIVE_SW = 1,
  SWNF_OBJECTIVE_HYBRID_DATA = 2,
  SWNF_OBJECTIVE_HYBRID_LATENT = 3
} swnf_objective;

#define SWNF_MAX_HIDDEN 8

typedef struct swnf_model swnf_model;

SWNF_API const char* swnf_version(void);
/* Message of the last failure on the calling thread; empty if none. */
SWNF_API const char* swnf_last_error(void);
SWNF_API const char* swnf_status_name(swnf_status status);

/* ---- names ---------------------------------------------------------- */

SWNF_API swnf_status swnf_parse_dataset(const char* name, swnf_dataset_kind* out);
SWNF_API const char* swnf_dataset_name(swnf_dataset_kind kind);
SWNF_API swnf_status swnf_parse_objective(const char* name, swnf_objective* out);
SWNF_API const char* swnf_objective_name(swnf_objective objective);

/* ---- models --------------------------------------------------------- */

SWNF_API swnf_status swnf_model_create(size_t dim, size_t n_layers, const size_t* hidden,
                                       size_t n_hidden, uint64_t seed, swnf_model** out);
SWNF_API swnf_status swnf_model_load(const char* path, swnf_model** out);
SWNF_API swnf_status swnf_model_save(const swnf_model* model, const char* path);
SWNF_API void swnf_model_destroy(swnf_model* model);
SWNF_API size_t swnf_model_dim(const swnf_model* model);
SWNF_API size_t swnf_model_num_layers(const swnf_model* model);
SWNF_API size_t swnf_model_parameter_count(const swnf_model* model);

/* log_det may be NULL. */
SWNF_API swnf_status swnf_model_forward(const swnf_model* model, const double* x, size_t n,
                                        double* z, double* log_det);
SWNF_API swnf_status swnf_model_inverse(const swnf_model* model, const double* z, size_t n,
                                        double* x);
SWNF_API swnf_status swnf_model_log_prob(const swnf_model* model, const double* x, size_t n,
                                         double* out);
/* out receives n x dim generated points. */
SWNF_API swnf_status swnf_model_sample(const swnf_model* model, size_t n, uint64_t seed,
                                       double* out);
/* The base-normal draws swnf_model_sample maps through the inverse. */
SWNF_API swnf_status swnf_base_normal(size_t n, size_t dim, uint64_t seed, double* out);

/* ---- datasets ------------------------------------------------------- */

typedef struct swnf_dataset_spec {
  swnf_dataset_kind kind;
  size_t n_samples;
  double noise_std;
  uint64_t seed;
  int standardize;
} swnf_dataset_spec;

SWNF_API swnf_dataset_spec swnf_dataset_defaults(swnf_dataset_kind kind);
/* out receives n_samples x 2 points. */
SWNF_API swnf_status swnf_dataset_generate(const swnf_dataset_spec* spec, double* out);
SWNF_API swnf_status swnf_write_points_csv(const char* path, const double* points, size_t n,
                                           size_t dim);

/* ---- metrics -------------------------------------------------------- */

typedef struct swnf_eval_config {
  swnf_dataset_kind dataset;
  double noise_std;
  uint64_t seed;
  size_t train_size;
  size_t eval_size;
  size_t ood_size;
  size_t sw_projections;
  int sw_p;
  int ood[SWNF_NUM_DATASETS]; /* nonzero: score this kind as out-of-distribution */
} swnf_eval_config;

typedef struct swnf_metrics {
  uint64_t step;
  uint64_t seed;
  swnf_dataset_kind dataset;
  double nll;
  double sw;
  int sw_p;
  size_t sw_projections;
  double k3_norm_sq;
  double k4_norm_sq;
  int has_auroc[SWNF_NUM_DATASETS];
  double auroc[SWNF_NUM_DATASETS];
} swnf_metrics;

/* Defaults for the dataset: every other kind is scored as OoD. */
SWNF_API swnf_eval_config swnf_eval_config_defaults(swnf_dataset_kind dataset);
SWNF_API swnf_status swnf_evaluate(const swnf_model* model, const swnf_eval_config* cfg,
                                   uint64_t step, swnf_metrics* out);

SWNF_API swnf_status swnf_auroc(const double* scores_in, size_t n_in, const double* scores_out,
                                size_t n_out, double* out);
SWNF_API swnf_status swnf_cumulants(const double* samples, size_t n, size_t dim,
                                    double* k3_norm_sq, double* k4_norm_sq);
/* W_p^p sliced distance with count directions drawn from seed. */
SWNF_API swnf_status swnf_sliced_wasserstein(const double* x, const double* y, size_t n,
                                             size_t dim, size_t count, int p, uint64_t seed,
                                             double* out);

/* Per-sample log-likelihoods of the held-out in-distribution set (eval_size
 * values) and of a fresh set of ood_kind (ood_size values), both standardized
 * with the statistics of the training set. auroc may be NULL. */
SWNF_API swnf_status swnf_ood_scores(const swnf_model* model, const swnf_eval_config* cfg,
                                     swnf_dataset_kind ood_kind, double* scores_in,
                                     double* scores_out, double* auroc);

/* Text outputs are NUL-terminated into buf. On SWNF_BUFFER_TOO_SMALL, *needed
 * (if non-NULL) holds the required capacity including the terminator. */
SWNF_API swnf_status swnf_metrics_csv_header(char* buf, size_t cap, size_t* needed);
SWNF_API swnf_status swnf_metrics_csv_row(const swnf_metrics* m, char* buf, size_t cap,
                                          size_t* needed);
SWNF_API swnf_status swnf_metrics_text(const swnf_metrics* m, char* buf, size_t cap,
                                       size_t* needed);
SWNF_API swnf_status swnf_metrics_append_csv(const char* path, const swnf_metrics* m);

SWNF_API swnf_status swnf_write_histogram_csv(const char* path, const double* const* sets,
                                              const size_t* sizes, const char* const* names,
                                              size_t n_sets, size_t bins);

/* ---- training ------------------------------------------------------- */

typedef void (*swnf_log_fn)(const char* line, void* user);

typedef struct swnf_train_config {
  swnf_objective objective;
  double alpha;
  double learning_rate;
  size_t batch_size;
  uint64_t steps;
  uint64_t seed;
  uint64_t eval_every;
  uint64_t log_every;

  size_t sw_projections;
  int sw_p;
  int sw_fixed_directions; /* nonzero: one direction set drawn from sw_seed */
  uint64_t sw_seed;

  size_t n_layers;
  size_t n_hidden;
  size_t hidden[SWNF_MAX_HIDDEN];

  swnf_eval_config eval; /* eval.seed is replaced by seed */

  const char* checkpoint_path; /* NULL: none */
  const char* metrics_path;
  const char* loss_path;

  swnf_log_fn on_log;
  void* log_user;
} swnf_train_config;

SWNF_API swnf_train_config swnf_train_config_defaults(swnf_dataset_kind dataset);

/* On success *out_model (if non-NULL) receives the trained model and
 * *final_metrics (if non-NULL) the last report. On SWNF_TRAINING_ABORTED,
 * *failed_step (if non-NULL) receives the step that produced the failure. */
SWNF_API swnf_status swnf_train(const swnf_train_config* cfg, swnf_model** out_model,
                                swnf_metrics* final_metrics, uint64_t* failed_step);

#ifdef __cplusplus
}
#endif

#endif
