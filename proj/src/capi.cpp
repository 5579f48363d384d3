#include "swnf/swnf.h"

#include <cstring>
#include <exception>
#include <new>
#include <string>

#include "swnf/checkpoint.hpp"
#include "swnf/datasets.hpp"
#include "swnf/error.hpp"
#include "swnf/flow.hpp"
#include "swnf/metrics.hpp"
#include "swnf/sliced_wasserstein.hpp"
#include "swnf/trainer.hpp"

struct swnf_model {
  swnf::FlowModel model;
};

namespace {

using namespace swnf;

thread_local std::string last_error;

template <typename F>
swnf_status guarded(F&& body) {
  last_error.clear();
  try {
    body();
    return SWNF_OK;
  } catch (const Error& e) {
    last_error = e.what();
    return static_cast<swnf_status>(static_cast<int>(e.code()));
  } catch (const std::bad_alloc&) {
    last_error = "out of memory";
  } catch (const std::exception& e) {
    last_error = e.what();
  } catch (...) {
    last_error = "unknown failure";
  }
  return SWNF_INTERNAL_ERROR;
}

void require(const void* p, const char* what) {
  if (!p) fail(ErrorCode::invalid_argument, std::string(what) + " must not be NULL");
}

Tensor from_rows(const double* data, std::size_t n, std::size_t dim, const char* what) {
  require(data, what);
  if (n < 1) fail(ErrorCode::invalid_argument, std::string(what) + " needs at least one row");
  return Tensor(Shape{n, dim}, std::vector<double>(data, data + n * dim));
}

void copy_out(const Tensor& t, double* out) {
  const auto v = t.values();
  std::memcpy(out, v.data(), v.size() * sizeof(double));
}

DatasetKind to_kind(swnf_dataset_kind k) {
  switch (k) {
    case SWNF_CIRCLES: return DatasetKind::circles;
    case SWNF_MOONS: return DatasetKind::moons;
    case SWNF_BLOBS: return DatasetKind::blobs;
  }
  fail(ErrorCode::invalid_argument, "unknown dataset kind " + std::to_string(static_cast<int>(k)));
}

swnf_dataset_kind from_kind(DatasetKind k) { return static_cast<swnf_dataset_kind>(static_cast<int>(k)); }

Objective to_objective(swnf_objective o) {
  switch (o) {
    case SWNF_OBJECTIVE_MLE: return Objective::mle;
    case SWNF_OBJECTIVE_SW: return Objective::sw;
    case SWNF_OBJECTIVE_HYBRID_DATA: return Objective::hybrid_data;
    case SWNF_OBJECTIVE_HYBRID_LATENT: return Objective::hybrid_latent;
  }
  fail(ErrorCode::invalid_argument, "unknown objective " + std::to_string(static_cast<int>(o)));
}

EvalProtocol to_protocol(const swnf_eval_config& c) {
  EvalProtocol p;
  p.dataset = to_kind(c.dataset);
  p.noise_std = c.noise_std;
  p.seed = c.seed;
  p.train_size = c.train_size;
  p.eval_size = c.eval_size;
  p.ood_size = c.ood_size;
  p.sw_projections = c.sw_projections;
  p.sw_p = c.sw_p;
  for (int k = 0; k < SWNF_NUM_DATASETS; ++k) {
    if (c.ood[k]) p.ood.push_back(to_kind(static_cast<swnf_dataset_kind>(k)));
  }
  p.validate();
  return p;
}

swnf_metrics to_c(const MetricsReport& r) {
  swnf_metrics m{};
  m.step = r.step;
  m.seed = r.seed;
  m.dataset = from_kind(r.dataset);
  m.nll = r.nll;
  m.sw = r.sw;
  m.sw_p = r.sw_p;
  m.sw_projections = r.sw_projections;
  m.k3_norm_sq = r.k3_norm_sq;
  m.k4_norm_sq = r.k4_norm_sq;
  for (const auto& [kind, a] : r.auroc) {
    const int k = static_cast<int>(kind);
    m.has_auroc[k] = 1;
    m.auroc[k] = a;
  }
  return m;
}

MetricsReport from_c(const swnf_metrics& m) {
  MetricsReport r;
  r.step = m.step;
  r.seed = m.seed;
  r.dataset = to_kind(m.dataset);
  r.nll = m.nll;
  r.sw = m.sw;
  r.sw_p = m.sw_p;
  r.sw_projections = m.sw_projections;
  r.k3_norm_sq = m.k3_norm_sq;
  r.k4_norm_sq = m.k4_norm_sq;
  for (int k = 0; k < SWNF_NUM_DATASETS; ++k) {
    if (m.has_auroc[k]) r.auroc[to_kind(static_cast<swnf_dataset_kind>(k))] = m.auroc[k];
  }
  return r;
}

swnf_status write_text(const std::string& text, char* buf, std::size_t cap, std::size_t* needed) {
  if (needed) *needed = text.size() + 1;
  if (!buf || cap < text.size() + 1) {
    last_error = "buffer of " + std::to_string(cap) + " bytes is too small, need " +
                 std::to_string(text.size() + 1);
    return SWNF_BUFFER_TOO_SMALL;
  }
  std::memcpy(buf, text.c_str(), text.size() + 1);
  return SWNF_OK;
}

}  // namespace

extern "C" {

const char* swnf_version(void) { return "1.0.0"; }

const char* swnf_last_error(void) { return last_error.c_str(); }

const char* swnf_status_name(swnf_status status) {
  switch (status) {
    case SWNF_OK: return "ok";
    case SWNF_INVALID_ARGUMENT: return "invalid argument";
    case SWNF_SHAPE_MISMATCH: return "shape mismatch";
    case SWNF_DOMAIN_ERROR: return "domain error";
    case SWNF_NON_FINITE: return "non-finite value";
    case SWNF_IO_ERROR: return "i/o error";
    case SWNF_FORMAT_ERROR: return "format error";
    case SWNF_TRAINING_ABORTED: return "training aborted";
    case SWNF_AUTODIFF_ERROR: return "autodiff error";
    case SWNF_BUFFER_TOO_SMALL: return "buffer too small";
    case SWNF_INTERNAL_ERROR: return "internal error";
  }
  return "unknown status";
}

swnf_status swnf_parse_dataset(const char* name, swnf_dataset_kind* out) {
  return guarded([&] {
    require(name, "name");
    require(out, "out");
    auto kind = parse_dataset(name);
    if (!kind) fail(ErrorCode::invalid_argument, std::string("unknown dataset '") + name + "'");
    *out = from_kind(*kind);
  });
}

const char* swnf_dataset_name(swnf_dataset_kind kind) {
  switch (kind) {
    case SWNF_CIRCLES: return "circles";
    case SWNF_MOONS: return "moons";
    case SWNF_BLOBS: return "blobs";
  }
  return "";
}

swnf_status swnf_parse_objective(const char* name, swnf_objective* out) {
  return guarded([&] {
    require(name, "name");
    require(out, "out");
    auto o = parse_objective(name);
    if (!o) fail(ErrorCode::invalid_argument, std::string("unknown objective '") + name + "'");
    *out = static_cast<swnf_objective>(static_cast<int>(*o));
  });
}

const char* swnf_objective_name(swnf_objective objective) {
  switch (objective) {
    case SWNF_OBJECTIVE_MLE: return "mle";
    case SWNF_OBJECTIVE_SW: return "sw";
    case SWNF_OBJECTIVE_HYBRID_DATA: return "hybrid-data";
    case SWNF_OBJECTIVE_HYBRID_LATENT: return "hybrid-latent";
  }
  return "";
}

// ---- models ---------------------------------------------------------------

swnf_status swnf_model_create(size_t dim, size_t n_layers, const size_t* hidden, size_t n_hidden,
                              uint64_t seed, swnf_model** out) {
  return guarded([&] {
    require(out, "out");
    if (n_hidden > 0) require(hidden, "hidden");
    FlowArchitecture arch{dim, n_layers, std::vector<std::size_t>(hidden, hidden + n_hidden)};
    *out = new swnf_model{init_model(arch, seed)};
  });
}

swnf_status swnf_model_load(const char* path, swnf_model** out) {
  return guarded([&] {
    require(path, "path");
    require(out, "out");
    *out = new swnf_model{load_checkpoint(path)};
  });
}

swnf_status swnf_model_save(const swnf_model* model, const char* path) {
  return guarded([&] {
    require(model, "model");
    require(path, "path");
    save_checkpoint(model->model, path);
  });
}

void swnf_model_destroy(swnf_model* model) { delete model; }

size_t swnf_model_dim(const swnf_model* model) { return model ? model->model.dim() : 0; }

size_t swnf_model_num_layers(const swnf_model* model) {
  return model ? model->model.num_layers() : 0;
}

size_t swnf_model_parameter_count(const swnf_model* model) {
  return model ? model->model.parameter_count() : 0;
}

swnf_status swnf_model_forward(const swnf_model* model, const double* x, size_t n, double* z,
                               double* log_det) {
  return guarded([&] {
    require(model, "model");
    require(z, "z");
    NoGradGuard no_grad;
    auto out = model->model.forward(from_rows(x, n, model->model.dim(), "x"));
    copy_out(out.z, z);
    if (log_det) copy_out(out.log_det, log_det);
  });
}

swnf_status swnf_model_inverse(const swnf_model* model, const double* z, size_t n, double* x) {
  return guarded([&] {
    require(model, "model");
    require(x, "x");
    NoGradGuard no_grad;
    copy_out(model->model.inverse(from_rows(z, n, model->model.dim(), "z")), x);
  });
}

swnf_status swnf_model_log_prob(const swnf_model* model, const double* x, size_t n, double* out) {
  return guarded([&] {
    require(model, "model");
    require(out, "out");
    const auto ll = per_sample_log_likelihood(model->model, from_rows(x, n, model->model.dim(), "x"));
    std::memcpy(out, ll.data(), ll.size() * sizeof(double));
  });
}

swnf_status swnf_model_sample(const swnf_model* model, size_t n, uint64_t seed, double* out) {
  return guarded([&] {
    require(model, "model");
    require(out, "out");
    copy_out(sample_model(model->model, n, seed), out);
  });
}

swnf_status swnf_base_normal(size_t n, size_t dim, uint64_t seed, double* out) {
  return guarded([&] {
    require(out, "out");
    Rng rng = make_stream(seed, "sample");
    copy_out(base_normal(n, dim, rng), out);
  });
}

// ---- datasets -------------------------------------------------------------

swnf_dataset_spec swnf_dataset_defaults(swnf_dataset_kind kind) {
  swnf_dataset_spec spec{};
  spec.kind = kind;
  DatasetKind k = DatasetKind::circles;
  if (kind == SWNF_MOONS) k = DatasetKind::moons;
  if (kind == SWNF_BLOBS) k = DatasetKind::blobs;
  const DatasetSpec d = DatasetSpec::defaults(k);
  spec.n_samples = d.n_samples;
  spec.noise_std = d.noise_std;
  spec.seed = d.seed;
  spec.standardize = d.standardize ? 1 : 0;
  return spec;
}

swnf_status swnf_dataset_generate(const swnf_dataset_spec* spec, double* out) {
  return guarded([&] {
    require(spec, "spec");
    require(out, "out");
    DatasetSpec s{to_kind(spec->kind), spec->n_samples, spec->noise_std, spec->seed,
                  spec->standardize != 0};
    copy_out(generate(s), out);
  });
}

swnf_status swnf_write_points_csv(const char* path, const double* points, size_t n, size_t dim) {
  return guarded([&] {
    require(path, "path");
    if (dim < 1) fail(ErrorCode::invalid_argument, "dim must be at least 1");
    write_points_csv(path, from_rows(points, n, dim, "points"));
  });
}

// ---- metrics --------------------------------------------------------------

swnf_eval_config swnf_eval_config_defaults(swnf_dataset_kind dataset) {
  swnf_eval_config c{};
  const EvalProtocol p;
  c.dataset = dataset;
  c.noise_std = 0.08;
  if (dataset == SWNF_BLOBS) c.noise_std = default_noise_std(DatasetKind::blobs);
  if (dataset == SWNF_MOONS) c.noise_std = default_noise_std(DatasetKind::moons);
  if (dataset == SWNF_CIRCLES) c.noise_std = default_noise_std(DatasetKind::circles);
  c.seed = p.seed;
  c.train_size = p.train_size;
  c.eval_size = p.eval_size;
  c.ood_size = p.ood_size;
  c.sw_projections = p.sw_projections;
  c.sw_p = p.sw_p;
  for (int k = 0; k < SWNF_NUM_DATASETS; ++k) c.ood[k] = k != static_cast<int>(dataset);
  return c;
}

swnf_status swnf_evaluate(const swnf_model* model, const swnf_eval_config* cfg, uint64_t step,
                          swnf_metrics* out) {
  return guarded([&] {
    require(model, "model");
    require(cfg, "cfg");
    require(out, "out");
    const EvalProtocol protocol = to_protocol(*cfg);
    const EvaluationSets sets = make_evaluation_sets(protocol);
    *out = to_c(full_report(model->model, sets, protocol, step));
  });
}

swnf_status swnf_auroc(const double* scores_in, size_t n_in, const double* scores_out,
                       size_t n_out, double* out) {
  return guarded([&] {
    require(out, "out");
    if (n_in > 0) require(scores_in, "scores_in");
    if (n_out > 0) require(scores_out, "scores_out");
    *out = eval_auroc({scores_in, n_in}, {scores_out, n_out});
  });
}

swnf_status swnf_cumulants(const double* samples, size_t n, size_t dim, double* k3_norm_sq,
                           double* k4_norm_sq) {
  return guarded([&] {
    if (dim < 1) fail(ErrorCode::invalid_argument, "dim must be at least 1");
    const Cumulants c = eval_cumulants(from_rows(samples, n, dim, "samples"));
    if (k3_norm_sq) *k3_norm_sq = c.k3_norm_sq();
    if (k4_norm_sq) *k4_norm_sq = c.k4_norm_sq();
  });
}

swnf_status swnf_sliced_wasserstein(const double* x, const double* y, size_t n, size_t dim,
                                    size_t count, int p, uint64_t seed, double* out) {
  return guarded([&] {
    require(out, "out");
    if (dim < 1) fail(ErrorCode::invalid_argument, "dim must be at least 1");
    SWConfig cfg{count, p, DirectionPolicy::fixed_seed, seed};
    cfg.validate();
    Rng unused;
    *out = sliced_wasserstein(from_rows(x, n, dim, "x"), from_rows(y, n, dim, "y"), cfg, unused)
               .item();
  });
}

swnf_status swnf_ood_scores(const swnf_model* model, const swnf_eval_config* cfg,
                            swnf_dataset_kind ood_kind, double* scores_in, double* scores_out,
                            double* auroc) {
  return guarded([&] {
    require(model, "model");
    require(cfg, "cfg");
    require(scores_in, "scores_in");
    require(scores_out, "scores_out");
    EvalProtocol protocol = to_protocol(*cfg);
    protocol.ood.clear();
    const EvaluationSets sets = make_evaluation_sets(protocol);
    const Tensor ood = make_ood_set(protocol, sets.standardization, to_kind(ood_kind));
    const auto in = per_sample_log_likelihood(model->model, sets.held_out);
    const auto out = per_sample_log_likelihood(model->model, ood);
    std::memcpy(scores_in, in.data(), in.size() * sizeof(double));
    std::memcpy(scores_out, out.data(), out.size() * sizeof(double));
    if (auroc) *auroc = eval_auroc(in, out);
  });
}

swnf_status swnf_metrics_csv_header(char* buf, size_t cap, size_t* needed) {
  last_error.clear();
  return write_text(metrics_csv_header(), buf, cap, needed);
}

swnf_status swnf_metrics_csv_row(const swnf_metrics* m, char* buf, size_t cap, size_t* needed) {
  std::string text;
  const swnf_status s = guarded([&] {
    require(m, "metrics");
    text = metrics_csv_row(from_c(*m));
  });
  return s == SWNF_OK ? write_text(text, buf, cap, needed) : s;
}

swnf_status swnf_metrics_text(const swnf_metrics* m, char* buf, size_t cap, size_t* needed) {
  std::string text;
  const swnf_status s = guarded([&] {
    require(m, "metrics");
    text = metrics_text(from_c(*m));
  });
  return s == SWNF_OK ? write_text(text, buf, cap, needed) : s;
}

swnf_status swnf_metrics_append_csv(const char* path, const swnf_metrics* m) {
  return guarded([&] {
    require(path, "path");
    require(m, "metrics");
    append_metrics_csv(path, from_c(*m));
  });
}

swnf_status swnf_write_histogram_csv(const char* path, const double* const* sets,
                                     const size_t* sizes, const char* const* names, size_t n_sets,
                                     size_t bins) {
  return guarded([&] {
    require(path, "path");
    require(sets, "sets");
    require(sizes, "sizes");
    require(names, "names");
    std::vector<std::pair<std::string, std::vector<double>>> data;
    for (std::size_t i = 0; i < n_sets; ++i) {
      require(names[i], "names[i]");
      if (sizes[i] > 0) require(sets[i], "sets[i]");
      data.emplace_back(names[i], std::vector<double>(sets[i], sets[i] + sizes[i]));
    }
    write_histogram_csv(path, make_histogram(data, bins));
  });
}

// ---- training -------------------------------------------------------------

swnf_train_config swnf_train_config_defaults(swnf_dataset_kind dataset) {
  const TrainConfig d;
  swnf_train_config c{};
  c.objective = static_cast<swnf_objective>(static_cast<int>(d.loss.variant));
  c.alpha = d.loss.alpha;
  c.learning_rate = d.learning_rate;
  c.batch_size = d.batch_size;
  c.steps = d.steps;
  c.seed = d.seed;
  c.eval_every = d.eval_every;
  c.log_every = d.log_every;
  c.sw_projections = d.loss.sw.projections;
  c.sw_p = d.loss.sw.p;
  c.sw_fixed_directions = d.loss.sw.policy == DirectionPolicy::fixed_seed;
  c.sw_seed = d.loss.sw.seed;
  c.n_layers = d.architecture.n_layers;
  c.n_hidden = d.architecture.hidden.size();
  for (std::size_t i = 0; i < c.n_hidden && i < SWNF_MAX_HIDDEN; ++i) {
    c.hidden[i] = d.architecture.hidden[i];
  }
  c.eval = swnf_eval_config_defaults(dataset);
  return c;
}

swnf_status swnf_train(const swnf_train_config* cfg, swnf_model** out_model,
                       swnf_metrics* final_metrics, uint64_t* failed_step) {
  return guarded([&] {
    require(cfg, "cfg");
    if (cfg->n_hidden > SWNF_MAX_HIDDEN) {
      fail(ErrorCode::invalid_argument, "at most " + std::to_string(SWNF_MAX_HIDDEN) +
                                            " hidden layers are supported");
    }
    TrainConfig t;
    t.loss.variant = to_objective(cfg->objective);
    t.loss.alpha = cfg->alpha;
    t.loss.sw.projections = cfg->sw_projections;
    t.loss.sw.p = cfg->sw_p;
    t.loss.sw.policy = cfg->sw_fixed_directions ? DirectionPolicy::fixed_seed : DirectionPolicy::fresh;
    t.loss.sw.seed = cfg->sw_seed;
    t.learning_rate = cfg->learning_rate;
    t.batch_size = cfg->batch_size;
    t.steps = cfg->steps;
    t.seed = cfg->seed;
    t.eval_every = cfg->eval_every;
    t.log_every = cfg->log_every;
    t.architecture.n_layers = cfg->n_layers;
    t.architecture.hidden.assign(cfg->hidden, cfg->hidden + cfg->n_hidden);
    swnf_eval_config eval = cfg->eval;
    eval.seed = cfg->seed;
    t.eval = to_protocol(eval);
    if (cfg->checkpoint_path) t.checkpoint_path = cfg->checkpoint_path;
    if (cfg->metrics_path) t.metrics_path = cfg->metrics_path;
    if (cfg->loss_path) t.loss_path = cfg->loss_path;
    if (cfg->on_log) {
      t.on_log = [fn = cfg->on_log, user = cfg->log_user](std::string_view line) {
        const std::string s(line);
        fn(s.c_str(), user);
      };
    }
    try {
      TrainResult result = train(t);
      if (final_metrics) *final_metrics = to_c(result.reports.back());
      if (out_model) *out_model = new swnf_model{std::move(result.model)};
    } catch (const TrainingAborted& e) {
      if (failed_step) *failed_step = e.step();
      throw;
    }
  });
}

}  // extern "C"
