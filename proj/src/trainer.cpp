#include "swnf/trainer.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>

#include "swnf/checkpoint.hpp"
#include "swnf/csv.hpp"

namespace swnf {

void adam_step(std::span<Tensor> params, std::span<const std::span<const double>> grads,
               AdamState& state, double lr) {
  if (params.size() != grads.size()) {
    fail(ErrorCode::invalid_argument, "adam_step: parameter and gradient counts differ");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto g = grads[i];
    if (!g.empty() && g.size() != params[i].size()) {
      fail(ErrorCode::shape_mismatch, "adam_step: gradient " + std::to_string(i) + " has wrong size");
    }
    for (std::size_t k = 0; k < g.size(); ++k) {
      if (!std::isfinite(g[k])) {
        std::ostringstream msg;
        msg << "adam_step: non-finite gradient " << g[k] << " in parameter " << i << " entry " << k
            << " of shape " << shape_string(params[i].shape());
        fail(ErrorCode::non_finite, msg.str());
      }
    }
  }
  if (state.m.empty()) {
    for (const auto& p : params) {
      state.m.emplace_back(p.size(), 0.0);
      state.v.emplace_back(p.size(), 0.0);
    }
  }
  if (state.m.size() != params.size()) {
    fail(ErrorCode::invalid_argument, "adam_step: optimizer state belongs to other parameters");
  }

  state.t += 1;
  const double b1 = state.beta1, b2 = state.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(state.t));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(state.t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto theta = params[i].mutable_values();
    auto& m = state.m[i];
    auto& v = state.v[i];
    const auto g = grads[i];
    for (std::size_t k = 0; k < theta.size(); ++k) {
      const double gk = g.empty() ? 0.0 : g[k];
      m[k] = b1 * m[k] + (1.0 - b1) * gk;
      v[k] = b2 * v[k] + (1.0 - b2) * gk * gk;
      const double m_hat = m[k] / c1;
      const double v_hat = v[k] / c2;
      theta[k] -= lr * m_hat / (std::sqrt(v_hat) + state.epsilon);
    }
  }
}

void adam_step(std::span<Tensor> params, AdamState& state, double lr) {
  std::vector<std::span<const double>> grads;
  grads.reserve(params.size());
  for (const auto& p : params) grads.push_back(p.grad());
  adam_step(params, grads, state, lr);
}

void TrainConfig::validate() const {
  loss.validate();
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
    fail(ErrorCode::invalid_argument, "learning rate must be positive");
  }
  if (batch_size < 2) fail(ErrorCode::invalid_argument, "batch size must be at least 2");
  if (steps < 1) fail(ErrorCode::invalid_argument, "steps must be at least 1");
  if (eval_every < 1) fail(ErrorCode::invalid_argument, "eval_every must be at least 1");
  if (log_every < 1) fail(ErrorCode::invalid_argument, "log_every must be at least 1");
  eval.validate();
}

namespace {

class LossLog {
 public:
  explicit LossLog(const std::filesystem::path& path) {
    if (path.empty()) return;
    out_.open(path, std::ios::binary | std::ios::trunc);
    if (!out_) fail(ErrorCode::io_error, "cannot open " + path.string() + " for writing");
    out_ << "step,loss,sw,nll\n";
  }
  void write(const LossRecord& r) {
    if (!out_.is_open()) return;
    out_ << r.step << ',' << csv::format_double(r.loss) << ',' << csv::format_double(r.sw) << ','
         << csv::format_double(r.nll) << '\n';
    out_.flush();
  }

 private:
  std::ofstream out_;
};

}  // namespace

TrainResult train(const TrainConfig& cfg) {
  cfg.validate();
  auto log = [&cfg](const std::string& line) {
    if (cfg.on_log) cfg.on_log(line);
  };

  EvalProtocol protocol = cfg.eval;
  protocol.seed = cfg.seed;
  const EvaluationSets sets = make_evaluation_sets(protocol);

  FlowModel model = init_model(cfg.architecture, cfg.seed);
  if (model.dim() != sets.train.cols()) {
    fail(ErrorCode::invalid_argument, "flow dimension does not match the dataset");
  }
  const std::size_t dim = model.dim();
  auto params = model.parameters();
  AdamState adam;

  // Streams are drawn every step whatever the objective, so matched seeds see
  // identical batches, base noise and directions across objectives.
  Rng batch_rng = make_stream(cfg.seed, "batch");
  Rng noise_rng = make_stream(cfg.seed, "noise");
  Rng direction_rng = make_stream(cfg.seed, "train-projections");
  std::uniform_int_distribution<std::size_t> pick(0, sets.train.rows() - 1);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::optional<Tensor> fixed_directions;
  if (cfg.loss.sw.policy == DirectionPolicy::fixed_seed) {
    Rng own = make_stream(cfg.loss.sw.seed, "projections");
    fixed_directions = sample_directions(cfg.loss.sw.projections, dim, own);
  }

  TrainResult result{model, {}};
  LossLog loss_log(cfg.loss_path);
  if (!cfg.metrics_path.empty()) std::filesystem::remove(cfg.metrics_path);

  auto evaluate = [&](std::uint64_t step) {
    MetricsReport report = full_report(model, sets, protocol, step);
    if (!cfg.metrics_path.empty()) append_metrics_csv(cfg.metrics_path, report);
    if (!cfg.checkpoint_path.empty()) save_checkpoint(model, cfg.checkpoint_path);
    std::ostringstream line;
    line << "eval step=" << step << " nll=" << csv::format_double(report.nll)
         << " sw=" << csv::format_double(report.sw)
         << " k3=" << csv::format_double(report.k3_norm_sq)
         << " k4=" << csv::format_double(report.k4_norm_sq);
    for (const auto& [kind, a] : report.auroc) {
      line << " auroc_" << dataset_name(kind) << '=' << csv::format_double(a);
    }
    log(line.str());
    result.reports.push_back(std::move(report));
  };

  std::ostringstream start;
  start << "train objective=" << objective_name(cfg.loss.variant) << " alpha=" << cfg.loss.alpha
        << " dataset=" << dataset_name(protocol.dataset) << " seed=" << cfg.seed
        << " steps=" << cfg.steps << " batch=" << cfg.batch_size << " lr=" << cfg.learning_rate
        << " params=" << model.parameter_count();
  log(start.str());
  evaluate(0);

  std::vector<std::size_t> rows(cfg.batch_size);
  std::vector<double> noise(cfg.batch_size * dim);
  for (std::uint64_t step = 1; step <= cfg.steps; ++step) {
    for (auto& r : rows) r = pick(batch_rng);
    for (auto& v : noise) v = normal(noise_rng);
    Tensor directions = fixed_directions
                            ? *fixed_directions
                            : sample_directions(cfg.loss.sw.projections, dim, direction_rng);
    Tensor x = gather_rows(sets.train, rows);
    Tensor z(Shape{cfg.batch_size, dim}, noise);

    LossTerms terms;
    try {
      terms = objective_loss(model, x, z, cfg.loss, directions);
    } catch (const Error& e) {
      log("abort step=" + std::to_string(step) + " " + e.what());
      throw TrainingAborted(step, "training aborted at step " + std::to_string(step) + ": " + e.what());
    }
    const double loss = terms.total.item();
    if (!std::isfinite(loss)) {
      log("abort step=" + std::to_string(step) + " non-finite loss");
      throw TrainingAborted(step, "training aborted at step " + std::to_string(step) +
                                      ": loss is " + csv::format_double(loss));
    }
    if (step % cfg.log_every == 0 || step == 1 || step == cfg.steps) {
      const double nan = std::numeric_limits<double>::quiet_NaN();
      LossRecord rec{step, loss, terms.sw ? terms.sw->item() : nan, terms.mle ? terms.mle->item() : nan};
      loss_log.write(rec);
    }

    model.zero_grad();
    terms.total.backward();
    try {
      adam_step(params, adam, cfg.learning_rate);
    } catch (const Error& e) {
      log("abort step=" + std::to_string(step) + " " + e.what());
      throw TrainingAborted(step, "training aborted at step " + std::to_string(step) + ": " + e.what());
    }

    if (step % cfg.eval_every == 0 || step == cfg.steps) evaluate(step);
  }
  result.model = model;
  return result;
}

}  // namespace swnf
