#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "swnf/error.hpp"
#include "swnf/flow.hpp"
#include "swnf/metrics.hpp"
#include "swnf/objectives.hpp"

namespace swnf {

struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t t = 0;
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
};

// One bias-corrected Adam update using the grad buffers of params. Throws
// (leaving parameters and state untouched) if any gradient is not finite.
void adam_step(std::span<Tensor> params, AdamState& state, double lr);
void adam_step(std::span<Tensor> params, std::span<const std::span<const double>> grads,
               AdamState& state, double lr);

struct TrainConfig {
  LossSpec loss{};
  double learning_rate = 1e-4;
  std::size_t batch_size = 4096;
  std::uint64_t steps = 20000;
  std::uint64_t seed = 0;
  std::uint64_t eval_every = 1000;
  std::uint64_t log_every = 100;
  FlowArchitecture architecture{};
  EvalProtocol eval{};  // dataset, noise, set sizes; seed is taken from `seed`

  std::filesystem::path checkpoint_path;  // empty: no checkpoint
  std::filesystem::path metrics_path;     // empty: no metrics CSV
  std::filesystem::path loss_path;        // empty: no loss-curve CSV

  std::function<void(std::string_view)> on_log;

  void validate() const;
};

struct LossRecord {
  std::uint64_t step = 0;
  double loss = 0.0;
  double sw = 0.0;   // NaN when the objective has no SW term
  double nll = 0.0;  // NaN when the objective has no likelihood term
};

struct TrainResult {
  FlowModel model;
  std::vector<MetricsReport> reports;
};

class TrainingAborted : public Error {
 public:
  TrainingAborted(std::uint64_t step, const std::string& what)
      : Error(ErrorCode::training_aborted, what), step_(step) {}
  std::uint64_t step() const noexcept { return step_; }

 private:
  std::uint64_t step_;
};

// Evaluates at step 0, every eval_every steps and at the last step. The
// checkpoint is rewritten after every evaluation, so an aborted run keeps the
// last good one.
TrainResult train(const TrainConfig& cfg);

}  // namespace swnf
