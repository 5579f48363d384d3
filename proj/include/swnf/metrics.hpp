#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "swnf/datasets.hpp"
#include "swnf/flow.hpp"
#include "swnf/sliced_wasserstein.hpp"

namespace swnf {

// Mean negative log-likelihood in nats, without gradient tracking.
double eval_nll(const FlowModel& model, const Tensor& x);

// log p_X(x) for every row.
std::vector<double> per_sample_log_likelihood(const FlowModel& model, const Tensor& x);

// Marginal cumulants from biased central moments: k3 = m3, k4 = m4 - 3 m2^2.
struct Cumulants {
  std::vector<double> k3;
  std::vector<double> k4;

  double k3_norm_sq() const;
  double k4_norm_sq() const;
};
Cumulants eval_cumulants(const Tensor& samples);

// P(in > out) + P(in == out) / 2 over all pairs, via midranks.
double eval_auroc(std::span<const double> scores_in, std::span<const double> scores_out);

// How evaluation data is derived from a run seed. The training set fixes the
// standardization that every other set reuses.
struct EvalProtocol {
  DatasetKind dataset = DatasetKind::circles;
  double noise_std = 0.08;
  std::uint64_t seed = 0;
  std::size_t train_size = 50000;
  std::size_t eval_size = 10000;
  std::size_t ood_size = 10000;
  std::size_t sw_projections = kEvalProjections;
  int sw_p = 2;
  std::vector<DatasetKind> ood;

  void validate() const;
};

struct EvaluationSets {
  Standardization standardization;
  Tensor train;     // standardized training set
  Tensor held_out;  // in-distribution, training statistics applied
  std::vector<std::pair<DatasetKind, Tensor>> ood;
};

EvaluationSets make_evaluation_sets(const EvalProtocol& protocol);

// Out-of-distribution set drawn with the protocol's seed and the training
// statistics; independent of the held-out set even for the training kind.
Tensor make_ood_set(const EvalProtocol& protocol, const Standardization& stats, DatasetKind kind);

struct MetricsReport {
  std::uint64_t step = 0;
  std::uint64_t seed = 0;
  DatasetKind dataset = DatasetKind::circles;
  double nll = 0.0;
  double sw = 0.0;  // W_p^p convention
  int sw_p = 2;
  std::size_t sw_projections = kEvalProjections;
  double k3_norm_sq = 0.0;
  double k4_norm_sq = 0.0;
  std::map<DatasetKind, double> auroc;
};

// NLL on the held-out set, SW between f(held-out) and base-normal draws,
// cumulants of f(held-out), AUROC per OoD set.
MetricsReport full_report(const FlowModel& model, const EvaluationSets& sets,
                          const EvalProtocol& protocol, std::uint64_t step);

// Column order: step,seed,dataset,nll,sw,sw_p,sw_projections,k3_norm_sq,
// k4_norm_sq,auroc_circles,auroc_moons,auroc_blobs. Missing AUROC is empty.
std::string metrics_csv_header();
std::string metrics_csv_row(const MetricsReport& report);
MetricsReport parse_metrics_csv_row(const std::string& line);
std::string metrics_text(const MetricsReport& report);
// Writes the header first when the file is new or empty.
void append_metrics_csv(const std::filesystem::path& path, const MetricsReport& report);

// Fixed-width histogram over the union range of all score sets.
struct Histogram {
  std::vector<double> edges;  // bins + 1
  std::vector<std::string> names;
  std::vector<std::vector<std::size_t>> counts;  // [set][bin]
};
Histogram make_histogram(const std::vector<std::pair<std::string, std::vector<double>>>& sets,
                         std::size_t bins);
// Columns: bin_lo,bin_hi,<name>...
void write_histogram_csv(const std::filesystem::path& path, const Histogram& h);

}  // namespace swnf
