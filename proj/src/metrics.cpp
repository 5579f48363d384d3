#include "swnf/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "swnf/csv.hpp"
#include "swnf/error.hpp"
#include "swnf/objectives.hpp"

namespace swnf {

namespace {

constexpr DatasetKind kAllKinds[] = {DatasetKind::circles, DatasetKind::moons, DatasetKind::blobs};

}  // namespace

double eval_nll(const FlowModel& model, const Tensor& x) {
  NoGradGuard no_grad;
  return mle_loss(model, x).item();
}

std::vector<double> per_sample_log_likelihood(const FlowModel& model, const Tensor& x) {
  NoGradGuard no_grad;
  Tensor lp = model.log_prob(x);
  return {lp.values().begin(), lp.values().end()};
}

double Cumulants::k3_norm_sq() const {
  return std::inner_product(k3.begin(), k3.end(), k3.begin(), 0.0);
}

double Cumulants::k4_norm_sq() const {
  return std::inner_product(k4.begin(), k4.end(), k4.begin(), 0.0);
}

Cumulants eval_cumulants(const Tensor& samples) {
  if (samples.rank() != 2) fail(ErrorCode::shape_mismatch, "cumulants expect [N x D] samples");
  const std::size_t n = samples.rows(), d = samples.cols();
  if (n < 4) fail(ErrorCode::invalid_argument, "cumulants need at least 4 samples");
  const auto v = samples.values();
  const double inv_n = 1.0 / static_cast<double>(n);
  Cumulants c;
  c.k3.resize(d);
  c.k4.resize(d);
  for (std::size_t j = 0; j < d; ++j) {
    double mu = 0.0;
    for (std::size_t i = 0; i < n; ++i) mu += v[i * d + j];
    mu *= inv_n;
    double m2 = 0.0, m3 = 0.0, m4 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double c1 = v[i * d + j] - mu;
      const double c2 = c1 * c1;
      m2 += c2;
      m3 += c2 * c1;
      m4 += c2 * c2;
    }
    m2 *= inv_n;
    m3 *= inv_n;
    m4 *= inv_n;
    c.k3[j] = m3;
    c.k4[j] = m4 - 3.0 * m2 * m2;
  }
  return c;
}

double eval_auroc(std::span<const double> scores_in, std::span<const double> scores_out) {
  if (scores_in.empty() || scores_out.empty()) {
    fail(ErrorCode::invalid_argument, "AUROC needs non-empty in- and out-of-distribution scores");
  }
  const std::size_t n = scores_in.size(), m = scores_out.size();
  struct Item {
    double score;
    bool in;
  };
  std::vector<Item> all;
  all.reserve(n + m);
  for (double s : scores_in) all.push_back({s, true});
  for (double s : scores_out) all.push_back({s, false});
  for (const auto& it : all) {
    if (std::isnan(it.score)) fail(ErrorCode::non_finite, "AUROC score is NaN");
  }
  std::sort(all.begin(), all.end(), [](const Item& a, const Item& b) { return a.score < b.score; });

  // Twice the midrank keeps the rank sum an exact integer.
  std::uint64_t twice_rank_sum_in = 0;
  std::size_t i = 0;
  while (i < all.size()) {
    std::size_t j = i;
    std::size_t in_count = 0;
    while (j < all.size() && all[j].score == all[i].score) {
      in_count += all[j].in ? 1 : 0;
      ++j;
    }
    // ranks i+1 .. j, midrank (i + 1 + j) / 2
    twice_rank_sum_in += static_cast<std::uint64_t>(in_count) * (i + 1 + j);
    i = j;
  }
  // wins + ties/2 = R_in - n(n+1)/2, all doubled.
  const std::uint64_t twice_u = twice_rank_sum_in - static_cast<std::uint64_t>(n) * (n + 1);
  return static_cast<double>(twice_u) / (2.0 * static_cast<double>(n) * static_cast<double>(m));
}

// ---------------------------------------------------------------------------

void EvalProtocol::validate() const {
  if (train_size < 2) fail(ErrorCode::invalid_argument, "training set needs at least 2 samples");
  if (eval_size < 4) fail(ErrorCode::invalid_argument, "evaluation set needs at least 4 samples");
  if (ood_size < 1) fail(ErrorCode::invalid_argument, "OoD set needs at least 1 sample");
  if (!(noise_std >= 0.0) || !std::isfinite(noise_std)) {
    fail(ErrorCode::invalid_argument, "noise std must be finite and non-negative");
  }
  SWConfig{sw_projections, sw_p}.validate();
}

EvaluationSets make_evaluation_sets(const EvalProtocol& protocol) {
  protocol.validate();
  DatasetSpec spec{protocol.dataset, protocol.train_size, protocol.noise_std, protocol.seed, false};

  Rng train_rng = make_stream(protocol.seed, "train-set");
  Tensor raw_train = generate(spec, train_rng);
  Standardization stats = Standardization::fit(raw_train);

  spec.n_samples = protocol.eval_size;
  Rng eval_rng = make_stream(protocol.seed, "eval-set");
  Tensor held_out = stats.apply(generate(spec, eval_rng));

  EvaluationSets sets{stats, stats.apply(raw_train), std::move(held_out), {}};
  for (DatasetKind kind : protocol.ood) {
    sets.ood.emplace_back(kind, make_ood_set(protocol, stats, kind));
  }
  return sets;
}

Tensor make_ood_set(const EvalProtocol& protocol, const Standardization& stats, DatasetKind kind) {
  DatasetSpec spec{kind, protocol.ood_size, default_noise_std(kind), protocol.seed, false};
  if (kind == protocol.dataset) spec.noise_std = protocol.noise_std;
  Rng rng = make_stream(protocol.seed, "ood:" + std::string(dataset_name(kind)));
  return stats.apply(generate(spec, rng));
}

MetricsReport full_report(const FlowModel& model, const EvaluationSets& sets,
                          const EvalProtocol& protocol, std::uint64_t step) {
  NoGradGuard no_grad;
  MetricsReport r;
  r.step = step;
  r.seed = protocol.seed;
  r.dataset = protocol.dataset;
  r.sw_p = protocol.sw_p;
  r.sw_projections = protocol.sw_projections;

  auto fwd = model.forward(sets.held_out);
  Tensor log_lik = standard_normal_log_prob(fwd.z) + fwd.log_det;
  r.nll = -mean(log_lik).item();

  Rng noise = make_stream(protocol.seed, "eval-noise");
  Tensor base = base_normal(fwd.z.rows(), fwd.z.cols(), noise);
  SWConfig sw_cfg{protocol.sw_projections, protocol.sw_p, DirectionPolicy::fixed_seed,
                  protocol.seed};
  Rng unused;
  r.sw = sliced_wasserstein(fwd.z, base, sw_cfg, unused).item();

  const Cumulants c = eval_cumulants(fwd.z);
  r.k3_norm_sq = c.k3_norm_sq();
  r.k4_norm_sq = c.k4_norm_sq();

  for (const auto& [kind, data] : sets.ood) {
    const auto out = per_sample_log_likelihood(model, data);
    r.auroc[kind] = eval_auroc(log_lik.values(), out);
  }
  return r;
}

// ---------------------------------------------------------------------------

std::string metrics_csv_header() {
  return "step,seed,dataset,nll,sw,sw_p,sw_projections,k3_norm_sq,k4_norm_sq,"
         "auroc_circles,auroc_moons,auroc_blobs";
}

std::string metrics_csv_row(const MetricsReport& r) {
  std::ostringstream out;
  out << r.step << ',' << r.seed << ',' << dataset_name(r.dataset) << ','
      << csv::format_double(r.nll) << ',' << csv::format_double(r.sw) << ',' << r.sw_p << ','
      << r.sw_projections << ',' << csv::format_double(r.k3_norm_sq) << ','
      << csv::format_double(r.k4_norm_sq);
  for (DatasetKind kind : kAllKinds) {
    out << ',';
    if (auto it = r.auroc.find(kind); it != r.auroc.end()) out << csv::format_double(it->second);
  }
  return out.str();
}

MetricsReport parse_metrics_csv_row(const std::string& line) {
  const auto f = csv::split(line);
  if (f.size() != 12) {
    fail(ErrorCode::format_error, "metrics row needs 12 fields, got " + std::to_string(f.size()));
  }
  MetricsReport r;
  try {
    r.step = std::stoull(f[0]);
    r.seed = std::stoull(f[1]);
    r.sw_p = std::stoi(f[5]);
    r.sw_projections = std::stoull(f[6]);
  } catch (const std::exception&) {
    fail(ErrorCode::format_error, "malformed integer field in metrics row");
  }
  const auto kind = parse_dataset(f[2]);
  if (!kind) fail(ErrorCode::format_error, "unknown dataset '" + f[2] + "' in metrics row");
  r.dataset = *kind;
  r.nll = csv::parse_double(f[3]);
  r.sw = csv::parse_double(f[4]);
  r.k3_norm_sq = csv::parse_double(f[7]);
  r.k4_norm_sq = csv::parse_double(f[8]);
  for (std::size_t k = 0; k < 3; ++k) {
    if (!f[9 + k].empty()) r.auroc[kAllKinds[k]] = csv::parse_double(f[9 + k]);
  }
  return r;
}

std::string metrics_text(const MetricsReport& r) {
  std::ostringstream out;
  out << "step " << r.step << "  seed " << r.seed << "  dataset " << dataset_name(r.dataset)
      << "\n  nll        " << csv::format_double(r.nll) << "\n  sw (W" << r.sw_p << "^" << r.sw_p
      << ", J=" << r.sw_projections << ") " << csv::format_double(r.sw) << "\n  |k3|^2     "
      << csv::format_double(r.k3_norm_sq) << "\n  |k4|^2     " << csv::format_double(r.k4_norm_sq);
  for (const auto& [kind, value] : r.auroc) {
    out << "\n  auroc " << dataset_name(kind) << ' ' << csv::format_double(value);
  }
  out << '\n';
  return out.str();
}

void append_metrics_csv(const std::filesystem::path& path, const MetricsReport& report) {
  std::error_code ec;
  const bool fresh = !std::filesystem::exists(path, ec) || std::filesystem::file_size(path, ec) == 0;
  std::ofstream out(path, std::ios::binary | std::ios::app);
  if (!out) fail(ErrorCode::io_error, "cannot open " + path.string() + " for appending");
  if (fresh) out << metrics_csv_header() << '\n';
  out << metrics_csv_row(report) << '\n';
  if (!out) fail(ErrorCode::io_error, "failed writing " + path.string());
}

Histogram make_histogram(const std::vector<std::pair<std::string, std::vector<double>>>& sets,
                         std::size_t bins) {
  if (bins < 1) fail(ErrorCode::invalid_argument, "histogram needs at least one bin");
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (const auto& [name, values] : sets) {
    for (double v : values) {
      if (!std::isfinite(v)) continue;
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  }
  if (!std::isfinite(lo)) {
    lo = 0.0;
    hi = 1.0;
  }
  if (hi == lo) hi = lo + 1.0;
  Histogram h;
  h.edges.resize(bins + 1);
  for (std::size_t b = 0; b <= bins; ++b) {
    h.edges[b] = lo + (hi - lo) * static_cast<double>(b) / static_cast<double>(bins);
  }
  for (const auto& [name, values] : sets) {
    h.names.push_back(name);
    std::vector<std::size_t> counts(bins, 0);
    for (double v : values) {
      if (!std::isfinite(v)) continue;
      auto b = static_cast<std::size_t>((v - lo) / (hi - lo) * static_cast<double>(bins));
      counts[std::min(b, bins - 1)] += 1;
    }
    h.counts.push_back(std::move(counts));
  }
  return h;
}

void write_histogram_csv(const std::filesystem::path& path, const Histogram& h) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::io_error, "cannot open " + path.string() + " for writing");
  out << "bin_lo,bin_hi";
  for (const auto& name : h.names) out << ',' << name;
  out << '\n';
  for (std::size_t b = 0; b + 1 < h.edges.size(); ++b) {
    out << csv::format_double(h.edges[b]) << ',' << csv::format_double(h.edges[b + 1]);
    for (const auto& counts : h.counts) out << ',' << counts[b];
    out << '\n';
  }
  if (!out) fail(ErrorCode::io_error, "failed writing " + path.string());
}

}  // namespace swnf
