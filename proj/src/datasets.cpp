#include "swnf/datasets.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>
#include <sstream>
#include <string>

#include "swnf/csv.hpp"
#include "swnf/error.hpp"

namespace swnf {

namespace {

constexpr double kPi = std::numbers::pi;

// Evenly spaced values on [0, stop) or [0, stop].
std::vector<double> linspace(double stop, std::size_t n, bool endpoint) {
  std::vector<double> out(n);
  if (n == 0) return out;
  const double denom = endpoint ? static_cast<double>(n > 1 ? n - 1 : 1) : static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = stop * static_cast<double>(i) / denom;
  return out;
}

}  // namespace

std::string_view dataset_name(DatasetKind kind) {
  switch (kind) {
    case DatasetKind::circles: return "circles";
    case DatasetKind::moons: return "moons";
    case DatasetKind::blobs: return "blobs";
  }
  return "unknown";
}

std::optional<DatasetKind> parse_dataset(std::string_view name) {
  if (name == "circles") return DatasetKind::circles;
  if (name == "moons") return DatasetKind::moons;
  if (name == "blobs") return DatasetKind::blobs;
  return std::nullopt;
}

double default_noise_std(DatasetKind kind) {
  return kind == DatasetKind::blobs ? 0.1 : 0.08;
}

DatasetSpec DatasetSpec::defaults(DatasetKind kind) {
  DatasetSpec spec;
  spec.kind = kind;
  spec.noise_std = default_noise_std(kind);
  return spec;
}

void DatasetSpec::validate() const {
  if (n_samples < 1) fail(ErrorCode::invalid_argument, "dataset needs at least one sample");
  if (!(noise_std >= 0.0) || !std::isfinite(noise_std)) {
    fail(ErrorCode::invalid_argument, "noise std must be finite and non-negative");
  }
  if (!parse_dataset(dataset_name(kind))) fail(ErrorCode::invalid_argument, "unknown dataset kind");
}

Standardization Standardization::fit(const Tensor& x) {
  if (x.rank() != 2 || x.rows() == 0) {
    fail(ErrorCode::shape_mismatch, "standardization needs a non-empty [N x D] sample");
  }
  const std::size_t n = x.rows(), d = x.cols();
  const auto v = x.values();
  Standardization s;
  s.mean.assign(d, 0.0);
  s.scale.assign(d, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) s.mean[j] += v[i * d + j];
  }
  for (double& m : s.mean) m /= static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) {
      const double c = v[i * d + j] - s.mean[j];
      s.scale[j] += c * c;
    }
  }
  for (double& sc : s.scale) {
    sc = std::sqrt(sc / static_cast<double>(n));
    if (!(sc > 0.0)) sc = 1.0;  // constant column: centre only
  }
  return s;
}

Tensor Standardization::apply(const Tensor& x) const {
  if (x.rank() != 2 || x.cols() != mean.size()) {
    fail(ErrorCode::shape_mismatch, "standardization width does not match data " +
                                        shape_string(x.shape()));
  }
  const std::size_t n = x.rows(), d = x.cols();
  std::vector<double> out(x.values().begin(), x.values().end());
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) out[i * d + j] = (out[i * d + j] - mean[j]) / scale[j];
  }
  return Tensor(x.shape(), std::move(out));
}

LabeledSamples generate_labeled(const DatasetSpec& spec, Rng& rng) {
  spec.validate();
  const std::size_t n = spec.n_samples;
  std::vector<double> pts(n * 2);
  std::vector<std::size_t> labels(n);

  switch (spec.kind) {
    case DatasetKind::circles: {
      const std::size_t n_out = n / 2, n_in = n - n_out;
      const auto t_out = linspace(2.0 * kPi, n_out, false);
      const auto t_in = linspace(2.0 * kPi, n_in, false);
      for (std::size_t i = 0; i < n_out; ++i) {
        pts[2 * i] = std::cos(t_out[i]);
        pts[2 * i + 1] = std::sin(t_out[i]);
        labels[i] = 0;
      }
      for (std::size_t i = 0; i < n_in; ++i) {
        const std::size_t r = n_out + i;
        pts[2 * r] = 0.5 * std::cos(t_in[i]);
        pts[2 * r + 1] = 0.5 * std::sin(t_in[i]);
        labels[r] = 1;
      }
      break;
    }
    case DatasetKind::moons: {
      const std::size_t n_out = n / 2, n_in = n - n_out;
      const auto t_out = linspace(kPi, n_out, true);
      const auto t_in = linspace(kPi, n_in, true);
      for (std::size_t i = 0; i < n_out; ++i) {
        pts[2 * i] = std::cos(t_out[i]);
        pts[2 * i + 1] = std::sin(t_out[i]);
        labels[i] = 0;
      }
      for (std::size_t i = 0; i < n_in; ++i) {
        const std::size_t r = n_out + i;
        pts[2 * r] = 1.0 - std::cos(t_in[i]);
        pts[2 * r + 1] = 1.0 - std::sin(t_in[i]) - 0.5;
        labels[r] = 1;
      }
      break;
    }
    case DatasetKind::blobs: {
      // Vertices of a unit-side equilateral triangle centred at the origin.
      const double radius = 1.0 / std::sqrt(3.0);
      std::size_t row = 0;
      for (std::size_t b = 0; b < 3; ++b) {
        const double angle = kPi / 2.0 + 2.0 * kPi * static_cast<double>(b) / 3.0;
        const std::size_t count = n / 3 + (b < n % 3 ? 1 : 0);
        for (std::size_t i = 0; i < count; ++i, ++row) {
          pts[2 * row] = radius * std::cos(angle);
          pts[2 * row + 1] = radius * std::sin(angle);
          labels[row] = b;
        }
      }
      break;
    }
  }

  if (spec.noise_std > 0.0) {
    std::normal_distribution<double> noise(0.0, spec.noise_std);
    for (double& v : pts) v += noise(rng);
  }

  // Fisher-Yates with an explicit uniform draw keeps the order reproducible.
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (std::size_t i = n; i > 1; --i) {
    std::uniform_int_distribution<std::size_t> pick(0, i - 1);
    std::swap(order[i - 1], order[pick(rng)]);
  }
  std::vector<double> shuffled(n * 2);
  std::vector<std::size_t> shuffled_labels(n);
  for (std::size_t i = 0; i < n; ++i) {
    shuffled[2 * i] = pts[2 * order[i]];
    shuffled[2 * i + 1] = pts[2 * order[i] + 1];
    shuffled_labels[i] = labels[order[i]];
  }
  return LabeledSamples{Tensor(Shape{n, 2}, std::move(shuffled)), std::move(shuffled_labels)};
}

Tensor generate(const DatasetSpec& spec, Rng& rng) {
  Tensor pts = generate_labeled(spec, rng).points;
  if (!spec.standardize) return pts;
  return Standardization::fit(pts).apply(pts);
}

Tensor generate(const DatasetSpec& spec) {
  Rng rng = make_stream(spec.seed, std::string("dataset:") + std::string(dataset_name(spec.kind)));
  return generate(spec, rng);
}

void write_points_csv(const std::filesystem::path& path, const Tensor& points) {
  if (points.rank() != 2) fail(ErrorCode::shape_mismatch, "point CSV expects [N x D] data");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::io_error, "cannot open " + path.string() + " for writing");
  const std::size_t n = points.rows(), d = points.cols();
  for (std::size_t j = 0; j < d; ++j) out << (j ? ",x" : "x") << j;
  out << '\n';
  const auto v = points.values();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) {
      if (j) out << ',';
      out << csv::format_double(v[i * d + j]);
    }
    out << '\n';
  }
  if (!out) fail(ErrorCode::io_error, "failed writing " + path.string());
}

Tensor read_points_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::io_error, "cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) fail(ErrorCode::format_error, path.string() + ": empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = csv::split(line);
  for (std::size_t j = 0; j < header.size(); ++j) {
    if (header[j] != "x" + std::to_string(j)) {
      fail(ErrorCode::format_error, path.string() + ": expected header x0,x1,..., got '" + line + "'");
    }
  }
  const std::size_t d = header.size();
  std::vector<double> values;
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = csv::split(line);
    if (fields.size() != d) {
      fail(ErrorCode::format_error, path.string() + ": row " + std::to_string(rows + 1) +
                                        " has " + std::to_string(fields.size()) + " fields");
    }
    for (const auto& f : fields) values.push_back(csv::parse_double(f));
    ++rows;
  }
  return Tensor(Shape{rows, d}, std::move(values));
}

}  // namespace swnf
