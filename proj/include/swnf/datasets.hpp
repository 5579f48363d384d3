#pragma once

// Seeded 2-D toy distributions: two concentric circles (training target),
// two interleaving moons and three Gaussian blobs (out-of-distribution sets).

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string_view>
#include <vector>

#include "swnf/random.hpp"
#include "swnf/tensor.hpp"

namespace swnf {

enum class DatasetKind { circles, moons, blobs };

std::string_view dataset_name(DatasetKind kind);
std::optional<DatasetKind> parse_dataset(std::string_view name);
double default_noise_std(DatasetKind kind);

struct DatasetSpec {
  DatasetKind kind = DatasetKind::circles;
  std::size_t n_samples = 1000;
  double noise_std = 0.08;
  std::uint64_t seed = 0;
  bool standardize = true;

  static DatasetSpec defaults(DatasetKind kind);
  void validate() const;
};

// Per-coordinate affine map to zero mean and unit (population) variance.
struct Standardization {
  std::vector<double> mean;
  std::vector<double> scale;

  static Standardization fit(const Tensor& x);
  Tensor apply(const Tensor& x) const;
};

// Uses the supplied generator and ignores spec.seed.
Tensor generate(const DatasetSpec& spec, Rng& rng);
// Uses a generator derived from spec.seed.
Tensor generate(const DatasetSpec& spec);

// Generation without standardization, plus the sub-population label of every
// row (circle, moon or blob index).
struct LabeledSamples {
  Tensor points;
  std::vector<std::size_t> labels;
};
LabeledSamples generate_labeled(const DatasetSpec& spec, Rng& rng);

// CSV with header x0,x1,... and 17 significant digits per value.
void write_points_csv(const std::filesystem::path& path, const Tensor& points);
Tensor read_points_csv(const std::filesystem::path& path);

}  // namespace swnf
