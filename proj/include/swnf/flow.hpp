#pragma once

// RealNVP-style flow: a stack of affine coupling layers mapping data x to a
// standard-normal latent z with a tractable log-determinant.

#include <cstddef>
#include <cstdint>
#include <vector>

#include "swnf/random.hpp"
#include "swnf/tensor.hpp"

namespace swnf {

struct Linear {
  Tensor weight;  // [in x out]
  Tensor bias;    // [out]
};

// Fully connected network with tanh between layers and a linear output.
class Mlp {
 public:
  Mlp() = default;
  explicit Mlp(std::vector<Linear> layers);

  Tensor operator()(const Tensor& x) const;

  std::size_t in_features() const;
  std::size_t out_features() const;
  const std::vector<Linear>& layers() const { return layers_; }
  std::vector<Linear>& layers() { return layers_; }

 private:
  std::vector<Linear> layers_;
};

struct LayerOutput {
  Tensor y;
  Tensor log_det;  // [N]
};

class CouplingLayer {
 public:
  static constexpr double kDefaultClamp = 2.0;

  // mask[i] == 1 marks a coordinate passed through unchanged; the scale and
  // shift nets read those and write the others.
  CouplingLayer(std::vector<std::uint8_t> mask, Mlp scale_net, Mlp shift_net,
                double clamp = kDefaultClamp);

  LayerOutput forward(const Tensor& x) const;
  Tensor inverse(const Tensor& y) const;

  const std::vector<std::uint8_t>& mask() const { return mask_; }
  const Mlp& scale_net() const { return scale_net_; }
  const Mlp& shift_net() const { return shift_net_; }
  Mlp& scale_net() { return scale_net_; }
  Mlp& shift_net() { return shift_net_; }
  double clamp() const { return clamp_; }

 private:
  // Clamped log-scale c * tanh(raw / c) and shift for the conditioning part.
  std::pair<Tensor, Tensor> scale_and_shift(const Tensor& passed) const;

  std::vector<std::uint8_t> mask_;
  std::vector<std::size_t> passed_;
  std::vector<std::size_t> transformed_;
  Mlp scale_net_;
  Mlp shift_net_;
  double clamp_;
};

struct FlowOutput {
  Tensor z;
  Tensor log_det;  // [N]
};

struct FlowArchitecture {
  std::size_t dim = 2;
  std::size_t n_layers = 6;
  std::vector<std::size_t> hidden{64, 64};
};

class FlowModel {
 public:
  FlowModel(std::size_t dim, std::vector<CouplingLayer> layers);

  // Deep copies: parameters are never shared between two models.
  FlowModel(const FlowModel& other);
  FlowModel& operator=(const FlowModel& other);
  FlowModel(FlowModel&&) noexcept = default;
  FlowModel& operator=(FlowModel&&) noexcept = default;

  FlowOutput forward(const Tensor& x) const;
  Tensor inverse(const Tensor& z) const;
  // log p_X(x) per row: standard-normal log density of z plus log_det.
  Tensor log_prob(const Tensor& x) const;

  std::size_t dim() const { return dim_; }
  std::size_t num_layers() const { return layers_.size(); }
  const std::vector<CouplingLayer>& layers() const { return layers_; }
  std::vector<CouplingLayer>& layers() { return layers_; }
  FlowArchitecture architecture() const;

  // Weights then bias, scale net before shift net, layer by layer.
  std::vector<Tensor> parameters() const;
  std::size_t parameter_count() const;
  void zero_grad();

 private:
  void check_input(const Tensor& t, const char* what) const;

  std::size_t dim_;
  std::vector<CouplingLayer> layers_;
};

// Alternating half masks; first half of the coordinates passes through in
// even layers, the complement in odd layers.
std::vector<std::uint8_t> alternating_mask(std::size_t dim, std::size_t layer_index);

// Identity-start flow: hidden layers uniform(+-1/sqrt(fan_in)), output
// layers of every Mlp zero.
FlowModel init_model(const FlowArchitecture& arch, std::uint64_t seed);
FlowModel init_model(std::size_t dim, std::size_t n_layers, std::size_t hidden,
                     std::uint64_t seed);

// Log density of the standard normal per row of z [N x D].
Tensor standard_normal_log_prob(const Tensor& z);

// [n x d] independent N(0, 1) draws, row-major.
Tensor base_normal(std::size_t n, std::size_t d, Rng& rng);

// f^-1 applied to base_normal(n, dim) drawn from the "sample" stream of seed.
Tensor sample_model(const FlowModel& model, std::size_t n, std::uint64_t seed);

}  // namespace swnf
