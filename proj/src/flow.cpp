#include "swnf/flow.hpp"

#include <cmath>
#include <numbers>
#include <random>
#include <string>
#include <utility>

#include "swnf/error.hpp"

namespace swnf {

namespace {

Linear clone_linear(const Linear& l) {
  return Linear{l.weight.clone(l.weight.requires_grad()),
                l.bias.clone(l.bias.requires_grad())};
}

Mlp clone_mlp(const Mlp& m) {
  std::vector<Linear> layers;
  for (const auto& l : m.layers()) layers.push_back(clone_linear(l));
  return Mlp(std::move(layers));
}

std::vector<CouplingLayer> clone_layers(const std::vector<CouplingLayer>& src) {
  std::vector<CouplingLayer> out;
  out.reserve(src.size());
  for (const auto& l : src) {
    out.emplace_back(l.mask(), clone_mlp(l.scale_net()), clone_mlp(l.shift_net()), l.clamp());
  }
  return out;
}

Linear uniform_linear(std::size_t in, std::size_t out, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  std::vector<double> w(in * out), b(out);
  for (double& v : w) v = dist(rng);
  for (double& v : b) v = dist(rng);
  return Linear{Tensor(Shape{in, out}, std::move(w), true), Tensor(Shape{out}, std::move(b), true)};
}

Mlp make_mlp(std::size_t in, const std::vector<std::size_t>& hidden, std::size_t out, Rng& rng) {
  std::vector<Linear> layers;
  std::size_t width = in;
  for (std::size_t h : hidden) {
    layers.push_back(uniform_linear(width, h, rng));
    width = h;
  }
  layers.push_back(Linear{Tensor::zeros(Shape{width, out}, true), Tensor::zeros(Shape{out}, true)});
  return Mlp(std::move(layers));
}

}  // namespace

// ---------------------------------------------------------------------------

Mlp::Mlp(std::vector<Linear> layers) : layers_(std::move(layers)) {
  if (layers_.empty()) fail(ErrorCode::invalid_argument, "Mlp needs at least one layer");
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const auto& l = layers_[i];
    if (l.weight.rank() != 2 || l.bias.rank() != 1 || l.bias.size() != l.weight.cols()) {
      fail(ErrorCode::shape_mismatch, "Mlp layer " + std::to_string(i) + " has inconsistent shapes");
    }
    if (i > 0 && layers_[i - 1].weight.cols() != l.weight.rows()) {
      fail(ErrorCode::shape_mismatch, "Mlp layers " + std::to_string(i - 1) + " and " +
                                          std::to_string(i) + " do not chain");
    }
  }
}

Tensor Mlp::operator()(const Tensor& x) const {
  Tensor h = x;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    h = affine(h, layers_[i].weight, layers_[i].bias);
    if (i + 1 < layers_.size()) h = tanh(h);
  }
  return h;
}

std::size_t Mlp::in_features() const { return layers_.front().weight.rows(); }
std::size_t Mlp::out_features() const { return layers_.back().weight.cols(); }

// ---------------------------------------------------------------------------

CouplingLayer::CouplingLayer(std::vector<std::uint8_t> mask, Mlp scale_net, Mlp shift_net,
                             double clamp)
    : mask_(std::move(mask)),
      scale_net_(std::move(scale_net)),
      shift_net_(std::move(shift_net)),
      clamp_(clamp) {
  for (std::size_t i = 0; i < mask_.size(); ++i) {
    if (mask_[i] > 1) fail(ErrorCode::invalid_argument, "mask entries must be 0 or 1");
    (mask_[i] ? passed_ : transformed_).push_back(i);
  }
  if (passed_.empty() || transformed_.empty()) {
    fail(ErrorCode::invalid_argument, "coupling mask needs at least one 0 and one 1");
  }
  if (!(clamp_ > 0.0)) fail(ErrorCode::invalid_argument, "scale clamp must be positive");
  for (const Mlp* net : {&scale_net_, &shift_net_}) {
    if (net->in_features() != passed_.size() || net->out_features() != transformed_.size()) {
      fail(ErrorCode::shape_mismatch, "coupling subnetwork maps " +
                                          std::to_string(net->in_features()) + " -> " +
                                          std::to_string(net->out_features()) + ", mask needs " +
                                          std::to_string(passed_.size()) + " -> " +
                                          std::to_string(transformed_.size()));
    }
  }
}

std::pair<Tensor, Tensor> CouplingLayer::scale_and_shift(const Tensor& passed) const {
  Tensor raw = scale_net_(passed);
  Tensor log_scale = tanh(raw * (1.0 / clamp_)) * clamp_;
  return {std::move(log_scale), shift_net_(passed)};
}

LayerOutput CouplingLayer::forward(const Tensor& x) const {
  Tensor passed = select_columns(x, passed_);
  auto [log_scale, shift] = scale_and_shift(passed);
  Tensor moved = select_columns(x, transformed_) * exp(log_scale) + shift;
  return LayerOutput{merge_columns(passed, passed_, moved, transformed_, mask_.size()),
                     sum(log_scale, 1)};
}

Tensor CouplingLayer::inverse(const Tensor& y) const {
  Tensor passed = select_columns(y, passed_);
  auto [log_scale, shift] = scale_and_shift(passed);
  Tensor moved = (select_columns(y, transformed_) - shift) * exp(-log_scale);
  return merge_columns(passed, passed_, moved, transformed_, mask_.size());
}

// ---------------------------------------------------------------------------

FlowModel::FlowModel(std::size_t dim, std::vector<CouplingLayer> layers)
    : dim_(dim), layers_(std::move(layers)) {
  if (dim_ < 2) fail(ErrorCode::invalid_argument, "flow dimension must be at least 2");
  if (layers_.empty()) fail(ErrorCode::invalid_argument, "flow needs at least one coupling layer");
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    if (layers_[i].mask().size() != dim_) {
      fail(ErrorCode::shape_mismatch, "coupling layer " + std::to_string(i) +
                                          " mask length differs from flow dimension");
    }
  }
  // Consecutive masks must alternate so every coordinate gets transformed.
  for (std::size_t i = 1; i < layers_.size(); ++i) {
    const auto& a = layers_[i - 1].mask();
    const auto& b = layers_[i].mask();
    for (std::size_t d = 0; d < dim_; ++d) {
      if (a[d] == b[d]) {
        fail(ErrorCode::invalid_argument, "masks of coupling layers " + std::to_string(i - 1) +
                                              " and " + std::to_string(i) + " do not alternate");
      }
    }
  }
}

FlowModel::FlowModel(const FlowModel& other)
    : dim_(other.dim_), layers_(clone_layers(other.layers_)) {}

FlowModel& FlowModel::operator=(const FlowModel& other) {
  if (this != &other) {
    dim_ = other.dim_;
    layers_ = clone_layers(other.layers_);
  }
  return *this;
}

void FlowModel::check_input(const Tensor& t, const char* what) const {
  if (t.rank() != 2 || t.cols() != dim_) {
    fail(ErrorCode::shape_mismatch, std::string(what) + ": expected [N x " +
                                        std::to_string(dim_) + "], got " +
                                        shape_string(t.shape()));
  }
}

FlowOutput FlowModel::forward(const Tensor& x) const {
  check_input(x, "forward");
  Tensor h = x;
  Tensor log_det;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    auto out = layers_[i].forward(h);
    h = std::move(out.y);
    log_det = i == 0 ? std::move(out.log_det) : log_det + out.log_det;
  }
  return FlowOutput{std::move(h), std::move(log_det)};
}

Tensor FlowModel::inverse(const Tensor& z) const {
  check_input(z, "inverse");
  Tensor h = z;
  for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) h = it->inverse(h);
  return h;
}

Tensor FlowModel::log_prob(const Tensor& x) const {
  auto out = forward(x);
  return standard_normal_log_prob(out.z) + out.log_det;
}

FlowArchitecture FlowModel::architecture() const {
  FlowArchitecture arch;
  arch.dim = dim_;
  arch.n_layers = layers_.size();
  arch.hidden.clear();
  const auto& mlp_layers = layers_.front().scale_net().layers();
  for (std::size_t i = 0; i + 1 < mlp_layers.size(); ++i) {
    arch.hidden.push_back(mlp_layers[i].weight.cols());
  }
  return arch;
}

std::vector<Tensor> FlowModel::parameters() const {
  std::vector<Tensor> params;
  for (const auto& layer : layers_) {
    for (const Mlp* net : {&layer.scale_net(), &layer.shift_net()}) {
      for (const auto& l : net->layers()) {
        params.push_back(l.weight);
        params.push_back(l.bias);
      }
    }
  }
  return params;
}

std::size_t FlowModel::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : parameters()) n += p.size();
  return n;
}

void FlowModel::zero_grad() {
  for (auto& p : parameters()) p.zero_grad();
}

// ---------------------------------------------------------------------------

std::vector<std::uint8_t> alternating_mask(std::size_t dim, std::size_t layer_index) {
  std::vector<std::uint8_t> mask(dim);
  const std::size_t half = dim / 2;
  for (std::size_t d = 0; d < dim; ++d) {
    const bool first_half = d < half;
    mask[d] = (layer_index % 2 == 0) == first_half ? 1 : 0;
  }
  return mask;
}

FlowModel init_model(const FlowArchitecture& arch, std::uint64_t seed) {
  if (arch.dim < 2) fail(ErrorCode::invalid_argument, "flow dimension must be at least 2");
  if (arch.n_layers < 1) fail(ErrorCode::invalid_argument, "flow needs at least one coupling layer");
  for (std::size_t h : arch.hidden) {
    if (h < 1) fail(ErrorCode::invalid_argument, "hidden widths must be at least 1");
  }
  Rng rng = make_stream(seed, "init");
  std::vector<CouplingLayer> layers;
  layers.reserve(arch.n_layers);
  for (std::size_t i = 0; i < arch.n_layers; ++i) {
    auto mask = alternating_mask(arch.dim, i);
    std::size_t passed = 0;
    for (auto m : mask) passed += m;
    const std::size_t transformed = arch.dim - passed;
    Mlp scale = make_mlp(passed, arch.hidden, transformed, rng);
    Mlp shift = make_mlp(passed, arch.hidden, transformed, rng);
    layers.emplace_back(std::move(mask), std::move(scale), std::move(shift));
  }
  return FlowModel(arch.dim, std::move(layers));
}

FlowModel init_model(std::size_t dim, std::size_t n_layers, std::size_t hidden,
                     std::uint64_t seed) {
  if (hidden < 1) fail(ErrorCode::invalid_argument, "hidden width must be at least 1");
  return init_model(FlowArchitecture{dim, n_layers, {hidden, hidden}}, seed);
}

Tensor standard_normal_log_prob(const Tensor& z) {
  const double d = static_cast<double>(z.cols());
  const double log_norm = -0.5 * d * std::log(2.0 * std::numbers::pi);
  return sum(square(z), 1) * -0.5 + log_norm;
}

Tensor base_normal(std::size_t n, std::size_t d, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> v(n * d);
  for (double& x : v) x = normal(rng);
  return Tensor(Shape{n, d}, std::move(v));
}

Tensor sample_model(const FlowModel& model, std::size_t n, std::uint64_t seed) {
  if (n < 1) fail(ErrorCode::invalid_argument, "sample count must be at least 1");
  NoGradGuard no_grad;
  Rng rng = make_stream(seed, "sample");
  return model.inverse(base_normal(n, model.dim(), rng));
}

}  // namespace swnf
