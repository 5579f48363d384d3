#pragma once

#include <optional>
#include <string>
#include <string_view>

#include "swnf/flow.hpp"
#include "swnf/sliced_wasserstein.hpp"

namespace swnf {

enum class Objective {
  mle,            // negative log-likelihood only
  sw,             // SW(x, f^-1(z)) only
  hybrid_data,    // SW(x, f^-1(z)) + alpha * NLL
  hybrid_latent,  // SW(z, f(x)) + alpha * NLL
};

std::string_view objective_name(Objective o);
std::optional<Objective> parse_objective(std::string_view name);

struct LossSpec {
  Objective variant = Objective::hybrid_data;
  double alpha = 1.0;
  SWConfig sw{};

  bool uses_sw() const { return variant != Objective::mle; }
  bool uses_mle() const { return variant != Objective::sw; }
  bool is_hybrid() const {
    return variant == Objective::hybrid_data || variant == Objective::hybrid_latent;
  }
  void validate() const;
};

// Mean negative log-likelihood of the batch under the flow.
Tensor mle_loss(const FlowModel& model, const Tensor& x);

// Sliced-Wasserstein term with explicit directions. Latent-space variant
// compares z with f(x); every other variant compares x with f^-1(z).
Tensor sw_loss(const FlowModel& model, const Tensor& x, const Tensor& z, const LossSpec& spec,
               const Tensor& directions);
Tensor sw_loss(const FlowModel& model, const Tensor& x, const Tensor& z, const LossSpec& spec,
               Rng& rng);

Tensor hybrid_loss(const FlowModel& model, const Tensor& x, const Tensor& z, const LossSpec& spec,
                   const Tensor& directions);
Tensor hybrid_loss(const FlowModel& model, const Tensor& x, const Tensor& z, const LossSpec& spec,
                   Rng& rng);

// The configured objective with its parts kept for logging. Terms not used by
// the variant are left empty.
struct LossTerms {
  Tensor total;
  std::optional<Tensor> sw;
  std::optional<Tensor> mle;
};

LossTerms objective_loss(const FlowModel& model, const Tensor& x, const Tensor& z,
                         const LossSpec& spec, const Tensor& directions);

}  // namespace swnf
