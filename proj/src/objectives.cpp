#include "swnf/objectives.hpp"

#include <cmath>
#include <sstream>

#include "swnf/error.hpp"

namespace swnf {

std::string_view objective_name(Objective o) {
  switch (o) {
    case Objective::mle: return "mle";
    case Objective::sw: return "sw";
    case Objective::hybrid_data: return "hybrid-data";
    case Objective::hybrid_latent: return "hybrid-latent";
  }
  return "unknown";
}

std::optional<Objective> parse_objective(std::string_view name) {
  if (name == "mle") return Objective::mle;
  if (name == "sw") return Objective::sw;
  if (name == "hybrid" || name == "hybrid-data") return Objective::hybrid_data;
  if (name == "hybrid-latent") return Objective::hybrid_latent;
  return std::nullopt;
}

void LossSpec::validate() const {
  if (!(alpha >= 0.0) || !std::isfinite(alpha)) {
    fail(ErrorCode::invalid_argument, "alpha must be a finite non-negative number");
  }
  sw.validate();
}

Tensor mle_loss(const FlowModel& model, const Tensor& x) {
  Tensor nll = -mean(model.log_prob(x));
  if (!std::isfinite(nll.item())) {
    std::ostringstream msg;
    msg << "negative log-likelihood is not finite (" << nll.item() << ") on a batch of "
        << x.rows() << " points";
    fail(ErrorCode::non_finite, msg.str());
  }
  return nll;
}

Tensor sw_loss(const FlowModel& model, const Tensor& x, const Tensor& z, const LossSpec& spec,
               const Tensor& directions) {
  if (x.shape() != z.shape()) {
    fail(ErrorCode::shape_mismatch, "sw_loss: data " + shape_string(x.shape()) +
                                        " and base samples " + shape_string(z.shape()) +
                                        " differ");
  }
  if (spec.variant == Objective::hybrid_latent) {
    return sliced_wasserstein(z, model.forward(x).z, directions, spec.sw.p);
  }
  return sliced_wasserstein(x, model.inverse(z), directions, spec.sw.p);
}

Tensor sw_loss(const FlowModel& model, const Tensor& x, const Tensor& z, const LossSpec& spec,
               Rng& rng) {
  spec.sw.validate();
  if (spec.sw.policy == DirectionPolicy::fixed_seed) {
    Rng own = make_stream(spec.sw.seed, "projections");
    return sw_loss(model, x, z, spec, sample_directions(spec.sw.projections, model.dim(), own));
  }
  return sw_loss(model, x, z, spec, sample_directions(spec.sw.projections, model.dim(), rng));
}

Tensor hybrid_loss(const FlowModel& model, const Tensor& x, const Tensor& z, const LossSpec& spec,
                   const Tensor& directions) {
  if (!spec.is_hybrid()) {
    fail(ErrorCode::invalid_argument, "hybrid_loss needs a hybrid objective variant");
  }
  return sw_loss(model, x, z, spec, directions) + mle_loss(model, x) * spec.alpha;
}

Tensor hybrid_loss(const FlowModel& model, const Tensor& x, const Tensor& z, const LossSpec& spec,
                   Rng& rng) {
  if (!spec.is_hybrid()) {
    fail(ErrorCode::invalid_argument, "hybrid_loss needs a hybrid objective variant");
  }
  spec.sw.validate();
  Rng own = make_stream(spec.sw.seed, "projections");
  Rng& source = spec.sw.policy == DirectionPolicy::fixed_seed ? own : rng;
  return hybrid_loss(model, x, z, spec, sample_directions(spec.sw.projections, model.dim(), source));
}

LossTerms objective_loss(const FlowModel& model, const Tensor& x, const Tensor& z,
                         const LossSpec& spec, const Tensor& directions) {
  switch (spec.variant) {
    case Objective::mle: {
      Tensor nll = mle_loss(model, x);
      return LossTerms{nll, std::nullopt, nll};
    }
    case Objective::sw: {
      Tensor s = sw_loss(model, x, z, spec, directions);
      return LossTerms{s, s, std::nullopt};
    }
    case Objective::hybrid_data:
    case Objective::hybrid_latent: {
      Tensor s = sw_loss(model, x, z, spec, directions);
      Tensor nll = mle_loss(model, x);
      return LossTerms{s + nll * spec.alpha, s, nll};
    }
  }
  fail(ErrorCode::invalid_argument, "unknown objective variant");
}

}  // namespace swnf
