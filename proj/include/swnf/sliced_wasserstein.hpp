#pragma once

// Monte-Carlo sliced-Wasserstein distance between two equal-size empirical
// distributions. Values are reported as W_p^p (no p-th root).

#include <cstddef>
#include <cstdint>

#include "swnf/random.hpp"
#include "swnf/tensor.hpp"

namespace swnf {

enum class DirectionPolicy {
  fixed_seed,  // every call draws from a generator seeded with SWConfig::seed
  fresh,       // every call consumes the caller's generator
};

struct SWConfig {
  std::size_t projections = 128;
  int p = 2;
  DirectionPolicy policy = DirectionPolicy::fresh;
  std::uint64_t seed = 0;

  void validate() const;
};

inline constexpr std::size_t kTrainProjections = 128;
inline constexpr std::size_t kEvalProjections = 2048;

// [count x dim] rows uniform on the unit sphere (normalized Gaussian draws).
Tensor sample_directions(std::size_t count, std::size_t dim, Rng& rng);

// (1/N) sum_i |a_(i) - b_(i)|^p over ascending order statistics.
Tensor wasserstein_1d(const Tensor& a, const Tensor& b, int p);

// Average of wasserstein_1d over the slices x.u_j, y.u_j for the given
// directions [J x D].
Tensor sliced_wasserstein(const Tensor& x, const Tensor& y, const Tensor& directions, int p);

// Draws directions according to cfg.policy, then evaluates the above.
Tensor sliced_wasserstein(const Tensor& x, const Tensor& y, const SWConfig& cfg, Rng& rng);

}  // namespace swnf
