#include "swnf/sliced_wasserstein.hpp"

#include <cmath>
#include <random>
#include <string>
#include <utility>

#include "swnf/error.hpp"

namespace swnf {

namespace {

Tensor pth_power(const Tensor& diff, int p) { return p == 1 ? abs(diff) : square(diff); }

void check_p(int p) {
  if (p != 1 && p != 2) {
    fail(ErrorCode::invalid_argument, "transport exponent p must be 1 or 2, got " + std::to_string(p));
  }
}

}  // namespace

void SWConfig::validate() const {
  if (projections < 1) fail(ErrorCode::invalid_argument, "number of projections must be >= 1");
  check_p(p);
}

Tensor sample_directions(std::size_t count, std::size_t dim, Rng& rng) {
  if (count < 1 || dim < 1) {
    fail(ErrorCode::invalid_argument, "sample_directions needs count >= 1 and dim >= 1");
  }
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> u(count * dim);
  for (std::size_t j = 0; j < count; ++j) {
    double* row = u.data() + j * dim;
    double norm_sq = 0.0;
    // A zero draw has probability zero; redraw rather than divide by zero.
    while (norm_sq == 0.0) {
      for (std::size_t d = 0; d < dim; ++d) {
        row[d] = normal(rng);
        norm_sq += row[d] * row[d];
      }
    }
    const double inv = 1.0 / std::sqrt(norm_sq);
    for (std::size_t d = 0; d < dim; ++d) row[d] *= inv;
  }
  return Tensor(Shape{count, dim}, std::move(u));
}

Tensor wasserstein_1d(const Tensor& a, const Tensor& b, int p) {
  check_p(p);
  if (a.rank() != 1 || b.rank() != 1) {
    fail(ErrorCode::shape_mismatch, "wasserstein_1d expects 1-D inputs");
  }
  if (a.size() != b.size() || a.size() == 0) {
    fail(ErrorCode::shape_mismatch, "wasserstein_1d needs equal non-zero lengths, got " +
                                        std::to_string(a.size()) + " and " +
                                        std::to_string(b.size()));
  }
  auto sa = sort_with_permutation(a);
  auto sb = sort_with_permutation(b);
  return mean(pth_power(sa.values - sb.values, p));
}

Tensor sliced_wasserstein(const Tensor& x, const Tensor& y, const Tensor& directions, int p) {
  check_p(p);
  if (x.rank() != 2 || y.rank() != 2 || x.shape() != y.shape()) {
    fail(ErrorCode::shape_mismatch, "sliced_wasserstein needs equal [N x D] inputs, got " +
                                        shape_string(x.shape()) + " and " +
                                        shape_string(y.shape()));
  }
  if (directions.rank() != 2 || directions.cols() != x.cols()) {
    fail(ErrorCode::shape_mismatch, "directions " + shape_string(directions.shape()) +
                                        " do not match data width " + std::to_string(x.cols()));
  }
  // Projections are [N x J]; sorting each column gives the 1-D optimal
  // matching per slice, and the mean over all entries averages over slices.
  const std::size_t J = directions.rows(), D = directions.cols();
  std::vector<double> ut(D * J);
  const auto u = directions.values();
  for (std::size_t j = 0; j < J; ++j) {
    for (std::size_t d = 0; d < D; ++d) ut[d * J + j] = u[j * D + d];
  }
  Tensor basis(Shape{D, J}, std::move(ut));
  Tensor px = sort_columns(matmul(x, basis));
  Tensor py = sort_columns(matmul(y, basis));
  return mean(pth_power(px - py, p));
}

Tensor sliced_wasserstein(const Tensor& x, const Tensor& y, const SWConfig& cfg, Rng& rng) {
  cfg.validate();
  if (x.rank() != 2) fail(ErrorCode::shape_mismatch, "sliced_wasserstein expects [N x D] inputs");
  if (cfg.policy == DirectionPolicy::fixed_seed) {
    Rng own = make_stream(cfg.seed, "projections");
    return sliced_wasserstein(x, y, sample_directions(cfg.projections, x.cols(), own), cfg.p);
  }
  return sliced_wasserstein(x, y, sample_directions(cfg.projections, x.cols(), rng), cfg.p);
}

}  // namespace swnf
