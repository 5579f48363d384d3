#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "swnf/error.hpp"
#include "swnf/sliced_wasserstein.hpp"
#include "test_support.hpp"

namespace swnf {
namespace {

using testing::max_gradient_error;
using testing::normal_tensor;
using testing::to_vector;

double brute_force_w1d(const std::vector<double>& a, const std::vector<double>& b, int p) {
  std::vector<std::size_t> perm(a.size());
  std::iota(perm.begin(), perm.end(), 0);
  double best = INFINITY;
  do {
    double cost = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) cost += std::pow(std::fabs(a[i] - b[perm[i]]), p);
    best = std::min(best, cost);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best / static_cast<double>(a.size());
}

Tensor shifted(const Tensor& x, std::span<const double> shift) {
  std::vector<double> v = to_vector(x.values());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] += shift[i % shift.size()];
  return Tensor(x.shape(), v);
}

TEST(Directions, UnitNorm) {
  Rng rng(1);
  for (std::size_t dim : {1u, 2u, 3u, 7u}) {
    auto u = sample_directions(500, dim, rng);
    ASSERT_EQ(u.shape(), (Shape{500, dim}));
    for (std::size_t j = 0; j < 500; ++j) {
      double n = 0.0;
      for (std::size_t d = 0; d < dim; ++d) n += u.at(j, d) * u.at(j, d);
      EXPECT_NEAR(std::sqrt(n), 1.0, 1e-12);
      if (dim == 1) {
        EXPECT_NEAR(std::fabs(u.at(j, 0)), 1.0, 1e-15);
      }
    }
  }
}

TEST(Directions, MeanIsNearZero) {
  Rng rng(2);
  auto u = sample_directions(10000, 2, rng);
  auto m = mean(u, 0);
  EXPECT_LT(std::fabs(m[0]), 0.05);
  EXPECT_LT(std::fabs(m[1]), 0.05);
}

TEST(Directions, InvalidArguments) {
  Rng rng(0);
  EXPECT_THROW(sample_directions(0, 2, rng), Error);
  EXPECT_THROW(sample_directions(3, 0, rng), Error);
}

TEST(Wasserstein1d, Examples) {
  EXPECT_EQ(wasserstein_1d(Tensor::vector({0, 1}), Tensor::vector({0, 1}), 2).item(), 0.0);
  EXPECT_EQ(wasserstein_1d(Tensor::vector({0, 2}), Tensor::vector({1, 3}), 2).item(), 1.0);
  EXPECT_EQ(wasserstein_1d(Tensor::vector({0, 0}), Tensor::vector({1, 1}), 1).item(), 1.0);
  EXPECT_EQ(wasserstein_1d(Tensor::vector({2, 0}), Tensor::vector({1, 3}), 1).item(), 1.0);
}

TEST(Wasserstein1d, Errors) {
  EXPECT_THROW(wasserstein_1d(Tensor::vector({0, 1}), Tensor::vector({0}), 2), Error);
  EXPECT_THROW(wasserstein_1d(Tensor::vector({0}), Tensor::vector({0}), 3), Error);
  EXPECT_THROW(wasserstein_1d(Tensor::zeros({2, 1}), Tensor::zeros({2, 1}), 2), Error);
}

// Integer samples keep every sum exact, so the comparison is equality.
TEST(Wasserstein1d, MatchesBruteForceOnIntegers) {
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<int> value(-20, 20);
  std::uniform_int_distribution<int> length(1, 6);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t n = length(rng);
    std::vector<double> a(n), b(n);
    for (auto& v : a) v = value(rng);
    for (auto& v : b) v = value(rng);
    for (int p : {1, 2}) {
      EXPECT_EQ(wasserstein_1d(Tensor::vector(a), Tensor::vector(b), p).item(),
                brute_force_w1d(a, b, p));
    }
  }
}

TEST(Wasserstein1d, MatchesBruteForceOnReals) {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + trial % 6;
    auto a = testing::uniform_values(n, rng), b = testing::uniform_values(n, rng);
    for (int p : {1, 2}) {
      const double fast = wasserstein_1d(Tensor::vector(a), Tensor::vector(b), p).item();
      EXPECT_NEAR(fast, brute_force_w1d(a, b, p), 1e-12 * std::max(1.0, fast));
    }
  }
}

TEST(SlicedWasserstein, IdenticalInputsGiveZero) {
  std::mt19937_64 rng(5);
  Rng dir_rng(5);
  auto x = normal_tensor({64, 3}, rng);
  auto u = sample_directions(32, 3, dir_rng);
  EXPECT_EQ(sliced_wasserstein(x, x, u, 2).item(), 0.0);
  // same multiset in another row order
  std::vector<std::size_t> rows(64);
  std::iota(rows.rbegin(), rows.rend(), 0);
  EXPECT_EQ(sliced_wasserstein(x, gather_rows(x, rows), u, 1).item(), 0.0);
}

TEST(SlicedWasserstein, OneDimensionEqualsWasserstein1d) {
  std::mt19937_64 rng(6);
  Rng dir_rng(6);
  auto x = normal_tensor({40, 1}, rng);
  auto y = normal_tensor({40, 1}, rng, 2.0);
  for (int p : {1, 2}) {
    const double expected =
        wasserstein_1d(Tensor::vector(to_vector(x.values())), Tensor::vector(to_vector(y.values())), p)
            .item();
    for (std::size_t j : {1u, 5u, 64u}) {
      auto u = sample_directions(j, 1, dir_rng);
      EXPECT_NEAR(sliced_wasserstein(x, y, u, p).item(), expected, 1e-14 * expected);
    }
  }
}

TEST(SlicedWasserstein, ShapeErrors) {
  Rng rng(0);
  auto u = sample_directions(4, 2, rng);
  EXPECT_THROW(sliced_wasserstein(Tensor::zeros({3, 2}), Tensor::zeros({4, 2}), u, 2), Error);
  EXPECT_THROW(sliced_wasserstein(Tensor::zeros({3, 3}), Tensor::zeros({3, 3}), u, 2), Error);
  SWConfig bad{0, 2};
  EXPECT_THROW(bad.validate(), Error);
  SWConfig bad_p{8, 3};
  EXPECT_THROW(bad_p.validate(), Error);
}

TEST(SlicedWasserstein, Properties) {
  std::mt19937_64 rng(7);
  Rng dir_rng(7);
  std::uniform_real_distribution<double> coin(-3.0, 3.0);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 1 + trial * 3, d = 1 + trial % 4;
    const int p = 1 + trial % 2;
    auto x = normal_tensor({n, d}, rng);
    auto y = normal_tensor({n, d}, rng, 1.5);
    auto u = sample_directions(16, d, dir_rng);
    const double v = sliced_wasserstein(x, y, u, p).item();
    EXPECT_GE(v, 0.0);
    EXPECT_EQ(sliced_wasserstein(y, x, u, p).item(), v);

    std::vector<double> shift(d);
    for (double& s : shift) s = coin(rng);
    EXPECT_NEAR(sliced_wasserstein(shifted(x, shift), shifted(y, shift), u, p).item(), v,
                1e-12 * std::max(1.0, v));

    // scaling by a power of two is exact in floating point
    const double two_k = std::ldexp(1.0, trial % 7 - 3);
    EXPECT_EQ(sliced_wasserstein(x * two_k, y * two_k, u, p).item(), v * std::pow(two_k, p));
    const double a = coin(rng);
    EXPECT_NEAR(sliced_wasserstein(x * a, y * a, u, p).item(), v * std::pow(std::fabs(a), p),
                1e-12 * std::max(1.0, v));
  }
}

TEST(SlicedWasserstein, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(8);
  Rng dir_rng(8);
  for (int p : {1, 2}) {
    auto x = normal_tensor({12, 3}, rng).clone(true);
    auto y = normal_tensor({12, 3}, rng).clone(true);
    auto u = sample_directions(10, 3, dir_rng);
    EXPECT_LT(max_gradient_error([&] { return sliced_wasserstein(x, y, u, p); }, {x, y}), 1e-4)
        << "p=" << p;
  }
}

TEST(SlicedWasserstein, DirectionPolicies) {
  std::mt19937_64 rng(9);
  auto x = normal_tensor({30, 2}, rng);
  auto y = normal_tensor({30, 2}, rng, 2.0);
  SWConfig fixed{16, 2, DirectionPolicy::fixed_seed, 123};
  Rng a(1), b(2);
  EXPECT_EQ(sliced_wasserstein(x, y, fixed, a).item(), sliced_wasserstein(x, y, fixed, b).item());
  Rng own = make_stream(123, "projections");
  EXPECT_EQ(sliced_wasserstein(x, y, fixed, a).item(),
            sliced_wasserstein(x, y, sample_directions(16, 2, own), 2).item());

  SWConfig fresh{16, 2, DirectionPolicy::fresh, 0};
  Rng c(5);
  const double first = sliced_wasserstein(x, y, fresh, c).item();
  const double second = sliced_wasserstein(x, y, fresh, c).item();
  EXPECT_NE(first, second);
  Rng d(5);
  EXPECT_EQ(sliced_wasserstein(x, y, fresh, d).item(), first);
}

// J=256 estimates against a 10^5-direction reference on the same samples.
TEST(SlicedWasserstein, ConcentratesNearHighProjectionReference) {
  double total_rel = 0.0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    std::mt19937_64 rng(100 + seed);
    auto x = normal_tensor({512, 2}, rng);
    auto y = shifted(normal_tensor({512, 2}, rng), std::vector<double>{3.0, 0.0});
    Rng est_rng(seed);
    const double estimate = sliced_wasserstein(x, y, sample_directions(256, 2, est_rng), 2).item();
    Rng ref_rng(1000 + seed);
    double reference = 0.0;
    const int chunks = 100;
    for (int c = 0; c < chunks; ++c) {
      reference += sliced_wasserstein(x, y, sample_directions(1000, 2, ref_rng), 2).item();
    }
    reference /= chunks;
    total_rel += std::fabs(estimate - reference) / reference;
  }
  EXPECT_LT(total_rel / 10.0, 0.05);
}

}  // namespace
}  // namespace swnf
