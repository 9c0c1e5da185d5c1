#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "sidewalk/latentprep.hpp"
#include "support/oracles.hpp"

using namespace sidewalk;
using namespace sidewalk::latentprep;

namespace {

std::vector<Vector> correlated(std::size_t n, std::size_t d, std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<Vector> mix(d, Vector(d));
  for (auto& r : mix)
    for (double& v : r) v = g(rng);
  std::vector<Vector> out(n, Vector(d, 0.0));
  for (auto& x : out) {
    Vector z(d);
    for (std::size_t k = 0; k < d; ++k) z[k] = g(rng) * (1.0 + static_cast<double>(d - k));
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t k = 0; k < d; ++k) x[i] += mix[i][k] * z[k];
  }
  return out;
}

double residual(const PcaModel& m, const std::vector<Vector>& data) {
  double r = 0.0;
  for (const auto& x : data) {
    const auto back = pca_reconstruct(m, pca_apply(m, x));
    for (std::size_t i = 0; i < x.size(); ++i) r += (x[i] - back[i]) * (x[i] - back[i]);
  }
  return r;
}

}  // namespace

TEST(Normalizer, FitCases) {
  const auto m = normalizer_fit({{0.0}, {10.0}});
  EXPECT_EQ(m.min[0], 0.0);
  EXPECT_EQ(m.max[0], 10.0);
  EXPECT_THROW(normalizer_fit({}), DataError);
  EXPECT_THROW(normalizer_fit({{1.0}, {1.0, 2.0}}), DataError);
}

TEST(Normalizer, ApplyCases) {
  const auto m = normalizer_fit({{0.0}, {10.0}});
  EXPECT_EQ(normalizer_apply(m, Vector{5.0})[0], 0.0);
  EXPECT_EQ(normalizer_apply(m, Vector{15.0})[0], 1.0);
  EXPECT_EQ(normalizer_apply(m, Vector{0.0})[0], -1.0);
  EXPECT_EQ(normalizer_apply(m, Vector{-30.0})[0], -1.0);
  EXPECT_THROW(normalizer_apply(m, Vector{1.0, 2.0}), DimensionError);
}

TEST(Normalizer, ConstantFeatureMapsToZero) {
  const auto m = normalizer_fit({{3.0, 1.0}, {3.0, 2.0}});
  EXPECT_TRUE(m.degenerate(0));
  EXPECT_FALSE(m.degenerate(1));
  EXPECT_EQ(normalizer_apply(m, Vector{3.0, 1.5})[0], 0.0);
  EXPECT_EQ(normalizer_apply(m, Vector{100.0, 1.5})[0], 0.0);
}

TEST(Normalizer, OutputAlwaysInUnitBox) {
  std::mt19937_64 rng(1);
  const auto data = correlated(50, 6, rng);
  const auto m = normalizer_fit(data);
  for (const auto& x : data)
    for (double v : normalizer_apply(m, x)) {
      EXPECT_GE(v, -1.0);
      EXPECT_LE(v, 1.0);
    }
  std::normal_distribution<double> wide(0.0, 100.0);
  for (int t = 0; t < 50; ++t) {
    Vector x(6);
    for (double& v : x) v = wide(rng);
    for (double v : normalizer_apply(m, x)) {
      EXPECT_GE(v, -1.0);
      EXPECT_LE(v, 1.0);
    }
  }
}

TEST(Pca, LineYEqualsX) {
  const auto m = pca_fit({{-2, -2}, {-1, -1}, {0, 0}, {1, 1}, {3, 3}}, 0.95);
  ASSERT_EQ(m.output_dim(), 1u);
  EXPECT_NEAR(m.components[0][0], 1.0 / std::sqrt(2.0), 1e-12);
  EXPECT_NEAR(m.components[0][1], 1.0 / std::sqrt(2.0), 1e-12);
  EXPECT_NEAR(m.retained_fraction, 1.0, 1e-12);
  // Oracle: var of t where x = (t, t) is 2 * var(t).
  const auto oracle = oracle::jacobi_eigen(oracle::covariance({{-2, -2}, {-1, -1}, {0, 0}, {1, 1}, {3, 3}}));
  EXPECT_NEAR(m.explained_variance[0], oracle.values[0], 1e-12);
}

TEST(Pca, IsotropicKeepsFullDimension) {
  const auto m = pca_fit({{1, 0, 0}, {-1, 0, 0}, {0, 1, 0}, {0, -1, 0}, {0, 0, 1}, {0, 0, -1}}, 1.0);
  EXPECT_EQ(m.output_dim(), 3u);
}

TEST(Pca, ComponentsOrthonormal) {
  std::mt19937_64 rng(2);
  const auto m = pca_fit(correlated(100, 10, rng), 1.0);
  for (std::size_t a = 0; a < m.output_dim(); ++a)
    for (std::size_t b = 0; b < m.output_dim(); ++b) {
      double dot = 0.0;
      for (std::size_t i = 0; i < 10; ++i) dot += m.components[a][i] * m.components[b][i];
      EXPECT_NEAR(dot, a == b ? 1.0 : 0.0, 1e-6);
    }
  for (std::size_t k = 1; k < m.output_dim(); ++k) EXPECT_GE(m.explained_variance[k - 1], m.explained_variance[k]);
}

TEST(Pca, EigenvaluesMatchJacobiOracle) {
  std::mt19937_64 rng(3);
  for (std::size_t d : {3u, 8u, 32u}) {
    const auto data = correlated(80, d, rng);
    const auto m = pca_fit(data, 1.0);
    const auto o = oracle::jacobi_eigen(oracle::covariance(data));
    ASSERT_EQ(m.output_dim(), d);
    for (std::size_t k = 0; k < d; ++k) {
      EXPECT_NEAR(m.explained_variance[k], o.values[k], 1e-6 * std::max(1.0, o.values[0]));
      // Same direction up to sign.
      double dot = 0.0;
      for (std::size_t i = 0; i < d; ++i) dot += m.components[k][i] * o.vectors[k][i];
      if (k + 1 < d && o.values[k] - o.values[k + 1] > 1e-3 * o.values[0] &&
          (k == 0 || o.values[k - 1] - o.values[k] > 1e-3 * o.values[0])) {
        EXPECT_NEAR(std::abs(dot), 1.0, 1e-6) << "d=" << d << " k=" << k;
      }
    }
  }
}

TEST(Pca, RetainedVarianceChoosesSmallestK) {
  std::mt19937_64 rng(4);
  const auto data = correlated(200, 6, rng);
  const auto full = pca_fit(data, 1.0);
  for (double target : {0.5, 0.8, 0.95, 0.99}) {
    const auto m = pca_fit(data, target);
    double cum = 0.0;
    std::size_t k = 0;
    while (k < 6 && cum / full.total_variance < target) cum += full.explained_variance[k++];
    EXPECT_EQ(m.output_dim(), k) << target;
    EXPECT_GE(m.retained_fraction, target - 1e-9);
  }
}

TEST(Pca, ApplyCases) {
  std::mt19937_64 rng(5);
  const auto data = correlated(60, 5, rng);
  const auto m = pca_fit(data, 1.0);
  for (double v : pca_apply(m, m.mean)) EXPECT_NEAR(v, 0.0, 1e-12);
  for (const auto& x : data) {
    const auto back = pca_reconstruct(m, pca_apply(m, x));
    for (std::size_t i = 0; i < 5; ++i) EXPECT_NEAR(back[i], x[i], 1e-9);
  }
  EXPECT_THROW(pca_apply(m, Vector{1.0}), DimensionError);
}

TEST(Pca, ReconstructionErrorMonotoneInK) {
  std::mt19937_64 rng(6);
  const auto data = correlated(120, 12, rng);
  const auto full = pca_fit(data, 1.0);
  double previous = INFINITY;
  for (std::size_t k = 1; k <= 12; ++k) {
    const double r = residual(pca_truncate(full, k), data);
    EXPECT_LE(r, previous * (1 + 1e-12) + 1e-9) << "k=" << k;
    previous = r;
  }
  EXPECT_NEAR(previous, 0.0, 1e-6);
}

TEST(Pca, Errors) {
  EXPECT_THROW(pca_fit({{1.0, 2.0}}, 0.95), DataError);
  EXPECT_THROW(pca_fit({}, 0.95), DataError);
  EXPECT_THROW(pca_fit({{1.0}, {2.0}}, 0.0), ArgumentError);
  EXPECT_THROW(pca_fit({{1.0}, {2.0}}, 1.5), ArgumentError);
}
