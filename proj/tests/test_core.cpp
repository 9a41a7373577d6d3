#include <gtest/gtest.h>

#include <random>

#include "support/oracles.hpp"

using namespace garlic;

namespace {

TEST(Core, IdentityFactorGivesEuclideanDistance) {
  const GaussianParams g = GaussianParams::isotropic(Vector::Zero(3), 1.0);
  const std::vector<double> x = {3.0, 4.0, 0.0};
  EXPECT_DOUBLE_EQ(mahalanobis(std::span<const double>(x), g), 5.0);
}

TEST(Core, ScaledIdentityDividesDistance) {
  const GaussianParams g = GaussianParams::isotropic(Vector::Ones(2), 2.0);
  const std::vector<double> x = {1.0, 5.0};
  EXPECT_NEAR(mahalanobis(std::span<const double>(x), g), 2.0, 1e-15);
}

TEST(Core, PointAtMeanHasZeroDistance) {
  std::mt19937_64 rng(3);
  const auto g = oracle::random_gaussian(rng, 6);
  std::vector<double> x(g.mu.data(), g.mu.data() + g.mu.size());
  EXPECT_EQ(mahalanobis(std::span<const double>(x), g), 0.0);
}

TEST(Core, MatchesExplicitInverse) {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> normal;
  for (int t = 0; t < 300; ++t) {
    const std::size_t d = 2 + t % 12;
    const auto g = oracle::random_gaussian(rng, d);
    Vector x(static_cast<Eigen::Index>(d));
    for (auto& v : x) v = normal(rng) * 2.0;
    const double got = mahalanobis(std::span<const double>(x.data(), d), g);
    const double want = oracle::mahalanobis_explicit(x, g);
    EXPECT_NEAR(got * got, want * want, 1e-8 * want * want) << "trial " << t;
  }
}

TEST(Core, CholeskyHasPositiveDiagonalAndZeroUpper) {
  std::mt19937_64 rng(5);
  auto g = oracle::random_gaussian(rng, 5);
  g.lower(0, 3) = 7.0;  // upper entries are ignored
  const Matrix L = materialize_cholesky(g);
  for (Eigen::Index j = 0; j < 5; ++j) {
    EXPECT_GT(L(j, j), 0.0);
    for (Eigen::Index k = j + 1; k < 5; ++k) EXPECT_EQ(L(j, k), 0.0);
  }
}

TEST(Core, ConstructorZeroesUpperTriangle) {
  Matrix lower = Matrix::Ones(3, 3);
  const GaussianParams g(Vector::Zero(3), Vector::Zero(3), lower);
  EXPECT_EQ(g.lower(0, 1), 0.0);
  EXPECT_EQ(g.lower(1, 1), 0.0);
  EXPECT_EQ(g.lower(2, 1), 1.0);
}

TEST(Core, NonFiniteParameterRejected) {
  auto g = GaussianParams::isotropic(Vector::Zero(2), 1.0);
  g.log_diag[1] = std::nan("");
  EXPECT_THROW(materialize_cholesky(g), InvalidParameter);
}

TEST(Core, DimensionMismatchRejected) {
  const auto g = GaussianParams::isotropic(Vector::Zero(3), 1.0);
  const std::vector<double> x = {1.0, 2.0};
  EXPECT_THROW(mahalanobis(std::span<const double>(x), g), DimensionMismatch);
  EXPECT_THROW(GaussianParams(Vector::Zero(3), Vector::Zero(2), Matrix::Zero(3, 3)), DimensionMismatch);
}

TEST(Core, ScaleFactorScalesCovariance) {
  std::mt19937_64 rng(2);
  auto g = oracle::random_gaussian(rng, 4);
  const Matrix before = covariance(g);
  g.scale_factor(0.5);
  EXPECT_TRUE(covariance(g).isApprox(0.25 * before, 1e-12));
}

TEST(Core, BatchMatchesScalarExactly) {
  std::mt19937_64 rng(9);
  const auto X = oracle::random_points(rng, 37, 5);
  GaussianSet G(5);
  for (int k = 0; k < 4; ++k) G.add(oracle::random_gaussian(rng, 5));
  G.deactivate(2);
  const RowMatrix D = mahalanobis_batch(X, G);
  for (std::size_t i = 0; i < X.size(); ++i)
    for (GaussianId g = 0; g < G.size(); ++g) {
      if (!G.active(g)) {
        EXPECT_TRUE(std::isinf(D(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(g))));
        continue;
      }
      EXPECT_EQ(D(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(g)), mahalanobis(X.row(i), G[g]));
    }
}

TEST(Core, BatchIndependentOfThreadCount) {
  std::mt19937_64 rng(4);
  const auto X = oracle::random_points(rng, 500, 6);
  GaussianSet G(6);
  for (int k = 0; k < 5; ++k) G.add(oracle::random_gaussian(rng, 6));
  set_num_threads(1);
  const RowMatrix a = mahalanobis_batch(X, G);
  set_num_threads(4);
  const RowMatrix b = mahalanobis_batch(X, G);
  set_num_threads(0);
  EXPECT_EQ(a, b);
}

TEST(Core, ArgminTiesGoToLowestId) {
  Vector row(4);
  row << 2.0, 1.0, 1.0, 3.0;
  EXPECT_EQ(argmin_row(row), 1u);
}

TEST(Core, GaussianSetTracksActivity) {
  GaussianSet G(2);
  const auto a = G.add(GaussianParams::isotropic(Vector::Zero(2), 1.0));
  const auto b = G.add(GaussianParams::isotropic(Vector::Ones(2), 1.0));
  EXPECT_EQ(G.active_count(), 2u);
  G.deactivate(a);
  EXPECT_FALSE(G.active(a));
  EXPECT_EQ(G.active_ids(), std::vector<GaussianId>{b});
  EXPECT_EQ(G.size(), 2u);
}

TEST(Core, WhitenAndBackSolveInvertFactor) {
  std::mt19937_64 rng(8);
  const auto g = oracle::random_gaussian(rng, 5);
  const Whitener w(g);
  std::vector<double> x = {0.3, -1.0, 2.0, 0.1, 0.7};
  const Vector y = w.whiten(std::span<const double>(x));
  const Matrix L = materialize_cholesky(g);
  const Vector diff = Eigen::Map<const Vector>(x.data(), 5) - g.mu;
  EXPECT_TRUE((L * y).isApprox(diff, 1e-12));
  const Vector z = w.back_solve(y);
  EXPECT_TRUE((L.transpose() * z).isApprox(y, 1e-12));
}

TEST(Core, VectorSetValidatesShape) {
  EXPECT_THROW(VectorSet<float>(3, 2, std::vector<float>(5)), Error);
  const VectorSet<float> X(2, 2, {1, 2, 3, 4});
  EXPECT_EQ(X.row(1)[0], 3.0f);
  EXPECT_EQ(X.to_matrix()(1, 1), 4.0);
}

TEST(Parallel, ChunkPlanCoversRangeOnce) {
  for (std::size_t n : {0u, 1u, 7u, 1000u})
    for (std::size_t chunks : {1u, 3u, 64u}) {
      const ChunkPlan plan(n, chunks);
      std::size_t covered = 0;
      for (std::size_t c = 0; c < plan.chunks; ++c) {
        EXPECT_LE(plan.begin(c), plan.end(c));
        if (c > 0) EXPECT_EQ(plan.begin(c), plan.end(c - 1));
        covered += plan.end(c) - plan.begin(c);
      }
      EXPECT_EQ(covered, n);
    }
}

TEST(Parallel, ExceptionsPropagate) {
  set_num_threads(3);
  EXPECT_THROW(parallel_for(100, [](std::size_t i) {
                 if (i == 57) throw InvalidParameter("boom");
               }),
               InvalidParameter);
  set_num_threads(0);
}

}  // namespace
