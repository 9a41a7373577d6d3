#include <gtest/gtest.h>

#include <random>

#include "support/gradcheck.hpp"

using namespace garlic;

namespace {

GaussianSet two_unit_gaussians() {
  GaussianSet G(2);
  G.add(GaussianParams::isotropic(Vector::Zero(2), 1.0));
  Vector m(2);
  m << 4.0, 0.0;
  G.add(GaussianParams::isotropic(m, 1.0));
  return G;
}

TEST(Losses, CoverageSetMatchesFilterOracle) {
  std::mt19937_64 rng(1);
  const auto X = oracle::random_points(rng, 200, 4, 2.0);
  GaussianSet G(4);
  for (int k = 0; k < 6; ++k) G.add(oracle::random_gaussian(rng, 4));
  G.deactivate(3);
  for (std::size_t i = 0; i < X.size(); ++i)
    EXPECT_EQ(coverage_set(X.row(i), G, 2.5), oracle::coverage_filter(oracle::to_vector(X.row(i)), G, 2.5));
}

TEST(Losses, CoverageBoundaryIsInclusive) {
  const auto G = two_unit_gaussians();
  const std::vector<double> x = {3.0, 0.0};  // distance 3 to the first, 1 to the second
  EXPECT_EQ(coverage_set(std::span<const double>(x), G, 3.0), (std::vector<GaussianId>{0, 1}));
}

TEST(Losses, SoftAssignHandValues) {
  const auto G = two_unit_gaussians();
  const std::vector<double> x = {1.0, 0.0};  // Euclidean 1 and 3
  const auto p = soft_assign(std::span<const double>(x), G, {0, 1}, 0.0);
  ASSERT_TRUE(p);
  const double z = std::exp(-1.0) + std::exp(-3.0);
  EXPECT_NEAR((*p)[0], std::exp(-1.0) / z, 1e-15);
  EXPECT_NEAR((*p)[1], std::exp(-3.0) / z, 1e-15);
  EXPECT_FALSE(soft_assign(std::span<const double>(x), G, {}, 0.0));
}

TEST(Losses, SoftAssignSumsToOnePlusEps) {
  std::mt19937_64 rng(2);
  GaussianSet G(3);
  for (int k = 0; k < 5; ++k) G.add(oracle::random_gaussian(rng, 3));
  const std::vector<double> x = {0.1, 0.2, 0.3};
  const auto p = soft_assign(std::span<const double>(x), G, {0, 2, 4}, 1e-6);
  double s = 0.0;
  for (double v : *p) s += v;
  EXPECT_NEAR(s, 1.0 + 3e-6, 1e-12);
}

TEST(Losses, DivHingeHandValues) {
  const auto G = two_unit_gaussians();
  // Distances to nearest: 0.5 (inside), 5 (outside by 2), 2 (inside).
  const VectorSet<double> X(3, 2, {0.5, 0.0, 4.0, 5.0, 2.0, 0.0});
  EXPECT_NEAR(loss_div(X.view(), G, 3.0), 2.0 / 3.0, 1e-15);
}

TEST(Losses, CovHandValues) {
  const auto G = two_unit_gaussians();
  // Point (2,0) is covered by both at Euclidean 2 and 2 -> max p = 1/2.
  // Point (0,10) is uncovered and left out.
  const VectorSet<double> X(2, 2, {2.0, 0.0, 0.0, 10.0});
  EXPECT_NEAR(loss_cov(X.view(), G, 3.0, 0.0), 0.5, 1e-15);
}

TEST(Losses, CovZeroWhenNothingCovered) {
  const auto G = two_unit_gaussians();
  const VectorSet<double> X(1, 2, {0.0, 50.0});
  EXPECT_EQ(loss_cov(X.view(), G, 3.0, 0.0), 0.0);
}

TEST(Losses, AnchorHandValues) {
  GaussianSet G(2);
  G.add(GaussianParams::isotropic(Vector::Zero(2), 1.0));
  // Two points at (+-1, 0): mean 0, covariance diag(1, 0).
  const VectorSet<double> X(2, 2, {1.0, 0.0, -1.0, 0.0});
  // |mu - mean|^2 = 0, |I - diag(1,0)|_F^2 = 1, normalized by d * K = 2.
  EXPECT_NEAR(loss_anchor(X.view(), G, 0.5), 0.5 * 1.0 / 2.0, 1e-15);
}

TEST(Losses, AnchorSkipsGaussiansWithOnePoint) {
  const auto G = two_unit_gaussians();
  const VectorSet<double> X(1, 2, {0.0, 0.0});
  EXPECT_EQ(loss_anchor(X.view(), G, 1.0), 0.0);
}

TEST(Losses, TotalIsWeightedSumOfTerms) {
  std::mt19937_64 rng(4);
  const auto X = oracle::random_points(rng, 100, 5);
  GaussianSet G(5);
  for (int k = 0; k < 4; ++k) G.add(oracle::random_gaussian(rng, 5));
  HyperParams hp;
  hp.lambda_div = 0.7;
  hp.lambda_cov = 1.3;
  hp.lambda_anchor = 0.2;
  const auto r = total_loss_and_grads(X.view(), G, hp);
  EXPECT_NEAR(r.loss.l_div, loss_div(X.view(), G, hp.tau), 1e-12);
  EXPECT_NEAR(r.loss.l_cov, loss_cov(X.view(), G, hp.tau, hp.eps_num), 1e-12);
  EXPECT_NEAR(r.loss.l_anchor, loss_anchor(X.view(), G, hp.alpha_anchor), 1e-12);
  EXPECT_NEAR(r.loss.total, 0.7 * r.loss.l_div + 1.3 * r.loss.l_cov + 0.2 * r.loss.l_anchor, 1e-12);
}

TEST(Losses, GradientsMatchFiniteDifferences) {
  HyperParams hp;
  for (std::uint64_t seed : {100u, 101u, 102u}) {
    const auto [X, G] = oracle::gradient_instance(seed);
    const auto r = oracle::gradient_check(X, G, hp);
    EXPECT_GT(r.checked, 100u);
    EXPECT_LE(r.max_rel_error, 1e-4) << "seed " << seed;
  }
}

TEST(Losses, GradientsOfEachTermSeparately) {
  const auto [X, G] = oracle::gradient_instance(7, 48, 5, 3);
  for (int term = 0; term < 3; ++term) {
    HyperParams hp;
    hp.lambda_div = term == 0 ? 1.0 : 0.0;
    hp.lambda_cov = term == 1 ? 1.0 : 0.0;
    hp.lambda_anchor = term == 2 ? 1.0 : 0.0;
    const auto r = oracle::gradient_check(X, G, hp);
    EXPECT_LE(r.max_rel_error, 1e-4) << "term " << term;
  }
}

TEST(Losses, InactiveGaussiansGetNoGradient) {
  auto [X, G] = oracle::gradient_instance(3);
  G.deactivate(1);
  const auto r = total_loss_and_grads(X.view(), G, HyperParams{});
  EXPECT_EQ(r.grads[1].mu.size(), 0);
  EXPECT_GT(r.grads[0].mu.norm(), 0.0);
}

TEST(Losses, NonFiniteLossRaisesDivergence) {
  GaussianSet G(2);
  G.add(GaussianParams::isotropic(Vector::Zero(2), 1.0));
  G[0].log_diag[0] = -800.0;  // factor underflows to zero
  const VectorSet<double> X(2, 2, {1.0, 1.0, 2.0, 2.0});
  try {
    total_loss_and_grads(X.view(), G, HyperParams{}, 17);
    FAIL() << "expected divergence";
  } catch (const TrainingDivergence& e) {
    EXPECT_EQ(e.epoch(), 17u);
  }
}

TEST(Losses, EmptyBatchRejected) {
  const auto G = two_unit_gaussians();
  const PointsView<double> empty(nullptr, 0, 2);
  EXPECT_THROW(total_loss_and_grads(empty, G, HyperParams{}), InvalidParameter);
}

}  // namespace
