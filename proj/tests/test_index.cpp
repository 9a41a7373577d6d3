#include <gtest/gtest.h>

#include <numbers>
#include <random>
#include <set>

#include "support/fixtures.hpp"
#include "support/oracles.hpp"

using namespace garlic;

namespace {

TEST(Pca, BasisMatchesSvdOracle) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> normal;
  RowMatrix P(300, 5);
  const double scales[5] = {5.0, 3.0, 2.0, 0.5, 0.1};
  for (Eigen::Index i = 0; i < 300; ++i)
    for (Eigen::Index j = 0; j < 5; ++j) P(i, j) = scales[j] * normal(rng) + 1.0;
  const auto pca = bucket_pca(P, 3);
  const Matrix V = oracle::principal_directions(P, 3);
  for (Eigen::Index c = 0; c < 3; ++c) EXPECT_NEAR(std::abs(pca.basis.col(c).dot(V.col(c))), 1.0, 1e-9);
  EXPECT_TRUE((pca.basis.transpose() * pca.basis).isApprox(Matrix::Identity(3, 3), 1e-12));
  EXPECT_FALSE(pca.degenerate);
  EXPECT_GE(pca.eigenvalues[0], pca.eigenvalues[1]);
  EXPECT_GE(pca.eigenvalues[1], pca.eigenvalues[2]);
}

TEST(Pca, SignConventionLargestEntryPositive) {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> normal;
  RowMatrix P(50, 4);
  for (Eigen::Index i = 0; i < P.size(); ++i) P.data()[i] = normal(rng);
  const auto pca = bucket_pca(P, 2);
  for (Eigen::Index c = 0; c < 2; ++c) {
    Eigen::Index arg = 0;
    pca.basis.col(c).cwiseAbs().maxCoeff(&arg);
    EXPECT_GT(pca.basis(arg, c), 0.0);
  }
}

TEST(Pca, SinglePointIsDegenerate) {
  RowMatrix P(1, 3);
  P << 1, 2, 3;
  const auto pca = bucket_pca(P, 2);
  EXPECT_TRUE(pca.degenerate);
  EXPECT_EQ(pca.projected.norm(), 0.0);
}

TEST(Spherical, RoundTrip) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> normal;
  for (int r = 2; r <= 5; ++r)
    for (int t = 0; t < 100; ++t) {
      Vector v(r);
      for (auto& x : v) x = normal(rng);
      EXPECT_TRUE(sph2cart(cart2sph(v)).isApprox(v, 1e-12));
    }
}

TEST(Spherical, AngleRanges) {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> normal;
  for (int t = 0; t < 200; ++t) {
    Vector v(4);
    for (auto& x : v) x = normal(rng);
    const Vector s = cart2sph(v);
    EXPECT_NEAR(s[0], v.norm(), 1e-12);
    EXPECT_GE(s[1], 0.0);
    EXPECT_LE(s[1], std::numbers::pi);
    EXPECT_GE(s[2], 0.0);
    EXPECT_LE(s[2], std::numbers::pi);
    EXPECT_GT(s[3], -std::numbers::pi);
    EXPECT_LE(s[3], std::numbers::pi);
  }
}

TEST(Spherical, HandValues) {
  Vector v(2);
  v << 0.0, 2.0;
  const Vector s = cart2sph(v);
  EXPECT_DOUBLE_EQ(s[0], 2.0);
  EXPECT_DOUBLE_EQ(s[1], std::numbers::pi / 2);
  EXPECT_EQ(cart2sph(Vector::Zero(3)), Vector::Zero(3));
}

TEST(Grid, BinIndexHandValues) {
  EXPECT_EQ(GridSpec::bin_index(0.0, 0.0, 1.0, 4), 0u);
  EXPECT_EQ(GridSpec::bin_index(0.25, 0.0, 1.0, 4), 1u);
  EXPECT_EQ(GridSpec::bin_index(0.99, 0.0, 1.0, 4), 3u);
  EXPECT_EQ(GridSpec::bin_index(1.0, 0.0, 1.0, 4), 3u);  // top edge closes the last bin
  EXPECT_EQ(GridSpec::bin_index(-5.0, 0.0, 1.0, 4), 0u);
  EXPECT_EQ(GridSpec::bin_index(0.5, 0.5, 0.5, 4), 3u);  // empty range: every edge sits at the value
}

TEST(Grid, EveryPointInsideItsBinBox) {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> normal;
  RowMatrix sph(500, 3);
  for (Eigen::Index i = 0; i < 500; ++i) {
    Vector v(3);
    for (auto& x : v) x = normal(rng);
    sph.row(i) = cart2sph(v).transpose();
  }
  const auto g = build_grid(sph, 6, 4);
  EXPECT_EQ(g.spec.cells(), 6u * 4u * 4u);
  Vector lo, hi;
  for (Eigen::Index i = 0; i < 500; ++i) {
    ASSERT_LT(g.codes[static_cast<std::size_t>(i)], g.spec.cells());
    g.spec.box(g.codes[static_cast<std::size_t>(i)], lo, hi);
    for (Eigen::Index k = 0; k < 3; ++k) {
      EXPECT_LE(lo[k], sph(i, k));
      EXPECT_GE(hi[k], sph(i, k));
    }
  }
}

TEST(Grid, CodeOrderIsLexicographic) {
  GridSpec s;
  s.n_radial = 3;
  s.n_angular = 2;
  s.radial_edges = {0, 1, 2, 3};
  s.angle_ranges = {{0, 1}, {0, 1}};
  Vector a(3), b(3);
  a << 0.5, 0.9, 0.9;  // (0, 1, 1) -> 3
  b << 1.5, 0.1, 0.1;  // (1, 0, 0) -> 4
  EXPECT_EQ(s.code_of(a), 3u);
  EXPECT_EQ(s.code_of(b), 4u);
}

TEST(Grid, RMinZeroPinsInnerEdge) {
  RowMatrix sph(2, 2);
  sph << 2.0, 0.0, 4.0, 1.0;
  EXPECT_EQ(build_grid(sph, 2, 2, true).spec.radial_edges.front(), 0.0);
  EXPECT_EQ(build_grid(sph, 2, 2, false).spec.radial_edges.front(), 2.0);
}

class BuiltIndex : public ::testing::Test {
 protected:
  static void SetUpTestSuite() { fixture_ = new garlic::testing::SmallIndex(garlic::testing::small_index()); }
  static void TearDownTestSuite() {
    delete fixture_;
    fixture_ = nullptr;
  }
  static garlic::testing::SmallIndex* fixture_;
};
garlic::testing::SmallIndex* BuiltIndex::fixture_ = nullptr;

TEST_F(BuiltIndex, PassesStructuralCheck) { EXPECT_EQ(check_index(fixture_->built.index), ""); }

TEST_F(BuiltIndex, CoverageConservation) {
  const auto& idx = fixture_->built.index;
  std::set<PointId> all;
  for (const auto& b : idx.buckets) {
    std::size_t total = 0;
    for (const auto& bin : b.bins) total += bin.length;
    EXPECT_EQ(total, b.members.size());
    std::set<PointId> unique(b.members.begin(), b.members.end());
    EXPECT_EQ(unique.size(), b.members.size());
    all.insert(b.members.begin(), b.members.end());
  }
  EXPECT_EQ(all.size(), idx.size());
}

TEST_F(BuiltIndex, BucketsMatchCoverageOfNormalizedData) {
  const auto& idx = fixture_->built.index;
  const auto Xn = idx.normalizer.transform(idx.data);
  const auto want = current_buckets(Xn.view(), idx.gaussians, idx.hp.tau);
  for (const auto& b : idx.buckets) {
    std::vector<PointId> got = b.members;
    std::sort(got.begin(), got.end());
    EXPECT_EQ(got, want[b.gaussian_id]);
  }
}

TEST_F(BuiltIndex, MembersRebinToTheirOwnBin) {
  const auto& idx = fixture_->built.index;
  for (const auto& b : idx.buckets) {
    if (b.degenerate) continue;
    for (const auto& bin : b.bins)
      for (PointId p : b.bin_members(bin)) {
        const auto xn = idx.normalizer.apply_f32(idx.data.row(p));
        EXPECT_EQ(b.grid.code_of(b.spherical(std::span<const float>(xn))), bin.code);
      }
  }
}

TEST_F(BuiltIndex, CheckDetectsCorruption) {
  auto idx = fixture_->built.index;
  idx.buckets[0].bins[0].length += 1;
  EXPECT_NE(check_index(idx), "");
  idx = fixture_->built.index;
  idx.buckets[0].members.push_back(static_cast<PointId>(idx.size()));
  EXPECT_NE(check_index(idx), "");
}

TEST(BuildIndex, SingletonBucketIsDegenerate) {
  GaussianSet G(2);
  G.add(GaussianParams::isotropic(Vector::Zero(2), 0.1));
  Vector m(2);
  m << 10.0, 10.0;
  G.add(GaussianParams::isotropic(m, 0.1));
  const VectorSet<float> X(3, 2, {0, 0, 0.01f, 0.01f, 10, 10});
  HyperParams hp;
  hp.r_pca = 2;
  const auto idx = build_index(X, Normalizer::identity(2), G, hp);
  EXPECT_EQ(check_index(idx), "");
  EXPECT_TRUE(idx.buckets[1].degenerate);
  EXPECT_EQ(idx.buckets[1].members, std::vector<PointId>{2});
}

TEST(Crc, KnownVector) {
  const char* s = "123456789";
  EXPECT_EQ(crc32_of(s, 9), 0xCBF43926u);
}

}  // namespace
