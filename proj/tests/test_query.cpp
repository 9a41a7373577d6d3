#include <gtest/gtest.h>

#include <random>
#include <set>

#include "support/fixtures.hpp"
#include "support/oracles.hpp"

using namespace garlic;

namespace {

class QueryFixture : public ::testing::Test {
 protected:
  static void SetUpTestSuite() { fixture_ = new garlic::testing::SmallIndex(garlic::testing::small_index(900, 8, 3, 8)); }
  static void TearDownTestSuite() {
    delete fixture_;
    fixture_ = nullptr;
  }
  static const Index& idx() { return fixture_->built.index; }
  static const VectorSet<float>& queries() { return fixture_->queries.X; }
  static garlic::testing::SmallIndex* fixture_;
};
garlic::testing::SmallIndex* QueryFixture::fixture_ = nullptr;

TEST(BinDistance, HandValues) {
  Vector lo(2), hi(2), s(2);
  lo << 0, 0;
  hi << 1, 1;
  s << 0.5, 0.5;
  EXPECT_EQ(bin_distance(s, lo, hi), 0.0);
  s << 4, 5;
  EXPECT_DOUBLE_EQ(bin_distance(s, lo, hi), 5.0);
  s << -2, 0.5;
  EXPECT_DOUBLE_EQ(bin_distance(s, lo, hi), 2.0);
}

TEST(BinDistance, MatchesIterativeMinimizer) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  for (int t = 0; t < 2000; ++t) {
    const int r = 2 + t % 4;
    Vector s(r), lo(r), hi(r);
    for (int k = 0; k < r; ++k) {
      s[k] = u(rng);
      const double a = u(rng), b = u(rng);
      lo[k] = std::min(a, b);
      hi[k] = std::max(a, b);
    }
    EXPECT_NEAR(bin_distance(s, lo, hi), oracle::box_distance_iterative(s, lo, hi), 1e-6);
  }
}

TEST(Budget, ParseAndPrintRoundTrip) {
  for (const char* text : {"argmin@0.3", "threshold:2.5@1", "topk:4@0.1", "argmin@0.05#975", "topk:2@0.5#10"}) {
    const auto b = parse_budget(text);
    EXPECT_EQ(to_string(b), text);
  }
  const auto b = parse_budget("threshold@0.5", 7.0);
  EXPECT_EQ(b.tau, 7.0);
  EXPECT_EQ(parse_budget("argmin").probe_ratio, 0.3);
}

TEST(Budget, RejectsMalformed) {
  for (const char* text : {"", "argmin@0", "argmin@1.5", "argmin:3", "topk@0.3", "topk:0@0.3", "bogus@0.3", "argmin@x",
                           "argmin#0", "threshold:-1@0.3"})
    EXPECT_THROW(parse_budget(text), InvalidParameter) << text;
  EXPECT_THROW(parse_budget_list("argmin,,topk:2"), InvalidParameter);
  EXPECT_EQ(parse_budget_list("argmin@0.1,topk:2@1").size(), 2u);
}

TEST(Selection, Modes) {
  const std::vector<double> dist = {2.0, 0.5, 4.0, 0.5, 1.0};
  EXPECT_EQ(Searcher::select_from(dist, QueryBudget::argmin(1)), std::vector<std::size_t>{1});
  EXPECT_EQ(Searcher::select_from(dist, QueryBudget::top(3, 1)), (std::vector<std::size_t>{1, 3, 4}));
  EXPECT_EQ(Searcher::select_from(dist, QueryBudget::threshold(2.0, 1)), (std::vector<std::size_t>{1, 3, 4, 0}));
  EXPECT_EQ(Searcher::select_from(dist, QueryBudget::threshold(0.1, 1)), std::vector<std::size_t>{1});
  EXPECT_EQ(Searcher::select_from(dist, QueryBudget::top(9, 1)).size(), 5u);
}

TEST(Majority, TiesGoToSmallestLabel) {
  const std::vector<std::int32_t> labels = {3, 1, 3, 1, 2};
  EXPECT_EQ(Searcher::majority_label({0, 1, 2, 3}, labels), 1);
  EXPECT_EQ(Searcher::majority_label({0, 2, 4}, labels), 3);
}

TEST_F(QueryFixture, FullBudgetIsExact) {
  const auto budget = QueryBudget::top(idx().buckets.size(), 1.0);
  const Searcher s(idx());
  for (std::size_t q = 0; q < queries().size(); ++q) {
    const auto r = s.search(queries().row(q), 10, budget);
    EXPECT_EQ(r.candidates_examined, idx().size());
    std::vector<PointId> got;
    for (const auto& n : r.neighbors) got.push_back(n.id);
    EXPECT_EQ(got, oracle::knn_sorted(idx().data, queries().row(q), 10));
  }
}

TEST_F(QueryFixture, CandidatesAreDistinctAndFromSelectedBuckets) {
  const Searcher s(idx());
  const auto budget = QueryBudget::top(3, 0.5);
  for (std::size_t q = 0; q < queries().size(); ++q) {
    const auto r = s.gather(queries().row(q), budget);
    std::set<PointId> unique(r.candidates.begin(), r.candidates.end());
    EXPECT_EQ(unique.size(), r.candidates.size());
    std::set<PointId> allowed;
    for (std::size_t pos : s.select_buckets(queries().row(q), budget))
      allowed.insert(idx().buckets[pos].members.begin(), idx().buckets[pos].members.end());
    for (PointId p : r.candidates) EXPECT_TRUE(allowed.count(p));
    EXPECT_LE(r.buckets_probed, 3u);
  }
}

TEST_F(QueryFixture, ProbesNearestBinsFirst) {
  const Searcher s(idx());
  const auto q = queries().row(0);
  const auto pos = s.select_buckets(q, QueryBudget::argmin(1.0)).front();
  const Bucket& b = idx().buckets[pos];
  if (b.degenerate) GTEST_SKIP();
  const auto qn = idx().normalizer.apply_f32(q);
  const auto ranking = ranked_bins(b.spherical(std::span<const float>(qn)), b);
  for (std::size_t i = 1; i < ranking.bins.size(); ++i) EXPECT_LE(ranking.bins[i - 1].distance, ranking.bins[i].distance);
  const auto r = s.gather(q, QueryBudget::argmin(1e-9));
  EXPECT_EQ(r.bins_probed, 1u);
  const auto first = b.bin_members(b.bins[ranking.bins[0].bin]);
  EXPECT_EQ(r.candidates, std::vector<PointId>(first.begin(), first.end()));
}

TEST_F(QueryFixture, CandidateCapIsExact) {
  const Searcher s(idx());
  for (std::size_t cap : {1u, 7u, 50u}) {
    auto budget = QueryBudget::top(4, 1.0);
    budget.max_candidates = cap;
    for (std::size_t q = 0; q < 10; ++q) EXPECT_EQ(s.gather(queries().row(q), budget).candidates_examined, cap);
  }
}

TEST_F(QueryFixture, MoreProbesNeverLoseCandidates) {
  const Searcher s(idx());
  for (std::size_t q = 0; q < queries().size(); ++q) {
    std::set<PointId> prev;
    for (double ratio : {0.1, 0.2, 0.3, 0.5, 1.0}) {
      const auto r = s.gather(queries().row(q), QueryBudget::argmin(ratio));
      std::set<PointId> cur(r.candidates.begin(), r.candidates.end());
      EXPECT_TRUE(std::includes(cur.begin(), cur.end(), prev.begin(), prev.end()));
      prev = std::move(cur);
    }
  }
}

TEST_F(QueryFixture, NeighborsSortedWithIdTieBreak) {
  const Searcher s(idx());
  const auto r = s.search(queries().row(1), 25, QueryBudget::top(2, 1.0));
  for (std::size_t i = 1; i < r.neighbors.size(); ++i) {
    const auto& a = r.neighbors[i - 1];
    const auto& b = r.neighbors[i];
    EXPECT_TRUE(a.distance < b.distance || (a.distance == b.distance && a.id < b.id));
  }
}

TEST_F(QueryFixture, DatabasePointFindsItself) {
  const Searcher s(idx());
  for (PointId p = 0; p < 50; ++p) {
    const auto r = s.search(idx().data.row(p), 1, QueryBudget::argmin(0.01));
    ASSERT_FALSE(r.neighbors.empty());
    EXPECT_EQ(r.neighbors[0].distance, 0.0);
  }
}

TEST_F(QueryFixture, ClassifyUsesCandidateVotes) {
  const Searcher s(idx());
  const auto& labels = *fixture_->base.labels;
  const auto budget = QueryBudget::argmin(0.3);
  for (std::size_t q = 0; q < 10; ++q) {
    const auto r = s.gather(queries().row(q), budget);
    EXPECT_EQ(s.classify(queries().row(q), std::span<const std::int32_t>(labels), budget),
              Searcher::majority_label(r.candidates, labels));
  }
}

TEST_F(QueryFixture, RejectsBadInput) {
  const Searcher s(idx());
  const std::vector<float> short_q(3, 0.0f);
  EXPECT_THROW(s.search(std::span<const float>(short_q), 1, QueryBudget::argmin(0.3)), DimensionMismatch);
  EXPECT_THROW(s.search(queries().row(0), 0, QueryBudget::argmin(0.3)), InvalidParameter);
  const std::vector<std::int32_t> labels(3, 0);
  EXPECT_THROW(s.classify(queries().row(0), std::span<const std::int32_t>(labels), QueryBudget::argmin(0.3)), DimensionMismatch);
}

TEST_F(QueryFixture, FreeFunctionsAgreeWithSearcher) {
  const auto b = QueryBudget::argmin(0.3);
  const auto a = search(queries().row(2), idx(), 5, b);
  const auto c = Searcher(idx()).search(queries().row(2), 5, b);
  EXPECT_EQ(a.neighbors, c.neighbors);
  EXPECT_EQ(select_buckets(queries().row(2), idx(), b), Searcher(idx()).select_buckets(queries().row(2), b));
}

}  // namespace
