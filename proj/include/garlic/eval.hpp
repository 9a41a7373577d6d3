#pragma once

#include <chrono>
#include <cstdio>
#include <ostream>
#include <string>
#include <vector>

#include "garlic/init.hpp"
#include "garlic/query.hpp"

namespace garlic {

struct GroundTruth {
  std::size_t k = 0;
  std::vector<std::vector<PointId>> ids;     // per query, ascending distance
  std::vector<std::vector<double>> distances;
};

/// Exact Euclidean top-k for every query, ties by id.
template <typename T, typename U>
GroundTruth brute_force_knn(const VectorSet<T>& X, const VectorSet<U>& Q, std::size_t k) {
  if (k < 1 || k > X.size()) throw InvalidParameter("brute_force_knn needs 1 <= k <= n");
  if (X.dim() != Q.dim()) throw DimensionMismatch(X.dim(), Q.dim());
  GroundTruth gt;
  gt.k = k;
  gt.ids.resize(Q.size());
  gt.distances.resize(Q.size());
  parallel_for(Q.size(), [&](std::size_t q) {
    std::vector<std::pair<double, PointId>> scored(X.size());
    for (std::size_t i = 0; i < X.size(); ++i) scored[i] = {squared_distance(Q.row(q), X.row(i)), static_cast<PointId>(i)};
    std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(k), scored.end());
    for (std::size_t r = 0; r < k; ++r) {
      gt.ids[q].push_back(scored[r].second);
      gt.distances[q].push_back(std::sqrt(scored[r].first));
    }
  });
  return gt;
}

/// Fraction of queries whose first result is the true nearest neighbor.
inline double recall_at_1(const std::vector<std::vector<PointId>>& results, const GroundTruth& gt) {
  if (results.size() != gt.ids.size()) throw DimensionMismatch(gt.ids.size(), results.size());
  if (results.empty()) return 0.0;
  std::size_t hits = 0;
  for (std::size_t q = 0; q < results.size(); ++q)
    if (!results[q].empty() && !gt.ids[q].empty() && results[q][0] == gt.ids[q][0]) ++hits;
  return static_cast<double>(hits) / static_cast<double>(results.size());
}

/// Mean overlap of the returned top-10 with the true top-10, over 10.
inline double recall_10_at_10(const std::vector<std::vector<PointId>>& results, const GroundTruth& gt) {
  if (results.size() != gt.ids.size()) throw DimensionMismatch(gt.ids.size(), results.size());
  if (results.empty()) return 0.0;
  double total = 0.0;
  for (std::size_t q = 0; q < results.size(); ++q) {
    const std::size_t tk = std::min<std::size_t>(10, gt.ids[q].size());
    const std::size_t rk = std::min<std::size_t>(10, results[q].size());
    std::vector<PointId> truth(gt.ids[q].begin(), gt.ids[q].begin() + static_cast<std::ptrdiff_t>(tk));
    std::sort(truth.begin(), truth.end());
    std::size_t hit = 0;
    for (std::size_t i = 0; i < rk; ++i) hit += std::binary_search(truth.begin(), truth.end(), results[q][i]) ? 1 : 0;
    total += static_cast<double>(hit) / 10.0;
  }
  return total / static_cast<double>(results.size());
}

inline std::vector<std::vector<PointId>> result_ids(const std::vector<QueryResult>& rs) {
  std::vector<std::vector<PointId>> out(rs.size());
  for (std::size_t i = 0; i < rs.size(); ++i)
    for (const auto& nb : rs[i].neighbors) out[i].push_back(nb.id);
  return out;
}

struct EvalRow {
  std::string label;
  QueryBudget budget;
  double recall_at_1 = 0.0;
  double recall_10_at_10 = 0.0;
  double mean_candidates = 0.0;
  double mean_bins_probed = 0.0;
  double mean_buckets_probed = 0.0;
  std::size_t queries = 0;
  double wall_seconds = 0.0;
};

struct EvalReport {
  std::uint64_t seed = 0;
  Fingerprint fingerprint;
  bool deterministic = false;
  std::vector<EvalRow> rows;
};

inline constexpr const char* kEvalCsvHeader =
    "label,bucket_mode,topk,tau,probe_ratio,max_candidates,recall_at_1,recall_10_at_10,mean_candidates,"
    "mean_bins_probed,mean_buckets_probed,queries,wall_seconds,seed,n,d,data_crc32";

/// Report CSV. Wall time is written as NA for deterministic runs so repeated
/// runs produce identical bytes.
inline void write_eval_csv(std::ostream& os, const EvalReport& r) {
  const auto real = format_real;
  os << kEvalCsvHeader << '\n';
  for (const auto& row : r.rows) {
    os << row.label << ',' << to_string(row.budget.mode) << ',' << row.budget.topk << ',' << real(row.budget.tau) << ','
       << real(row.budget.probe_ratio) << ',' << (row.budget.max_candidates ? std::to_string(*row.budget.max_candidates) : "")
       << ',' << real(row.recall_at_1) << ',' << real(row.recall_10_at_10) << ',' << real(row.mean_candidates) << ','
       << real(row.mean_bins_probed) << ',' << real(row.mean_buckets_probed) << ',' << row.queries << ','
       << (r.deterministic ? std::string("NA") : real(row.wall_seconds)) << ',' << r.seed << ',' << r.fingerprint.n << ','
       << r.fingerprint.d << ',' << r.fingerprint.checksum << '\n';
  }
}

/// Runs every query at budget `b` and returns per-query results (k = 10).
template <typename T>
std::vector<QueryResult> run_queries(const Searcher& s, const VectorSet<T>& Q, const QueryBudget& b, std::size_t k = 10) {
  std::vector<QueryResult> out(Q.size());
  parallel_for(Q.size(), [&](std::size_t q) { out[q] = s.search(Q.row(q), k, b); });
  return out;
}

template <typename T>
EvalRow evaluate_budget(const Searcher& s, const VectorSet<T>& Q, const GroundTruth& gt, const QueryBudget& b) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto rs = run_queries(s, Q, b, 10);
  const auto t1 = std::chrono::steady_clock::now();
  EvalRow row;
  row.label = to_string(b);
  row.budget = b;
  const auto ids = result_ids(rs);
  row.recall_at_1 = recall_at_1(ids, gt);
  row.recall_10_at_10 = recall_10_at_10(ids, gt);
  for (const auto& r : rs) {
    row.mean_candidates += static_cast<double>(r.candidates_examined);
    row.mean_bins_probed += static_cast<double>(r.bins_probed);
    row.mean_buckets_probed += static_cast<double>(r.buckets_probed);
  }
  const double nq = static_cast<double>(std::max<std::size_t>(rs.size(), 1));
  row.mean_candidates /= nq;
  row.mean_bins_probed /= nq;
  row.mean_buckets_probed /= nq;
  row.queries = rs.size();
  row.wall_seconds = std::chrono::duration<double>(t1 - t0).count();
  return row;
}

/// One report row per budget.
template <typename T>
EvalReport bench_sweep(const Index& idx, const VectorSet<T>& Q, const GroundTruth& gt, const std::vector<QueryBudget>& budgets,
                       bool deterministic = false) {
  if (Q.size() != gt.ids.size()) throw DimensionMismatch(gt.ids.size(), Q.size());
  const Searcher s(idx);
  EvalReport rep;
  rep.seed = idx.hp.seed;
  rep.fingerprint = idx.fingerprint;
  rep.deterministic = deterministic;
  for (const auto& b : budgets) rep.rows.push_back(evaluate_budget(s, Q, gt, b));
  return rep;
}

// ---------------------------------------------------------------------------
// Classification

struct ClassificationReport {
  std::vector<std::pair<std::string, double>> variants;  // name, accuracy
  double knn_accuracy = 0.0;                             // exact 10-NN vote
  std::size_t knn_k = 10;
};

/// Ours-1: argmin bucket. Ours-2: all buckets within tau. Ours-3: top-k.
inline QueryBudget variant_budget(int variant, const HyperParams& hp, std::size_t topk = 3) {
  switch (variant) {
    case 1: return QueryBudget::argmin(hp.probe_ratio);
    case 2: return QueryBudget::threshold(hp.tau, hp.probe_ratio);
    case 3: return QueryBudget::top(topk, hp.probe_ratio);
    default: throw InvalidParameter("classification variant must be 1, 2 or 3");
  }
}

template <typename T>
std::vector<std::int32_t> classify_all(const Searcher& s, const VectorSet<T>& Q, std::span<const std::int32_t> train_labels,
                                       const QueryBudget& b) {
  std::vector<std::int32_t> out(Q.size());
  parallel_for(Q.size(), [&](std::size_t q) { out[q] = s.classify(Q.row(q), train_labels, b); });
  return out;
}

inline double accuracy(const std::vector<std::int32_t>& predicted, std::span<const std::int32_t> truth) {
  if (predicted.size() != truth.size()) throw DimensionMismatch(truth.size(), predicted.size());
  if (predicted.empty()) return 0.0;
  std::size_t ok = 0;
  for (std::size_t i = 0; i < predicted.size(); ++i) ok += predicted[i] == truth[i] ? 1 : 0;
  return static_cast<double>(ok) / static_cast<double>(predicted.size());
}

/// Majority vote over the exact k nearest training points.
inline std::vector<std::int32_t> knn_classify(const GroundTruth& gt, std::span<const std::int32_t> train_labels) {
  std::vector<std::int32_t> out(gt.ids.size());
  for (std::size_t q = 0; q < gt.ids.size(); ++q) out[q] = Searcher::majority_label(gt.ids[q], train_labels);
  return out;
}

template <typename T>
ClassificationReport classification_eval(const Index& idx, std::span<const std::int32_t> train_labels, const VectorSet<T>& Q,
                                         std::span<const std::int32_t> query_labels, const std::vector<int>& variants = {1, 2, 3},
                                         std::size_t topk = 3, std::size_t knn_k = 10) {
  if (Q.size() != query_labels.size()) throw DimensionMismatch(Q.size(), query_labels.size());
  const Searcher s(idx);
  ClassificationReport rep;
  for (int v : variants)
    rep.variants.emplace_back("ours-" + std::to_string(v),
                              accuracy(classify_all(s, Q, train_labels, variant_budget(v, idx.hp, topk)), query_labels));
  rep.knn_k = std::min(knn_k, idx.size());
  const auto gt = brute_force_knn(idx.data, Q, rep.knn_k);
  rep.knn_accuracy = accuracy(knn_classify(gt, train_labels), query_labels);
  return rep;
}

inline void write_classification_csv(std::ostream& os, const ClassificationReport& r) {
  const auto real = format_real;
  os << "method,accuracy\n";
  for (const auto& [name, acc] : r.variants) os << name << ',' << real(acc) << '\n';
  os << "exact-" << r.knn_k << "nn," << real(r.knn_accuracy) << '\n';
}

// ---------------------------------------------------------------------------
// Random-partition control

/// Same bucket count as a GARLIC index, points assigned to buckets uniformly
/// at random. A query visits buckets in a per-query random order and stops
/// at its candidate budget.
class RandomPartition {
 public:
  RandomPartition(std::size_t n, std::size_t buckets, std::uint64_t seed) : seed_(seed), buckets_(buckets) {
    if (buckets < 1 || n < 1) throw InvalidParameter("random partition needs n, buckets >= 1");
    Rng rng(seed);
    for (std::size_t i = 0; i < n; ++i) buckets_[uniform_index(rng, buckets)].push_back(static_cast<PointId>(i));
  }

  std::size_t bucket_count() const { return buckets_.size(); }
  const std::vector<std::vector<PointId>>& buckets() const { return buckets_; }

  template <typename T, typename U>
  QueryResult search(const VectorSet<T>& X, std::span<const U> q, std::size_t k, std::size_t max_candidates,
                     std::size_t query_id) const {
    Rng rng(seed_ ^ (0x9e3779b97f4a7c15ULL * (query_id + 1)));
    std::vector<std::size_t> order(buckets_.size());
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[uniform_index(rng, i)]);
    QueryResult res;
    for (std::size_t b : order) {
      if (res.candidates.size() >= max_candidates) break;
      ++res.buckets_probed;
      for (PointId p : buckets_[b]) {
        if (res.candidates.size() >= max_candidates) break;
        res.candidates.push_back(p);
      }
    }
    res.candidates_examined = res.candidates.size();
    std::vector<std::pair<double, PointId>> scored;
    for (PointId p : res.candidates) scored.emplace_back(squared_distance(q, X.row(p)), p);
    const std::size_t kk = std::min(k, scored.size());
    std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(kk), scored.end());
    for (std::size_t i = 0; i < kk; ++i) res.neighbors.push_back({scored[i].second, std::sqrt(scored[i].first)});
    return res;
  }

 private:
  std::uint64_t seed_;
  std::vector<std::vector<PointId>> buckets_;
};

/// Recall10@10 of the control at a fixed per-query candidate budget.
template <typename T, typename U>
double random_control_recall(const RandomPartition& rp, const VectorSet<T>& X, const VectorSet<U>& Q, const GroundTruth& gt,
                             std::size_t max_candidates) {
  std::vector<QueryResult> rs(Q.size());
  parallel_for(Q.size(), [&](std::size_t q) { rs[q] = rp.search(X, Q.row(q), 10, max_candidates, q); });
  return recall_10_at_10(result_ids(rs), gt);
}

}  // namespace garlic
