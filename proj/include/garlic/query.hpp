#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <unordered_set>
#include <vector>

#include "garlic/index.hpp"

namespace garlic {

enum class BucketMode : std::uint32_t { Argmin = 0, Threshold = 1, TopK = 2 };

inline std::string_view to_string(BucketMode m) {
  switch (m) {
    case BucketMode::Argmin: return "argmin";
    case BucketMode::Threshold: return "threshold";
    case BucketMode::TopK: return "topk";
  }
  return "?";
}

struct QueryBudget {
  BucketMode mode = BucketMode::Argmin;
  double tau = 3.0;       // threshold mode
  std::size_t topk = 1;   // topk mode
  double probe_ratio = 0.3;
  std::optional<std::size_t> max_candidates;

  static QueryBudget argmin(double probe_ratio) { return {BucketMode::Argmin, 3.0, 1, probe_ratio, {}}; }
  static QueryBudget threshold(double tau, double probe_ratio) { return {BucketMode::Threshold, tau, 1, probe_ratio, {}}; }
  static QueryBudget top(std::size_t k, double probe_ratio) { return {BucketMode::TopK, 3.0, k, probe_ratio, {}}; }

  void validate() const {
    if (!(probe_ratio > 0.0 && probe_ratio <= 1.0)) throw InvalidParameter("probe_ratio must be in (0, 1]");
    if (mode == BucketMode::Threshold && !(tau > 0.0)) throw InvalidParameter("threshold tau must be > 0");
    if (mode == BucketMode::TopK && topk < 1) throw InvalidParameter("topk must be >= 1");
    if (max_candidates && *max_candidates < 1) throw InvalidParameter("max_candidates must be >= 1");
  }
};

/// Text form used by the CLI and CSV: `argmin@R`, `threshold:T@R`,
/// `topk:K@R`, optionally followed by `#C` for a candidate cap.
inline std::string to_string(const QueryBudget& b) {
  std::string head(to_string(b.mode));
  if (b.mode == BucketMode::Threshold) head += ":" + format_real(b.tau);
  else if (b.mode == BucketMode::TopK) head += ":" + std::to_string(b.topk);
  head += "@" + format_real(b.probe_ratio);
  if (b.max_candidates) head += "#" + std::to_string(*b.max_candidates);
  return head;
}

namespace detail {
inline double parse_real(std::string_view s, const std::string& ctx) {
  double v = 0.0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) throw InvalidParameter("bad number '" + std::string(s) + "' in " + ctx);
  return v;
}
inline std::uint64_t parse_count(std::string_view s, const std::string& ctx) {
  std::uint64_t v = 0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) throw InvalidParameter("bad count '" + std::string(s) + "' in " + ctx);
  return v;
}
}  // namespace detail

inline QueryBudget parse_budget(std::string_view text, double default_tau = 3.0) {
  const std::string ctx = "budget '" + std::string(text) + "'";
  QueryBudget b;
  b.tau = default_tau;
  std::string_view rest = text;
  if (const auto hash = rest.find('#'); hash != std::string_view::npos) {
    b.max_candidates = detail::parse_count(rest.substr(hash + 1), ctx);
    rest = rest.substr(0, hash);
  }
  if (const auto at = rest.find('@'); at != std::string_view::npos) {
    b.probe_ratio = detail::parse_real(rest.substr(at + 1), ctx);
    rest = rest.substr(0, at);
  }
  std::string_view arg;
  if (const auto colon = rest.find(':'); colon != std::string_view::npos) {
    arg = rest.substr(colon + 1);
    rest = rest.substr(0, colon);
  }
  if (rest == "argmin") {
    b.mode = BucketMode::Argmin;
    if (!arg.empty()) throw InvalidParameter("argmin takes no argument in " + ctx);
  } else if (rest == "threshold") {
    b.mode = BucketMode::Threshold;
    if (!arg.empty()) b.tau = detail::parse_real(arg, ctx);
  } else if (rest == "topk") {
    b.mode = BucketMode::TopK;
    if (arg.empty()) throw InvalidParameter("topk needs a count in " + ctx);
    b.topk = detail::parse_count(arg, ctx);
  } else {
    throw InvalidParameter("unknown bucket mode in " + ctx);
  }
  b.validate();
  return b;
}

inline std::vector<QueryBudget> parse_budget_list(std::string_view text, double default_tau = 3.0) {
  std::vector<QueryBudget> out;
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto comma = text.find(',', start);
    const auto piece = text.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start);
    if (piece.empty()) throw InvalidParameter("empty entry in budget list");
    out.push_back(parse_budget(piece, default_tau));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

/// Distance from s to the closed box [lo, hi]: the norm of s minus its
/// coordinatewise projection onto the box.
inline double bin_distance(const Vector& s, const Vector& lo, const Vector& hi) {
  double acc = 0.0;
  for (Eigen::Index k = 0; k < s.size(); ++k) {
    const double c = std::clamp(s[k], lo[k], hi[k]);
    acc += (s[k] - c) * (s[k] - c);
  }
  return std::sqrt(acc);
}

struct RankedBin {
  std::size_t bin = 0;  // position in Bucket::bins
  double distance = 0.0;
};

struct BinRanking {
  std::vector<RankedBin> bins;
  bool scan = false;  // degenerate bucket: search every member
};

/// Bins of `b` by ascending box distance from spherical coordinates `s`;
/// ties keep ascending code order.
inline BinRanking ranked_bins(const Vector& s, const Bucket& b) {
  BinRanking r;
  if (b.degenerate) {
    r.scan = true;
    return r;
  }
  r.bins.reserve(b.bins.size());
  Vector lo, hi;
  for (std::size_t i = 0; i < b.bins.size(); ++i) {
    b.grid.box(b.bins[i].code, lo, hi);
    r.bins.push_back({i, bin_distance(s, lo, hi)});
  }
  std::stable_sort(r.bins.begin(), r.bins.end(),
                   [](const RankedBin& a, const RankedBin& c) { return a.distance < c.distance; });
  return r;
}

struct Neighbor {
  PointId id = 0;
  double distance = 0.0;
  friend bool operator==(const Neighbor&, const Neighbor&) = default;
};

struct QueryResult {
  std::vector<Neighbor> neighbors;  // ascending distance, ties by id
  std::vector<PointId> candidates;  // gathered order, deduplicated
  std::size_t candidates_examined = 0;
  std::size_t bins_probed = 0;
  std::size_t buckets_probed = 0;
  std::size_t scanned_buckets = 0;  // degenerate buckets searched linearly
};

/// Squared Euclidean distance in the original space; shared by search and
/// the brute-force ground truth so both rank identically.
template <typename A, typename B>
double squared_distance(std::span<const A> a, std::span<const B> b) {
  double acc = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) {
    const double t = static_cast<double>(a[j]) - static_cast<double>(b[j]);
    acc += t * t;
  }
  return acc;
}

/// Read-only query front end over an Index. Holds the materialized Gaussian
/// factors; safe to share between threads.
class Searcher {
 public:
  explicit Searcher(const Index& idx) : idx_(&idx) {
    if (idx.buckets.empty() || idx.size() == 0) throw InvalidParameter("empty index");
    whiteners_.reserve(idx.buckets.size());
    for (const auto& b : idx.buckets) whiteners_.emplace_back(idx.gaussians[b.gaussian_id]);
  }

  const Index& index() const { return *idx_; }

  /// Mahalanobis distance from a normalized query to every bucket's Gaussian.
  template <typename T>
  std::vector<double> bucket_distances(std::span<const T> qn) const {
    std::vector<double> out(whiteners_.size());
    for (std::size_t i = 0; i < whiteners_.size(); ++i) out[i] = whiteners_[i].distance(qn);
    return out;
  }

  /// Bucket positions to visit, in visiting order.
  template <typename T>
  std::vector<std::size_t> select_buckets(std::span<const T> q, const QueryBudget& budget) const {
    const auto qn = idx_->normalizer.apply_f32(q);
    return select_from(bucket_distances(std::span<const float>(qn)), budget);
  }

  static std::vector<std::size_t> select_from(const std::vector<double>& dist, const QueryBudget& budget) {
    std::vector<std::size_t> order(dist.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return dist[a] < dist[b]; });
    switch (budget.mode) {
      case BucketMode::Argmin: order.resize(1); break;
      case BucketMode::Threshold: {
        std::size_t keep = 0;
        while (keep < order.size() && dist[order[keep]] <= budget.tau) ++keep;
        order.resize(std::max<std::size_t>(keep, 1));
        break;
      }
      case BucketMode::TopK: order.resize(std::min(order.size(), budget.topk)); break;
    }
    return order;
  }

  /// Gathers candidates without ranking them.
  template <typename T>
  QueryResult gather(std::span<const T> q, const QueryBudget& budget) const {
    budget.validate();
    if (q.size() != idx_->dim()) throw DimensionMismatch(idx_->dim(), q.size());
    const auto qn = idx_->normalizer.apply_f32(q);
    const std::span<const float> qs(qn);
    const auto selected = select_from(bucket_distances(qs), budget);
    const std::size_t cap = budget.max_candidates.value_or(std::numeric_limits<std::size_t>::max());

    QueryResult res;
    std::unordered_set<PointId> seen;
    const bool dedupe = selected.size() > 1;
    auto take = [&](PointId p) {
      if (res.candidates.size() >= cap) return false;
      if (!dedupe || seen.insert(p).second) res.candidates.push_back(p);
      return true;
    };

    for (std::size_t pos : selected) {
      if (res.candidates.size() >= cap) break;
      const Bucket& b = idx_->buckets[pos];
      ++res.buckets_probed;
      if (b.degenerate) {
        ++res.scanned_buckets;
        for (PointId p : b.members)
          if (!take(p)) break;
        continue;
      }
      const auto ranking = ranked_bins(b.spherical(qs), b);
      const auto probes = static_cast<std::size_t>(std::ceil(budget.probe_ratio * static_cast<double>(b.bins.size())));
      const std::size_t limit = std::clamp<std::size_t>(probes, 1, b.bins.size());
      for (std::size_t i = 0; i < limit && res.candidates.size() < cap; ++i) {
        ++res.bins_probed;
        for (PointId p : b.bin_members(b.bins[ranking.bins[i].bin]))
          if (!take(p)) break;
      }
    }
    res.candidates_examined = res.candidates.size();
    return res;
  }

  /// k nearest neighbors of raw query q among the gathered candidates.
  template <typename T>
  QueryResult search(std::span<const T> q, std::size_t k, const QueryBudget& budget) const {
    if (k < 1) throw InvalidParameter("k must be >= 1");
    QueryResult res = gather(q, budget);
    res.neighbors = rerank(q, res.candidates, k);
    return res;
  }

  template <typename T>
  std::vector<Neighbor> rerank(std::span<const T> q, const std::vector<PointId>& ids, std::size_t k) const {
    std::vector<std::pair<double, PointId>> scored;
    scored.reserve(ids.size());
    for (PointId p : ids) scored.emplace_back(squared_distance(q, idx_->data.row(p)), p);
    const std::size_t kk = std::min(k, scored.size());
    std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(kk), scored.end());
    std::vector<Neighbor> out(kk);
    for (std::size_t i = 0; i < kk; ++i) out[i] = {scored[i].second, std::sqrt(scored[i].first)};
    return out;
  }

  /// Majority label over the gathered candidates, ties to the smallest
  /// label. An empty candidate set falls back to the whole argmin bucket.
  template <typename T>
  std::int32_t classify(std::span<const T> q, std::span<const std::int32_t> labels, const QueryBudget& budget) const {
    if (labels.size() != idx_->size()) throw DimensionMismatch(idx_->size(), labels.size());
    auto res = gather(q, budget);
    if (res.candidates.empty()) {
      const auto qn = idx_->normalizer.apply_f32(q);
      const auto best = select_from(bucket_distances(std::span<const float>(qn)), QueryBudget::argmin(1.0));
      res.candidates = idx_->buckets[best.front()].members;
    }
    return majority_label(res.candidates, labels);
  }

  static std::int32_t majority_label(const std::vector<PointId>& ids, std::span<const std::int32_t> labels) {
    std::map<std::int32_t, std::size_t> votes;
    for (PointId p : ids) ++votes[labels[p]];
    std::int32_t best = 0;
    std::size_t best_count = 0;
    for (const auto& [label, count] : votes)
      if (count > best_count) {
        best = label;
        best_count = count;
      }
    return best;
  }

 private:
  const Index* idx_;
  std::vector<Whitener> whiteners_;
};

template <typename T>
std::vector<std::size_t> select_buckets(std::span<const T> q, const Index& idx, const QueryBudget& budget) {
  return Searcher(idx).select_buckets(q, budget);
}

template <typename T>
QueryResult search(std::span<const T> q, const Index& idx, std::size_t k, const QueryBudget& budget) {
  return Searcher(idx).search(q, k, budget);
}

template <typename T>
std::int32_t classify(std::span<const T> q, const Index& idx, std::span<const std::int32_t> labels, const QueryBudget& budget) {
  return Searcher(idx).classify(q, labels, budget);
}

}  // namespace garlic
