#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "garlic/core.hpp"
#include "garlic/init.hpp"

namespace garlic {

/// Per-point Mahalanobis summary against a GaussianSet: the nearest active
/// Gaussian and every active Gaussian within tau (CSR layout, ids ascending).
struct CoverageTable {
  double tau = 0.0;
  std::vector<GaussianId> nearest;
  std::vector<double> nearest_dist;
  std::vector<std::size_t> offsets;  // size n + 1
  std::vector<GaussianId> covering;

  std::size_t size() const { return nearest.size(); }
  std::span<const GaussianId> covering_of(std::size_t i) const {
    return {covering.data() + offsets[i], offsets[i + 1] - offsets[i]};
  }
};

template <typename T>
CoverageTable compute_coverage(PointsView<T> X, const GaussianSet& G, double tau) {
  if (X.dim() != G.dim()) throw DimensionMismatch(G.dim(), X.dim());
  const std::size_t n = X.size();
  const auto whiteners = make_whiteners(G);
  const auto active = G.active_ids();
  if (active.empty()) throw InvalidParameter("no active Gaussian");

  CoverageTable t;
  t.tau = tau;
  t.nearest.resize(n);
  t.nearest_dist.resize(n);
  const std::size_t blocks = (n + kSolveLanes - 1) / kSolveLanes;
  const ChunkPlan plan(blocks, 256);
  std::vector<std::vector<std::size_t>> chunk_counts(plan.chunks);
  std::vector<std::vector<GaussianId>> chunk_ids(plan.chunks);
  parallel_chunks(plan, [&](std::size_t c, std::size_t b0, std::size_t b1) {
    std::vector<double> y(X.dim() * kSolveLanes);
    std::vector<double> dist(kSolveLanes * active.size());
    double out[kSolveLanes];
    const T* rows[kSolveLanes];
    for (std::size_t b = b0; b < b1; ++b) {
      const std::size_t first = b * kSolveLanes;
      const std::size_t count = std::min(kSolveLanes, n - first);
      for (std::size_t p = 0; p < count; ++p) rows[p] = X.row_ptr(first + p);
      for (std::size_t a = 0; a < active.size(); ++a) {
        whiteners[active[a]].solve_block(rows, count, y.data(), out);
        for (std::size_t p = 0; p < count; ++p) dist[p * active.size() + a] = out[p];
      }
      for (std::size_t p = 0; p < count; ++p) {
        double best = kInf;
        GaussianId best_g = active.front();
        std::size_t cnt = 0;
        for (std::size_t a = 0; a < active.size(); ++a) {
          const double v = dist[p * active.size() + a];
          if (v < best) {
            best = v;
            best_g = active[a];
          }
          if (v <= tau) {
            chunk_ids[c].push_back(active[a]);
            ++cnt;
          }
        }
        t.nearest[first + p] = best_g;
        t.nearest_dist[first + p] = best;
        chunk_counts[c].push_back(cnt);
      }
    }
  });
  t.offsets.reserve(n + 1);
  t.offsets.push_back(0);
  for (std::size_t c = 0; c < plan.chunks; ++c) {
    for (std::size_t cnt : chunk_counts[c]) t.offsets.push_back(t.offsets.back() + cnt);
    t.covering.insert(t.covering.end(), chunk_ids[c].begin(), chunk_ids[c].end());
  }
  return t;
}

/// Buckets from a coverage table: every point joins each Gaussian covering
/// it within tau; uncovered points join their nearest Gaussian.
inline std::vector<std::vector<PointId>> buckets_from_coverage(const CoverageTable& t, std::size_t K) {
  std::vector<std::vector<PointId>> b(K);
  for (std::size_t i = 0; i < t.size(); ++i) {
    const auto cov = t.covering_of(i);
    if (cov.empty()) {
      b[t.nearest[i]].push_back(static_cast<PointId>(i));
    } else {
      for (GaussianId g : cov) b[g].push_back(static_cast<PointId>(i));
    }
  }
  return b;
}

template <typename T>
std::vector<std::vector<PointId>> current_buckets(PointsView<T> X, const GaussianSet& G, double tau) {
  return buckets_from_coverage(compute_coverage(X, G, tau), G.size());
}

/// Points in the open shell (tau, outer) whose nearest Gaussian is g.
inline std::vector<PointId> boundary_set(GaussianId g, const CoverageTable& t, double outer) {
  std::vector<PointId> out;
  for (std::size_t i = 0; i < t.size(); ++i)
    if (t.nearest[i] == g && t.nearest_dist[i] > t.tau && t.nearest_dist[i] < outer) out.push_back(static_cast<PointId>(i));
  return out;
}

template <typename T>
std::vector<PointId> boundary_set(GaussianId g, PointsView<T> X, const GaussianSet& G, double tau, double e_clone) {
  if (!G.active(g)) throw InvalidParameter("boundary_set on inactive Gaussian");
  return boundary_set(g, compute_coverage(X, G, tau), e_clone * tau);
}

/// Inverse of the mean Euclidean distance from S[p] to its k nearest
/// neighbours in S (excluding p). k shrinks to |S|-1 for small sets.
template <typename T>
double local_density(PointsView<T> S, std::size_t p, std::size_t k) {
  if (S.size() < 2) throw InvalidParameter("local density needs at least two points");
  k = std::min(k, S.size() - 1);
  std::vector<double> dist;
  dist.reserve(S.size() - 1);
  for (std::size_t i = 0; i < S.size(); ++i)
    if (i != p) dist.push_back(l2(S.row(p), S.row(i)));
  std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(k), dist.end());
  double sum = 0.0;
  for (std::size_t i = 0; i < k; ++i) sum += dist[i];
  return sum > 0.0 ? static_cast<double>(k) / sum : kInf;
}

/// DBSCAN over a small point set. Labels are cluster ids in discovery order,
/// -1 for noise.
struct DbscanResult {
  std::vector<int> labels;
  int clusters = 0;
};

inline DbscanResult dbscan(const RowMatrix& P, double eps, std::size_t min_pts) {
  const auto n = static_cast<std::size_t>(P.rows());
  const double eps2 = eps * eps;
  std::vector<std::vector<std::size_t>> nbrs(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if ((P.row(static_cast<Eigen::Index>(i)) - P.row(static_cast<Eigen::Index>(j))).squaredNorm() <= eps2) nbrs[i].push_back(j);

  constexpr int kUnvisited = -2;
  DbscanResult r;
  r.labels.assign(n, kUnvisited);
  for (std::size_t i = 0; i < n; ++i) {
    if (r.labels[i] != kUnvisited) continue;
    if (nbrs[i].size() < min_pts) {
      r.labels[i] = -1;
      continue;
    }
    const int cid = r.clusters++;
    r.labels[i] = cid;
    std::vector<std::size_t> frontier(nbrs[i].begin(), nbrs[i].end());
    for (std::size_t f = 0; f < frontier.size(); ++f) {
      const std::size_t j = frontier[f];
      if (r.labels[j] == -1) r.labels[j] = cid;  // border point
      if (r.labels[j] != kUnvisited) continue;
      r.labels[j] = cid;
      if (nbrs[j].size() >= min_pts) frontier.insert(frontier.end(), nbrs[j].begin(), nbrs[j].end());
    }
  }
  return r;
}

/// Upper bound on the points handed to DBSCAN / K-Means during a split and
/// to the density estimate during a clone.
inline constexpr std::size_t kRefineSampleCap = 2048;

namespace detail {

template <typename T>
RowMatrix gather_rows(PointsView<T> X, const std::vector<PointId>& ids) {
  RowMatrix m(static_cast<Eigen::Index>(ids.size()), static_cast<Eigen::Index>(X.dim()));
  for (std::size_t i = 0; i < ids.size(); ++i)
    for (std::size_t j = 0; j < X.dim(); ++j)
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = static_cast<double>(X.row_ptr(ids[i])[j]);
  return m;
}

/// Means of exactly two DBSCAN clusters, noise joined to the nearer one.
inline std::optional<std::pair<Vector, Vector>> dbscan_two_means(const RowMatrix& P, Rng& rng) {
  const auto n = static_cast<std::size_t>(P.rows());
  const std::size_t min_pts = std::max<std::size_t>(5, (n + 99) / 100);
  if (n <= min_pts) return std::nullopt;

  // eps: mean distance of up to 64 sampled points to their min_pts-th neighbour.
  const auto probe = sample_without_replacement(n, std::min<std::size_t>(64, n), rng);
  double eps = 0.0;
  std::vector<double> dist(n);
  for (std::size_t i : probe) {
    for (std::size_t j = 0; j < n; ++j) dist[j] = (P.row(static_cast<Eigen::Index>(i)) - P.row(static_cast<Eigen::Index>(j))).norm();
    std::nth_element(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(min_pts), dist.end());
    eps += dist[min_pts];  // index 0 is the point itself
  }
  eps /= static_cast<double>(probe.size());
  if (!(eps > 0.0)) return std::nullopt;

  const auto db = dbscan(P, eps, min_pts);
  if (db.clusters != 2) return std::nullopt;
  Vector means[2] = {Vector::Zero(P.cols()), Vector::Zero(P.cols())};
  std::size_t counts[2] = {0, 0};
  for (std::size_t i = 0; i < n; ++i)
    if (db.labels[i] >= 0) {
      means[db.labels[i]] += P.row(static_cast<Eigen::Index>(i)).transpose();
      ++counts[db.labels[i]];
    }
  if (counts[0] < 2 || counts[1] < 2) return std::nullopt;
  const Vector core[2] = {means[0] / static_cast<double>(counts[0]), means[1] / static_cast<double>(counts[1])};
  for (std::size_t i = 0; i < n; ++i)
    if (db.labels[i] < 0) {
      const Vector x = P.row(static_cast<Eigen::Index>(i)).transpose();
      const int c = (x - core[1]).squaredNorm() < (x - core[0]).squaredNorm() ? 1 : 0;
      means[c] += x;
      ++counts[c];
    }
  return std::make_pair(Vector(means[0] / static_cast<double>(counts[0])), Vector(means[1] / static_cast<double>(counts[1])));
}

}  // namespace detail

/// How a split chose its child means.
enum class SplitMethod { Dbscan, KMeans };

struct SplitResult {
  GaussianParams first;
  GaussianParams second;
  SplitMethod method = SplitMethod::Dbscan;
};

/// Two children of g placed at two dense clusters of its bucket (DBSCAN, or
/// 2-means as fallback), each with factor alpha_split * L. nullopt when the
/// bucket is too small or degenerate.
template <typename T>
std::optional<SplitResult> split_gaussian(const GaussianParams& g, PointsView<T> bucket, const HyperParams& hp,
                                          std::uint64_t seed) {
  if (bucket.size() < 4) return std::nullopt;
  if (bucket.dim() != g.dim()) throw DimensionMismatch(g.dim(), bucket.dim());
  Rng rng(seed);
  std::vector<PointId> ids(bucket.size());
  std::iota(ids.begin(), ids.end(), PointId{0});
  if (ids.size() > kRefineSampleCap) {
    const auto pick = sample_without_replacement(ids.size(), kRefineSampleCap, rng);
    ids.assign(pick.begin(), pick.end());
  }
  const RowMatrix P = detail::gather_rows(bucket, ids);
  bool identical = true;
  for (Eigen::Index i = 1; i < P.rows() && identical; ++i) identical = P.row(i) == P.row(0);
  if (identical) return std::nullopt;

  SplitResult r;
  auto means = detail::dbscan_two_means(P, rng);
  if (!means) {
    r.method = SplitMethod::KMeans;
    KMeansOptions opt;
    opt.subsample_factor = kRefineSampleCap;
    const auto km = kmeans(PointsView<double>(P), 2, rng, opt);
    means.emplace(km.centers.row(0).transpose(), km.centers.row(1).transpose());
    if (means->first == means->second) return std::nullopt;
  }
  r.first = g;
  r.first.mu = means->first;
  r.first.scale_factor(hp.alpha_split);
  r.second = g;
  r.second.mu = means->second;
  r.second.scale_factor(hp.alpha_split);
  return r;
}

struct CloneResult {
  GaussianParams gaussian;
  PointId center = 0;
  std::size_t boundary = 0;
  std::size_t inside = 0;
};

/// New Gaussian at the densest sampled shell point of g, same factor as g.
/// nullopt when the ratio or cardinality preconditions fail.
template <typename T>
std::optional<CloneResult> clone_gaussian(GaussianId g, PointsView<T> X, const GaussianSet& G, const CoverageTable& t,
                                          std::size_t bucket_size, const HyperParams& hp, Rng& rng) {
  if (static_cast<double>(bucket_size) < hp.clone_min_frac * static_cast<double>(X.size())) return std::nullopt;
  const auto shell = boundary_set(g, t, hp.shell_outer());
  if (shell.empty()) return std::nullopt;
  std::size_t inside = 0;
  for (GaussianId c : t.covering) inside += c == g;
  if (inside > 0 && !(static_cast<double>(shell.size()) / static_cast<double>(inside) > hp.beta_clone)) return std::nullopt;

  std::size_t k = static_cast<std::size_t>(std::ceil(hp.rho_clone * static_cast<double>(shell.size())));
  k = std::clamp<std::size_t>(k, 1, std::min(shell.size(), kRefineSampleCap));
  const auto pick = sample_without_replacement(shell.size(), k, rng);
  std::vector<PointId> sample;
  sample.reserve(k);
  for (std::size_t i : pick) sample.push_back(shell[i]);

  PointId best = sample.front();
  if (sample.size() > 1) {
    const RowMatrix S = detail::gather_rows(X, sample);
    std::vector<double> dens(sample.size());
    parallel_for(sample.size(), [&](std::size_t i) { dens[i] = local_density(PointsView<double>(S), i, hp.k_density); });
    double best_d = -1.0;
    for (std::size_t i = 0; i < sample.size(); ++i)  // sample is in ascending id order
      if (dens[i] > best_d) {
        best_d = dens[i];
        best = sample[i];
      }
  }
  CloneResult r;
  r.gaussian = G[g];
  for (std::size_t j = 0; j < X.dim(); ++j) r.gaussian.mu[static_cast<Eigen::Index>(j)] = static_cast<double>(X.row_ptr(best)[j]);
  r.center = best;
  r.boundary = shell.size();
  r.inside = inside;
  return r;
}

struct PruneResult {
  std::vector<GaussianId> removed;
  std::vector<std::pair<PointId, GaussianId>> reassigned;
  bool refused = false;  // pruning would have left no active Gaussian
};

/// Deactivates Gaussians whose bucket holds fewer than min_card points and
/// moves their members to the nearest surviving Gaussian.
template <typename T>
PruneResult prune(GaussianSet& G, const std::vector<std::vector<PointId>>& buckets, std::size_t min_card,
                  PointsView<T> X) {
  PruneResult r;
  for (GaussianId g : G.active_ids())
    if (buckets[g].size() < min_card) r.removed.push_back(g);
  if (r.removed.size() == G.active_count()) {
    r.removed.clear();
    r.refused = true;
    return r;
  }
  for (GaussianId g : r.removed) G.deactivate(g);
  std::vector<PointId> orphans;
  for (GaussianId g : r.removed) orphans.insert(orphans.end(), buckets[g].begin(), buckets[g].end());
  std::sort(orphans.begin(), orphans.end());
  orphans.erase(std::unique(orphans.begin(), orphans.end()), orphans.end());
  const auto whiteners = make_whiteners(G);
  for (PointId p : orphans) {
    GaussianId best = 0;
    double best_v = kInf;
    for (GaussianId g : G.active_ids()) {
      const double v = whiteners[g].distance(X.row(p));
      if (v < best_v) {
        best_v = v;
        best = g;
      }
    }
    r.reassigned.emplace_back(p, best);
  }
  return r;
}

enum class RefinementKind { Split, Clone, Prune };

inline std::string_view to_string(RefinementKind k) {
  switch (k) {
    case RefinementKind::Split: return "split";
    case RefinementKind::Clone: return "clone";
    case RefinementKind::Prune: return "prune";
  }
  return "?";
}

struct RefinementEvent {
  RefinementKind kind = RefinementKind::Split;
  GaussianId target = 0;
  std::vector<GaussianId> created;
  std::size_t epoch = 0;
  std::size_t cardinality = 0;
  double ratio = 0.0;  // shell/inside for clones, 0 otherwise
};

/// Split every over-full Gaussian, then clone from the shells of the others.
/// All decisions use the set as it was on entry.
template <typename T>
std::vector<RefinementEvent> split_and_clone(GaussianSet& G, PointsView<T> X, const HyperParams& hp, std::size_t epoch) {
  const auto table = compute_coverage(X, G, hp.tau);
  const auto buckets = buckets_from_coverage(table, G.size());
  const auto candidates = G.active_ids();
  const double split_threshold = hp.gamma_split * static_cast<double>(X.size());
  std::vector<RefinementEvent> events;
  std::vector<std::uint8_t> was_split(G.size(), 0);

  for (GaussianId g : candidates) {
    if (!(static_cast<double>(buckets[g].size()) > split_threshold)) continue;
    const RowMatrix members = detail::gather_rows(X, buckets[g]);
    const std::uint64_t seed = hp.seed ^ (0x5851f42d4c957f2dULL * (epoch + 1)) ^ (0x14057b7ef767814fULL * (g + 1));
    auto split = split_gaussian(G[g], PointsView<double>(members), hp, seed);
    if (!split) continue;
    RefinementEvent e{RefinementKind::Split, g, {}, epoch, buckets[g].size(), 0.0};
    G.deactivate(g);
    e.created.push_back(G.add(std::move(split->first)));
    e.created.push_back(G.add(std::move(split->second)));
    was_split[g] = 1;
    events.push_back(std::move(e));
  }

  Rng rng(hp.seed ^ (0x2545f4914f6cdd1dULL * (epoch + 1)));
  for (GaussianId g : candidates) {
    if (was_split[g]) continue;
    auto clone = clone_gaussian(g, X, G, table, buckets[g].size(), hp, rng);
    if (!clone) continue;
    RefinementEvent e{RefinementKind::Clone, g, {}, epoch, buckets[g].size(),
                      clone->inside == 0 ? kInf : static_cast<double>(clone->boundary) / static_cast<double>(clone->inside)};
    e.created.push_back(G.add(std::move(clone->gaussian)));
    events.push_back(std::move(e));
  }
  return events;
}

template <typename T>
std::vector<RefinementEvent> prune_step(GaussianSet& G, PointsView<T> X, const HyperParams& hp, std::size_t epoch) {
  const auto buckets = current_buckets(X, G, hp.tau);
  const auto r = prune(G, buckets, hp.prune_min_card, X);
  std::vector<RefinementEvent> events;
  for (GaussianId g : r.removed) events.push_back({RefinementKind::Prune, g, {}, epoch, buckets[g].size(), 0.0});
  return events;
}

/// Active count implied by the event log: K' + splits + clones - prunes
/// (a split retires its parent and adds two children).
inline std::size_t expected_active_count(std::size_t initial, const std::vector<RefinementEvent>& log) {
  std::ptrdiff_t k = static_cast<std::ptrdiff_t>(initial);
  for (const auto& e : log) k += e.kind == RefinementKind::Prune ? -1 : 1;
  return static_cast<std::size_t>(k);
}

}  // namespace garlic
