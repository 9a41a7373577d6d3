#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <vector>

#include "garlic/core.hpp"

namespace garlic {

using Rng = std::mt19937_64;

/// Uniform double in [0, 1) from the top 53 bits of one draw.
inline double uniform01(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

/// Uniform integer in [0, n) by rejection on the top bits; n > 0.
inline std::size_t uniform_index(Rng& rng, std::size_t n) {
  const std::uint64_t bound = static_cast<std::uint64_t>(n);
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % bound;
  std::uint64_t v;
  do v = rng();
  while (v >= limit);
  return static_cast<std::size_t>(v % bound);
}

/// k distinct indices from [0, n) in increasing order (selection sampling).
inline std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k, Rng& rng) {
  std::vector<std::size_t> out;
  out.reserve(k);
  for (std::size_t i = 0; i < n && out.size() < k; ++i)
    if (static_cast<double>(n - i) * uniform01(rng) < static_cast<double>(k - out.size())) out.push_back(i);
  return out;
}

struct KMeansOptions {
  std::size_t max_iterations = 25;
  double tolerance = 1e-4;
  /// K-Means++ and Lloyd run on at most max(K, subsample_factor*K) points.
  std::size_t subsample_factor = 100;
};

struct KMeansResult {
  RowMatrix centers;                 // K x d
  std::vector<std::size_t> seed_ids;  // point ids chosen by the ++ seeding
  std::size_t iterations = 0;
};

namespace detail {

template <typename T>
double squared_to_center(const T* x, const RowMatrix& centers, Eigen::Index c) {
  double s = 0.0;
  const double* m = centers.data() + c * centers.cols();
  for (Eigen::Index j = 0; j < centers.cols(); ++j) {
    const double diff = static_cast<double>(x[j]) - m[j];
    s += diff * diff;
  }
  return s;
}

template <typename T>
Eigen::Index nearest_center(const T* x, const RowMatrix& centers) {
  Eigen::Index best = 0;
  double best_v = kInf;
  for (Eigen::Index c = 0; c < centers.rows(); ++c) {
    const double v = squared_to_center(x, centers, c);
    if (v < best_v) {
      best_v = v;
      best = c;
    }
  }
  return best;
}

}  // namespace detail

/// K-Means++ seeding followed by Lloyd iterations on a uniform subsample.
/// Deterministic given the generator state.
template <typename T>
KMeansResult kmeans(PointsView<T> X, std::size_t K, Rng& rng, const KMeansOptions& opt = {}) {
  const std::size_t n = X.size();
  if (K < 1 || K > n) throw InvalidParameter("k-means needs 1 <= K <= n (K=" + std::to_string(K) + ", n=" + std::to_string(n) + ")");
  const std::size_t d = X.dim();

  const std::size_t m = std::min(n, std::max(K, opt.subsample_factor * K));
  std::vector<std::size_t> ids(n);
  std::iota(ids.begin(), ids.end(), 0);
  if (m < n) ids = sample_without_replacement(n, m, rng);

  KMeansResult res;
  res.centers.resize(static_cast<Eigen::Index>(K), static_cast<Eigen::Index>(d));
  auto set_center = [&](std::size_t c, std::size_t point) {
    for (std::size_t j = 0; j < d; ++j)
      res.centers(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(j)) = static_cast<double>(X.row_ptr(point)[j]);
  };

  std::vector<double> d2(m, kInf);
  std::vector<std::uint8_t> chosen(m, 0);
  std::size_t first = uniform_index(rng, m);
  chosen[first] = 1;
  set_center(0, ids[first]);
  res.seed_ids.push_back(ids[first]);
  for (std::size_t c = 1; c < K; ++c) {
    double total = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      d2[i] = std::min(d2[i], detail::squared_to_center(X.row_ptr(ids[i]), res.centers, static_cast<Eigen::Index>(c - 1)));
      if (!chosen[i]) total += d2[i];
    }
    std::size_t pick = m;
    if (total > 0.0) {
      const double target = uniform01(rng) * total;
      double acc = 0.0;
      for (std::size_t i = 0; i < m; ++i) {
        if (chosen[i]) continue;
        acc += d2[i];
        if (acc > target && d2[i] > 0.0) {
          pick = i;
          break;
        }
      }
      if (pick == m)  // rounding at the top end
        for (std::size_t i = m; i-- > 0;)
          if (!chosen[i] && d2[i] > 0.0) {
            pick = i;
            break;
          }
    } else {
      // Every remaining point coincides with a center.
      std::size_t r = uniform_index(rng, m - c);
      for (std::size_t i = 0; i < m; ++i)
        if (!chosen[i] && r-- == 0) {
          pick = i;
          break;
        }
    }
    chosen[pick] = 1;
    set_center(c, ids[pick]);
    res.seed_ids.push_back(ids[pick]);
  }

  std::vector<Eigen::Index> assign(m, 0);
  for (std::size_t it = 0; it < opt.max_iterations; ++it) {
    parallel_for(m, [&](std::size_t i) { assign[i] = detail::nearest_center(X.row_ptr(ids[i]), res.centers); });
    RowMatrix sums = RowMatrix::Zero(res.centers.rows(), res.centers.cols());
    std::vector<std::size_t> counts(K, 0);
    for (std::size_t i = 0; i < m; ++i) {
      const T* x = X.row_ptr(ids[i]);
      for (std::size_t j = 0; j < d; ++j) sums(assign[i], static_cast<Eigen::Index>(j)) += static_cast<double>(x[j]);
      ++counts[static_cast<std::size_t>(assign[i])];
    }
    double movement = 0.0;
    for (std::size_t c = 0; c < K; ++c) {
      if (counts[c] == 0) continue;  // empty cluster keeps its center
      const auto ci = static_cast<Eigen::Index>(c);
      const Eigen::RowVectorXd updated = sums.row(ci) / static_cast<double>(counts[c]);
      movement = std::max(movement, (updated - res.centers.row(ci)).norm());
      res.centers.row(ci) = updated;
    }
    res.iterations = it + 1;
    if (movement < opt.tolerance) break;
  }
  return res;
}

/// K-Means++ initialization of the Gaussian means from a seed.
template <typename T>
RowMatrix kmeans_pp_init(PointsView<T> X, std::size_t K, std::uint64_t seed) {
  Rng rng(seed);
  return kmeans(X, K, rng).centers;
}

struct InitReport {
  RowMatrix centers;
  std::vector<double> mean_nn_dist;
  bool data_fallback = false;
};

namespace detail {

/// Mean of the k smallest positive values; 0 if there are none.
inline double mean_of_smallest_positive(std::vector<double> v, std::size_t k) {
  std::erase_if(v, [](double x) { return !(x > 0.0); });
  if (v.empty()) return 0.0;
  k = std::min(k, v.size());
  std::partial_sort(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(k), v.end());
  return std::accumulate(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(k), 0.0) / static_cast<double>(k);
}

}  // namespace detail

/// Perturbation entry 2*sigmoid(r) - 1 with r ~ U(0, 0.01); lies in (0, 0.005).
inline double init_perturbation(Rng& rng) {
  const double r = 0.01 * uniform01(rng);
  return 2.0 / (1.0 + std::exp(-r)) - 1.0;
}

/// Builds one Gaussian per center. The factor's diagonal is the mean
/// Euclidean distance to the k nearest other centers (or data points), and the
/// strictly-lower part a small random perturbation.
template <typename T>
std::pair<GaussianSet, InitReport> cholesky_init(const RowMatrix& centers, PointsView<T> X, std::size_t k_nn,
                                                 std::uint64_t seed,
                                                 InitNeighbors source = InitNeighbors::Centers) {
  if (k_nn < 1) throw InvalidParameter("k_init_nn must be >= 1");
  const auto K = static_cast<std::size_t>(centers.rows());
  const std::size_t d = static_cast<std::size_t>(centers.cols());
  if (X.dim() != d) throw DimensionMismatch(d, X.dim());

  InitReport report;
  report.centers = centers;
  report.mean_nn_dist.resize(K);
  const bool use_data = source == InitNeighbors::Data || K < k_nn + 1;
  report.data_fallback = use_data && source == InitNeighbors::Centers;

  auto data_scale = [&](std::size_t c) {
    std::vector<double> dist(X.size());
    for (std::size_t i = 0; i < X.size(); ++i)
      dist[i] = std::sqrt(detail::squared_to_center(X.row_ptr(i), centers, static_cast<Eigen::Index>(c)));
    return detail::mean_of_smallest_positive(std::move(dist), k_nn);
  };

  parallel_for(K, [&](std::size_t c) {
    double scale = 0.0;
    if (!use_data) {
      std::vector<double> dist;
      dist.reserve(K - 1);
      for (std::size_t o = 0; o < K; ++o)
        if (o != c) dist.push_back((centers.row(static_cast<Eigen::Index>(c)) - centers.row(static_cast<Eigen::Index>(o))).norm());
      scale = detail::mean_of_smallest_positive(std::move(dist), k_nn);
    }
    if (!(scale > 0.0)) scale = data_scale(c);
    if (!(scale > 0.0)) scale = 1.0;  // every point coincides with the center
    report.mean_nn_dist[c] = scale;
  });

  Rng rng(seed ^ 0x9e3779b97f4a7c15ULL);
  GaussianSet G(d);
  for (std::size_t c = 0; c < K; ++c) {
    const Vector mu = centers.row(static_cast<Eigen::Index>(c)).transpose();
    Matrix lower = Matrix::Zero(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d));
    for (std::size_t j = 1; j < d; ++j)
      for (std::size_t k = 0; k < j; ++k)
        lower(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(k)) = init_perturbation(rng);
    G.add(GaussianParams(mu, Vector::Constant(static_cast<Eigen::Index>(d), std::log(report.mean_nn_dist[c])), lower));
  }
  return {std::move(G), std::move(report)};
}

/// Full initialization: K-Means++ means plus Cholesky init, K = min(K_init, n).
template <typename T>
std::pair<GaussianSet, InitReport> initialize_gaussians(PointsView<T> X, const HyperParams& hp) {
  const std::size_t K = std::min<std::size_t>(hp.K_init, X.size());
  const RowMatrix centers = kmeans_pp_init(X, K, hp.seed);
  return cholesky_init(centers, X, hp.k_init_nn, hp.seed, hp.init_neighbors);
}

}  // namespace garlic
