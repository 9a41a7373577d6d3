#pragma once

// Reference implementations used only by tests. Each one computes its result
// by a different route than the library code it checks.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <set>
#include <vector>

#include "garlic/garlic.hpp"

namespace garlic::oracle {

/// Mahalanobis distance through an explicit covariance inverse.
inline double mahalanobis_explicit(const Vector& x, const GaussianParams& g) {
  const Matrix L = materialize_cholesky(g);
  const Matrix sigma = L * L.transpose();
  const Matrix inv = sigma.fullPivLu().inverse();
  const Vector diff = x - g.mu;
  return std::sqrt(std::max(0.0, diff.dot(inv * diff)));
}

/// Squared Mahalanobis distance, explicit inverse.
inline double mahalanobis_sq_explicit(const Vector& x, const GaussianParams& g) {
  const double v = mahalanobis_explicit(x, g);
  return v * v;
}

/// Distance from s to the box [lo, hi] by projected gradient descent on
/// f(y) = |y - s|^2 from the box center with a short fixed step.
inline double box_distance_iterative(const Vector& s, const Vector& lo, const Vector& hi, int iterations = 400) {
  Vector y = 0.5 * (lo + hi);
  const double step = 0.05;
  for (int it = 0; it < iterations; ++it) {
    y -= step * 2.0 * (y - s);
    for (Eigen::Index k = 0; k < y.size(); ++k) y[k] = std::min(hi[k], std::max(lo[k], y[k]));
  }
  return (y - s).norm();
}

/// Central finite difference of f along every coordinate of a flat vector.
inline std::vector<double> central_differences(const std::function<double(const std::vector<double>&)>& f,
                                               std::vector<double> theta, double h) {
  std::vector<double> out(theta.size());
  for (std::size_t i = 0; i < theta.size(); ++i) {
    const double keep = theta[i];
    theta[i] = keep + h;
    const double up = f(theta);
    theta[i] = keep - h;
    const double down = f(theta);
    theta[i] = keep;
    out[i] = (up - down) / (2.0 * h);
  }
  return out;
}

/// Full sort of all points by squared distance, ties by id.
inline std::vector<PointId> knn_sorted(const VectorSet<float>& X, std::span<const float> q, std::size_t k) {
  std::vector<std::pair<double, PointId>> all;
  for (std::size_t i = 0; i < X.size(); ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < q.size(); ++j) {
      const double t = static_cast<double>(q[j]) - static_cast<double>(X.row(i)[j]);
      s += t * t;
    }
    all.emplace_back(s, static_cast<PointId>(i));
  }
  std::sort(all.begin(), all.end());
  std::vector<PointId> ids;
  for (std::size_t r = 0; r < k && r < all.size(); ++r) ids.push_back(all[r].second);
  return ids;
}

/// Coverage set by filtering every Gaussian with the explicit-inverse distance.
inline std::vector<GaussianId> coverage_filter(const Vector& x, const GaussianSet& G, double tau) {
  std::vector<GaussianId> out;
  for (GaussianId g = 0; g < G.size(); ++g)
    if (G.active(g) && mahalanobis_explicit(x, G[g]) <= tau) out.push_back(g);
  return out;
}

/// Top-r principal directions via SVD of the centered data.
inline Matrix principal_directions(const RowMatrix& P, std::size_t r) {
  const RowMatrix centered = P.rowwise() - P.colwise().mean();
  Eigen::JacobiSVD<Matrix> svd(Matrix(centered), Eigen::ComputeThinV);
  return svd.matrixV().leftCols(static_cast<Eigen::Index>(r));
}

/// Random SPD-factored Gaussian with moderately conditioned covariance.
inline GaussianParams random_gaussian(std::mt19937_64& rng, std::size_t d, double log_scale = 0.5) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> uni(-log_scale, log_scale);
  const auto di = static_cast<Eigen::Index>(d);
  Vector mu(di), ld(di);
  Matrix lower = Matrix::Zero(di, di);
  for (Eigen::Index j = 0; j < di; ++j) {
    mu[j] = normal(rng);
    ld[j] = uni(rng);
    for (Eigen::Index k = 0; k < j; ++k) lower(j, k) = 0.3 * normal(rng);
  }
  return {mu, ld, lower};
}

inline VectorSet<float> random_points(std::mt19937_64& rng, std::size_t n, std::size_t d, double scale = 1.0) {
  std::normal_distribution<double> normal(0.0, scale);
  std::vector<float> v(n * d);
  for (auto& x : v) x = static_cast<float>(normal(rng));
  return VectorSet<float>(n, d, std::move(v));
}

inline Vector to_vector(std::span<const float> x) {
  Vector v(static_cast<Eigen::Index>(x.size()));
  for (std::size_t j = 0; j < x.size(); ++j) v[static_cast<Eigen::Index>(j)] = x[j];
  return v;
}

}  // namespace garlic::oracle
