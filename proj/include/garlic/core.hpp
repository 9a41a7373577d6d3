#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "garlic/errors.hpp"
#include "garlic/hyperparams.hpp"
#include "garlic/parallel.hpp"

namespace garlic {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using GaussianId = std::size_t;
using PointId = std::uint32_t;

inline constexpr double kInf = std::numeric_limits<double>::infinity();

/// Non-owning row-major view over n points of dimension d.
template <typename T>
struct PointsView {
  const T* data = nullptr;
  std::size_t n = 0;
  std::size_t d = 0;

  PointsView() = default;
  PointsView(const T* ptr, std::size_t rows, std::size_t cols) : data(ptr), n(rows), d(cols) {}
  PointsView(const RowMatrix& m)  // NOLINT: implicit by design of the view
    requires std::is_same_v<T, double>
      : data(m.data()), n(static_cast<std::size_t>(m.rows())), d(static_cast<std::size_t>(m.cols())) {}

  std::size_t size() const { return n; }
  std::size_t dim() const { return d; }
  const T* row_ptr(std::size_t i) const { return data + i * d; }
  std::span<const T> row(std::size_t i) const { return {row_ptr(i), d}; }
};

/// Owning set of n points in R^d, stored row-major. Entries must be finite.
template <typename T>
class VectorSet {
 public:
  VectorSet() = default;

  VectorSet(std::size_t n, std::size_t d, std::vector<T> values)
      : n_(n), d_(d), values_(std::move(values)) {
    if (n_ < 1) throw InvalidParameter("vector set needs at least one point");
    if (d_ < 2) throw InvalidParameter("vector set needs dimension >= 2");
    if (values_.size() != n_ * d_) throw InvalidParameter("vector set storage size != n*d");
    for (std::size_t i = 0; i < values_.size(); ++i)
      if (!std::isfinite(static_cast<double>(values_[i])))
        throw InvalidParameter("non-finite entry in point " + std::to_string(i / d_));
  }

  static VectorSet from_matrix(const RowMatrix& m) {
    std::vector<T> v(static_cast<std::size_t>(m.size()));
    for (Eigen::Index i = 0; i < m.size(); ++i) v[static_cast<std::size_t>(i)] = static_cast<T>(m.data()[i]);
    return VectorSet(static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols()), std::move(v));
  }

  std::size_t size() const { return n_; }
  std::size_t dim() const { return d_; }
  std::span<const T> row(std::size_t i) const { return {values_.data() + i * d_, d_}; }
  const T* row_ptr(std::size_t i) const { return values_.data() + i * d_; }
  const std::vector<T>& values() const { return values_; }
  PointsView<T> view() const { return {values_.data(), n_, d_}; }

  RowMatrix to_matrix() const {
    RowMatrix m(n_, d_);
    for (std::size_t i = 0; i < values_.size(); ++i) m.data()[i] = static_cast<double>(values_[i]);
    return m;
  }

  friend bool operator==(const VectorSet&, const VectorSet&) = default;

 private:
  std::size_t n_ = 0;
  std::size_t d_ = 0;
  std::vector<T> values_;
};

template <typename T>
double squared_l2(std::span<const T> a, std::span<const T> b) {
  double s = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) {
    const double diff = static_cast<double>(a[j]) - static_cast<double>(b[j]);
    s += diff * diff;
  }
  return s;
}

template <typename T>
double l2(std::span<const T> a, std::span<const T> b) {
  return std::sqrt(squared_l2(a, b));
}

/// Trainable Gaussian: mean plus a Cholesky factor stored as log-diagonal and
/// strictly-lower part, so the materialized factor always has a positive
/// diagonal.
struct GaussianParams {
  Vector mu;
  Vector log_diag;
  Matrix lower;  // d x d, only entries (j, k) with j > k are used

  GaussianParams() = default;
  GaussianParams(Vector mean, Vector log_diagonal, Matrix strictly_lower)
      : mu(std::move(mean)), log_diag(std::move(log_diagonal)), lower(std::move(strictly_lower)) {
    const auto d = mu.size();
    if (log_diag.size() != d) throw DimensionMismatch(static_cast<std::size_t>(d), static_cast<std::size_t>(log_diag.size()));
    if (lower.rows() != d || lower.cols() != d)
      throw DimensionMismatch(static_cast<std::size_t>(d), static_cast<std::size_t>(lower.rows()));
    lower.triangularView<Eigen::Upper>().setZero();
  }

  /// Isotropic Gaussian with L = scale * I.
  static GaussianParams isotropic(const Vector& mean, double scale) {
    const auto d = mean.size();
    return {mean, Vector::Constant(d, std::log(scale)), Matrix::Zero(d, d)};
  }

  std::size_t dim() const { return static_cast<std::size_t>(mu.size()); }

  bool finite() const {
    return mu.allFinite() && log_diag.allFinite() && lower.allFinite();
  }

  /// Multiplies the factor by s > 0 (the covariance by s^2).
  void scale_factor(double s) {
    log_diag.array() += std::log(s);
    lower *= s;
  }

  friend bool operator==(const GaussianParams& a, const GaussianParams& b) {
    return a.mu == b.mu && a.log_diag == b.log_diag && a.lower == b.lower;
  }
};

/// L with L[j][j] = exp(log_diag[j]) and the strictly-lower entries copied.
inline Matrix materialize_cholesky(const GaussianParams& g) {
  if (!g.finite()) throw InvalidParameter("non-finite Gaussian parameter");
  const auto d = g.mu.size();
  Matrix L = Matrix::Zero(d, d);
  for (Eigen::Index j = 0; j < d; ++j) {
    for (Eigen::Index k = 0; k < j; ++k) L(j, k) = g.lower(j, k);
    L(j, j) = std::exp(g.log_diag(j));
  }
  return L;
}

inline Matrix covariance(const GaussianParams& g) {
  const Matrix L = materialize_cholesky(g);
  return L * L.transpose();
}

/// Ordered Gaussians with an active mask. Ids are positions and never reused.
class GaussianSet {
 public:
  GaussianSet() = default;
  explicit GaussianSet(std::size_t d) : d_(d) {}

  std::size_t dim() const { return d_; }
  std::size_t size() const { return gaussians_.size(); }
  const GaussianParams& operator[](GaussianId id) const { return gaussians_[id]; }
  GaussianParams& operator[](GaussianId id) { return gaussians_[id]; }
  bool active(GaussianId id) const { return active_[id] != 0; }

  GaussianId add(GaussianParams g) {
    if (g.dim() != d_) throw DimensionMismatch(d_, g.dim());
    gaussians_.push_back(std::move(g));
    active_.push_back(1);
    return gaussians_.size() - 1;
  }

  void deactivate(GaussianId id) { active_[id] = 0; }

  std::size_t active_count() const {
    return static_cast<std::size_t>(std::count(active_.begin(), active_.end(), 1));
  }

  std::vector<GaussianId> active_ids() const {
    std::vector<GaussianId> ids;
    for (GaussianId i = 0; i < active_.size(); ++i)
      if (active_[i]) ids.push_back(i);
    return ids;
  }

  friend bool operator==(const GaussianSet&, const GaussianSet&) = default;

 private:
  std::size_t d_ = 0;
  std::vector<GaussianParams> gaussians_;
  std::vector<std::uint8_t> active_;
};

/// Number of points pushed through the triangular solve together. Every lane
/// runs the same scalar instruction sequence, so a point's distance does not
/// depend on which other points share its block.
inline constexpr std::size_t kSolveLanes = 8;

/// A Gaussian with its factor materialized, ready for repeated distance
/// evaluation.
class Whitener {
 public:
  Whitener() = default;
  explicit Whitener(const GaussianParams& g)
      : d_(g.dim()), mu_(g.mu), L_(materialize_cholesky(g)) {}

  std::size_t dim() const { return d_; }
  const Vector& mean() const { return mu_; }
  const RowMatrix& factor() const { return L_; }

  /// Solves L y = x - mu for up to kSolveLanes points. `y` receives d x
  /// kSolveLanes values (lane-minor); `out` the norms for the first `count`.
  template <typename T>
  void solve_block(const T* const* rows, std::size_t count, double* y, double* out) const {
    constexpr std::size_t B = kSolveLanes;
    for (std::size_t j = 0; j < d_; ++j) {
      double acc[B];
      for (std::size_t p = 0; p < B; ++p)
        acc[p] = p < count ? static_cast<double>(rows[p][j]) - mu_[static_cast<Eigen::Index>(j)] : 0.0;
      const double* Lj = L_.data() + j * d_;
      for (std::size_t k = 0; k < j; ++k) {
        const double l = Lj[k];
        const double* yk = y + k * B;
        for (std::size_t p = 0; p < B; ++p) acc[p] -= l * yk[p];
      }
      const double diag = Lj[j];
      double* yj = y + j * B;
      for (std::size_t p = 0; p < B; ++p) yj[p] = acc[p] / diag;
    }
    double sq[B] = {};
    for (std::size_t j = 0; j < d_; ++j) {
      const double* yj = y + j * B;
      for (std::size_t p = 0; p < B; ++p) sq[p] += yj[p] * yj[p];
    }
    for (std::size_t p = 0; p < count; ++p) out[p] = std::sqrt(sq[p]);
  }

  /// Mahalanobis distance of a single point.
  template <typename T>
  double distance(std::span<const T> x) const {
    if (x.size() != d_) throw DimensionMismatch(d_, x.size());
    std::vector<double> y(d_ * kSolveLanes);
    const T* rows[1] = {x.data()};
    double out = 0.0;
    solve_block(rows, 1, y.data(), &out);
    return out;
  }

  /// Whitened displacement y = L^{-1}(x - mu).
  template <typename T>
  Vector whiten(std::span<const T> x) const {
    if (x.size() != d_) throw DimensionMismatch(d_, x.size());
    std::vector<double> y(d_ * kSolveLanes);
    const T* rows[1] = {x.data()};
    double out = 0.0;
    solve_block(rows, 1, y.data(), &out);
    Vector v(static_cast<Eigen::Index>(d_));
    for (std::size_t j = 0; j < d_; ++j) v[static_cast<Eigen::Index>(j)] = y[j * kSolveLanes];
    return v;
  }

  /// z = L^{-T} y by back substitution.
  Vector back_solve(const Vector& y) const {
    Vector z = y;
    for (std::size_t jj = d_; jj-- > 0;) {
      double acc = z[static_cast<Eigen::Index>(jj)];
      for (std::size_t k = jj + 1; k < d_; ++k) acc -= L_(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(jj)) * z[static_cast<Eigen::Index>(k)];
      z[static_cast<Eigen::Index>(jj)] = acc / L_(static_cast<Eigen::Index>(jj), static_cast<Eigen::Index>(jj));
    }
    return z;
  }

 private:
  std::size_t d_ = 0;
  Vector mu_;
  RowMatrix L_;
};

/// ||L^{-1}(x - mu)||_2 via forward substitution.
template <typename T>
double mahalanobis(std::span<const T> x, const GaussianParams& g) {
  if (x.size() != g.dim()) throw DimensionMismatch(g.dim(), x.size());
  return Whitener(g).distance(x);
}

inline std::vector<Whitener> make_whiteners(const GaussianSet& G) {
  std::vector<Whitener> w(G.size());
  for (GaussianId i = 0; i < G.size(); ++i)
    if (G.active(i)) w[i] = Whitener(G[i]);
  return w;
}

/// n x K matrix of Mahalanobis distances. Columns of inactive Gaussians hold
/// +inf so they never win an argmin.
template <typename T>
RowMatrix mahalanobis_batch(PointsView<T> X, const GaussianSet& G) {
  if (X.dim() != G.dim()) throw DimensionMismatch(G.dim(), X.dim());
  const std::size_t K = G.size();
  RowMatrix D = RowMatrix::Constant(static_cast<Eigen::Index>(X.size()), static_cast<Eigen::Index>(K), kInf);
  const auto whiteners = make_whiteners(G);
  const std::size_t blocks = (X.size() + kSolveLanes - 1) / kSolveLanes;
  parallel_chunks(ChunkPlan(blocks, 256), [&](std::size_t, std::size_t b0, std::size_t b1) {
    std::vector<double> y(X.dim() * kSolveLanes);
    double out[kSolveLanes];
    const T* rows[kSolveLanes];
    for (std::size_t b = b0; b < b1; ++b) {
      const std::size_t first = b * kSolveLanes;
      const std::size_t count = std::min(kSolveLanes, X.size() - first);
      for (std::size_t p = 0; p < count; ++p) rows[p] = X.row_ptr(first + p);
      for (GaussianId g = 0; g < K; ++g) {
        if (!G.active(g)) continue;
        whiteners[g].solve_block(rows, count, y.data(), out);
        for (std::size_t p = 0; p < count; ++p)
          D(static_cast<Eigen::Index>(first + p), static_cast<Eigen::Index>(g)) = out[p];
      }
    }
  });
  return D;
}

template <typename T>
RowMatrix mahalanobis_batch(const VectorSet<T>& X, const GaussianSet& G) {
  return mahalanobis_batch(X.view(), G);
}

/// Index of the smallest entry of a distance row; ties go to the lowest id.
template <typename Row>
GaussianId argmin_row(const Row& row) {
  GaussianId best = 0;
  double best_v = kInf;
  for (Eigen::Index j = 0; j < row.size(); ++j)
    if (row[j] < best_v) {
      best_v = row[j];
      best = static_cast<GaussianId>(j);
    }
  return best;
}

}  // namespace garlic
