#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <vector>

#include "garlic/core.hpp"

namespace garlic {

/// Active Gaussians whose Mahalanobis distance to x is at most tau.
template <typename T>
std::vector<GaussianId> coverage_set(std::span<const T> x, const GaussianSet& G, double tau) {
  std::vector<GaussianId> out;
  for (GaussianId g = 0; g < G.size(); ++g)
    if (G.active(g) && mahalanobis(x, G[g]) <= tau) out.push_back(g);
  return out;
}

namespace detail {

/// softmax(-e) over the given Euclidean distances, shifted by the minimum.
inline std::vector<double> softmax_neg(const std::vector<double>& e) {
  const double lo = *std::min_element(e.begin(), e.end());
  std::vector<double> s(e.size());
  double z = 0.0;
  for (std::size_t i = 0; i < e.size(); ++i) z += (s[i] = std::exp(-(e[i] - lo)));
  for (auto& v : s) v /= z;
  return s;
}

inline std::size_t argmax_first(const std::vector<double>& v) {
  return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

}  // namespace detail

/// p_i = exp(-|x - mu_i|) / sum_{j in M} exp(-|x - mu_j|) + eps for i in M.
/// Returns nullopt for an uncovered point (empty M).
template <typename T>
std::optional<std::vector<double>> soft_assign(std::span<const T> x, const GaussianSet& G,
                                               const std::vector<GaussianId>& members, double eps_num) {
  if (members.empty()) return std::nullopt;
  std::vector<double> e;
  e.reserve(members.size());
  for (GaussianId g : members) {
    double s = 0.0;
    for (std::size_t j = 0; j < x.size(); ++j) {
      const double diff = static_cast<double>(x[j]) - G[g].mu[static_cast<Eigen::Index>(j)];
      s += diff * diff;
    }
    e.push_back(std::sqrt(s));
  }
  auto p = detail::softmax_neg(e);
  for (auto& v : p) v += eps_num;
  return p;
}

/// Mean over the batch of max(0, min_g delta_M(x, g) - tau).
template <typename T>
double loss_div(PointsView<T> Xb, const GaussianSet& G, double tau) {
  const RowMatrix D = mahalanobis_batch(Xb, G);
  double sum = 0.0;
  for (Eigen::Index i = 0; i < D.rows(); ++i) sum += std::max(0.0, D.row(i).minCoeff() - tau);
  return sum / static_cast<double>(Xb.size());
}

/// 1 - mean over covered points of max_i p_i(x). Uncovered points are left
/// out of the mean; 0 when nothing is covered.
template <typename T>
double loss_cov(PointsView<T> Xb, const GaussianSet& G, double tau, double eps_num) {
  const RowMatrix D = mahalanobis_batch(Xb, G);
  double sum = 0.0;
  std::size_t covered = 0;
  for (std::size_t i = 0; i < Xb.size(); ++i) {
    std::vector<GaussianId> M;
    for (GaussianId g = 0; g < G.size(); ++g)
      if (D(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(g)) <= tau) M.push_back(g);
    const auto p = soft_assign(Xb.row(i), G, M, eps_num);
    if (!p) continue;
    sum += *std::max_element(p->begin(), p->end());
    ++covered;
  }
  return covered == 0 ? 0.0 : 1.0 - sum / static_cast<double>(covered);
}

/// Hard assignment of each batch point to its argmin-Mahalanobis Gaussian.
inline std::vector<GaussianId> argmin_assignment(const RowMatrix& D) {
  std::vector<GaussianId> a(static_cast<std::size_t>(D.rows()));
  for (Eigen::Index i = 0; i < D.rows(); ++i) a[static_cast<std::size_t>(i)] = argmin_row(D.row(i));
  return a;
}

/// Batch mean and covariance (denominator n) of the points assigned to each
/// Gaussian. Entries for Gaussians with fewer than two points stay empty.
struct AnchorStats {
  std::vector<std::size_t> count;
  std::vector<Vector> mean;
  std::vector<Matrix> cov;
};

template <typename T>
AnchorStats anchor_stats(PointsView<T> Xb, const std::vector<GaussianId>& assign, std::size_t K) {
  const auto d = static_cast<Eigen::Index>(Xb.dim());
  AnchorStats s;
  s.count.assign(K, 0);
  s.mean.assign(K, Vector());
  s.cov.assign(K, Matrix());
  std::vector<Vector> sums(K, Vector::Zero(d));
  for (std::size_t i = 0; i < Xb.size(); ++i) {
    ++s.count[assign[i]];
    for (Eigen::Index j = 0; j < d; ++j) sums[assign[i]][j] += static_cast<double>(Xb.row_ptr(i)[j]);
  }
  for (std::size_t g = 0; g < K; ++g)
    if (s.count[g] >= 2) {
      s.mean[g] = sums[g] / static_cast<double>(s.count[g]);
      s.cov[g] = Matrix::Zero(d, d);
    }
  Vector diff(d);
  for (std::size_t i = 0; i < Xb.size(); ++i) {
    const GaussianId g = assign[i];
    if (s.count[g] < 2) continue;
    for (Eigen::Index j = 0; j < d; ++j) diff[j] = static_cast<double>(Xb.row_ptr(i)[j]) - s.mean[g][j];
    s.cov[g].noalias() += diff * diff.transpose();
  }
  for (std::size_t g = 0; g < K; ++g)
    if (s.count[g] >= 2) s.cov[g] /= static_cast<double>(s.count[g]);
  return s;
}

/// (1 / (d |G_active|)) sum_g |mu - mu_hat|^2 + alpha |L L^T - Sigma_hat|_F^2
/// over Gaussians with at least two assigned batch points.
template <typename T>
double loss_anchor(PointsView<T> Xb, const GaussianSet& G, double alpha_anchor) {
  const RowMatrix D = mahalanobis_batch(Xb, G);
  const auto stats = anchor_stats(Xb, argmin_assignment(D), G.size());
  double sum = 0.0;
  for (GaussianId g = 0; g < G.size(); ++g) {
    if (!G.active(g) || stats.count[g] < 2) continue;
    sum += (G[g].mu - stats.mean[g]).squaredNorm() + alpha_anchor * (covariance(G[g]) - stats.cov[g]).squaredNorm();
  }
  return sum / (static_cast<double>(G.dim()) * static_cast<double>(G.active_count()));
}

struct LossBreakdown {
  double l_div = 0.0;
  double l_cov = 0.0;
  double l_anchor = 0.0;
  double total = 0.0;
  std::size_t epoch = 0;
};

/// Gradient with respect to one Gaussian's trainable parameters.
struct GaussianGrad {
  Vector mu;
  Vector log_diag;
  Matrix lower;  // strictly lower entries only

  explicit GaussianGrad(std::size_t d = 0)
      : mu(Vector::Zero(static_cast<Eigen::Index>(d))),
        log_diag(Vector::Zero(static_cast<Eigen::Index>(d))),
        lower(Matrix::Zero(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d))) {}

  bool finite() const { return mu.allFinite() && log_diag.allFinite() && lower.allFinite(); }
};

struct LossAndGrads {
  LossBreakdown loss;
  std::vector<GaussianGrad> grads;  // one per Gaussian id; zero for inactive
  std::size_t covered = 0;          // points with non-empty coverage set
};

namespace detail {

/// Per-point quantities from the parallel pass.
struct PointTerms {
  GaussianId nearest = 0;  // argmin Mahalanobis
  double nearest_dist = 0.0;
  bool outside = false;
  Vector y;  // whitened displacement to `nearest`, only when outside
  bool covered = false;
  double max_p = 0.0;
  std::vector<std::pair<GaussianId, double>> cov_coef;  // d(max s)/d mu_j = coef * (x - mu_j)
};

/// Adds c * d(delta)/dL expressed on (log_diag, lower) given y and z = L^{-T} y.
inline void accumulate_factor_grad(GaussianGrad& g, const Whitener& w, const Vector& y, const Vector& z, double c) {
  const auto d = y.size();
  for (Eigen::Index j = 0; j < d; ++j) {
    const double zj = c * z[j];
    for (Eigen::Index k = 0; k < j; ++k) g.lower(j, k) += zj * y[k];
    g.log_diag[j] += zj * y[j] * w.factor()(j, j);
  }
}

}  // namespace detail

/// Weighted objective and its gradient for every active Gaussian. Min, argmin
/// and max use the selected branch; ties go to the lowest Gaussian id.
template <typename T>
LossAndGrads total_loss_and_grads(PointsView<T> Xb, const GaussianSet& G, const HyperParams& hp,
                                  std::size_t epoch = 0) {
  const std::size_t n = Xb.size();
  const std::size_t d = Xb.dim();
  const std::size_t K = G.size();
  if (n == 0) throw InvalidParameter("empty batch");
  if (d != G.dim()) throw DimensionMismatch(G.dim(), d);
  const auto di = static_cast<Eigen::Index>(d);

  const auto whiteners = make_whiteners(G);
  const auto active = G.active_ids();
  std::vector<detail::PointTerms> terms(n);

  const std::size_t blocks = (n + kSolveLanes - 1) / kSolveLanes;
  parallel_chunks(ChunkPlan(blocks, 256), [&](std::size_t, std::size_t b0, std::size_t b1) {
    std::vector<double> ybuf(d * kSolveLanes);
    std::vector<double> dist((b1 - b0) * kSolveLanes * K, kInf);
    double out[kSolveLanes];
    const T* rows[kSolveLanes];
    for (std::size_t b = b0; b < b1; ++b) {
      const std::size_t first = b * kSolveLanes;
      const std::size_t count = std::min(kSolveLanes, n - first);
      for (std::size_t p = 0; p < count; ++p) rows[p] = Xb.row_ptr(first + p);
      for (GaussianId g : active) {
        whiteners[g].solve_block(rows, count, ybuf.data(), out);
        for (std::size_t p = 0; p < count; ++p) dist[((b - b0) * kSolveLanes + p) * K + g] = out[p];
      }
      for (std::size_t p = 0; p < count; ++p) {
        const std::size_t i = first + p;
        const double* drow = dist.data() + ((b - b0) * kSolveLanes + p) * K;
        auto& t = terms[i];
        t.nearest_dist = kInf;
        std::vector<GaussianId> M;
        for (GaussianId g : active) {
          if (drow[g] < t.nearest_dist) {
            t.nearest_dist = drow[g];
            t.nearest = g;
          }
          if (drow[g] <= hp.tau) M.push_back(g);
        }
        const auto x = Xb.row(i);
        if (t.nearest_dist > hp.tau) {
          t.outside = true;
          t.y = whiteners[t.nearest].whiten(x);
        }
        if (M.empty()) continue;
        t.covered = true;
        std::vector<double> e(M.size());
        for (std::size_t m = 0; m < M.size(); ++m) {
          double s = 0.0;
          for (std::size_t j = 0; j < d; ++j) {
            const double diff = static_cast<double>(x[j]) - G[M[m]].mu[static_cast<Eigen::Index>(j)];
            s += diff * diff;
          }
          e[m] = std::sqrt(s);
        }
        const auto s = detail::softmax_neg(e);
        const std::size_t a = detail::argmax_first(s);
        t.max_p = s[a] + hp.eps_num;
        if (M.size() > 1)
          for (std::size_t m = 0; m < M.size(); ++m) {
            if (!(e[m] > 0.0)) continue;
            const double kron = m == a ? 1.0 : 0.0;
            t.cov_coef.emplace_back(M[m], s[a] * (kron - s[m]) / e[m]);
          }
      }
    }
  });

  LossAndGrads res;
  res.grads.reserve(K);
  for (std::size_t g = 0; g < K; ++g) res.grads.emplace_back(G.active(g) ? d : 0);
  std::vector<Vector> cov_mu(K);
  for (GaussianId g : active) cov_mu[g] = Vector::Zero(di);

  // Sequential reduction in point order.
  double div_sum = 0.0;
  double maxp_sum = 0.0;
  const double div_scale = hp.lambda_div / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& t = terms[i];
    const auto x = Xb.row(i);
    if (t.outside) {
      div_sum += t.nearest_dist - hp.tau;
      if (div_scale != 0.0) {
        const auto& w = whiteners[t.nearest];
        const Vector z = w.back_solve(t.y);
        const double c = -div_scale / t.nearest_dist;
        res.grads[t.nearest].mu += c * z;
        detail::accumulate_factor_grad(res.grads[t.nearest], w, t.y, z, c);
      }
    }
    if (t.covered) {
      maxp_sum += t.max_p;
      ++res.covered;
      for (const auto& [g, coef] : t.cov_coef)
        for (Eigen::Index j = 0; j < di; ++j) cov_mu[g][j] += coef * (static_cast<double>(x[j]) - G[g].mu[j]);
    }
  }
  res.loss.l_div = div_sum / static_cast<double>(n);
  res.loss.l_cov = res.covered == 0 ? 0.0 : 1.0 - maxp_sum / static_cast<double>(res.covered);
  if (res.covered > 0) {
    const double c = -hp.lambda_cov / static_cast<double>(res.covered);
    for (GaussianId g : active) res.grads[g].mu += c * cov_mu[g];
  }

  std::vector<GaussianId> assign(n);
  for (std::size_t i = 0; i < n; ++i) assign[i] = terms[i].nearest;
  const auto stats = anchor_stats(Xb, assign, K);
  const double norm = static_cast<double>(d) * static_cast<double>(active.size());
  double anchor_sum = 0.0;
  for (GaussianId g : active) {
    if (stats.count[g] < 2) continue;
    const Matrix& L = whiteners[g].factor();
    const Matrix diff = L * L.transpose() - stats.cov[g];
    const Vector dmu = G[g].mu - stats.mean[g];
    anchor_sum += dmu.squaredNorm() + hp.alpha_anchor * diff.squaredNorm();
    const double c = hp.lambda_anchor / norm;
    res.grads[g].mu += c * 2.0 * dmu;
    const Matrix dL = (c * 4.0 * hp.alpha_anchor) * (diff * L);
    for (Eigen::Index j = 0; j < di; ++j) {
      for (Eigen::Index k = 0; k < j; ++k) res.grads[g].lower(j, k) += dL(j, k);
      res.grads[g].log_diag[j] += dL(j, j) * L(j, j);
    }
  }
  res.loss.l_anchor = anchor_sum / norm;
  res.loss.total = hp.lambda_div * res.loss.l_div + hp.lambda_cov * res.loss.l_cov + hp.lambda_anchor * res.loss.l_anchor;
  res.loss.epoch = epoch;

  if (!std::isfinite(res.loss.total)) throw TrainingDivergence(epoch, "non-finite loss");
  for (GaussianId g : active)
    if (!res.grads[g].finite()) throw TrainingDivergence(epoch, "non-finite gradient for Gaussian " + std::to_string(g));
  return res;
}

}  // namespace garlic
