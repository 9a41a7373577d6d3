#pragma once

#include <Eigen/Eigenvalues>
#include <boost/crc.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <numeric>
#include <vector>

#include "garlic/core.hpp"
#include "garlic/normalize.hpp"
#include "garlic/refinement.hpp"

namespace garlic {

inline std::uint32_t crc32_of(const void* data, std::size_t bytes) {
  boost::crc_32_type crc;
  crc.process_bytes(data, bytes);
  return crc.checksum();
}

// ---------------------------------------------------------------------------
// Local PCA

struct PcaResult {
  Vector centroid;
  Matrix basis;        // d x r, orthonormal columns
  RowMatrix projected;  // n x r
  Vector eigenvalues;   // top r, descending
  bool degenerate = false;
};

/// Top-r principal directions of the centered points. Columns are sorted by
/// descending eigenvalue (ties by index) and signed so that the entry of
/// largest magnitude is positive. Rank-deficient or tiny inputs are flagged
/// degenerate; their basis is still orthonormal.
inline PcaResult bucket_pca(const RowMatrix& points, std::size_t r) {
  const auto n = points.rows();
  const auto d = points.cols();
  if (n < 1) throw InvalidParameter("PCA needs at least one point");
  if (r < 1 || static_cast<Eigen::Index>(r) > d) throw InvalidParameter("PCA dimension must be in [1, d]");
  const auto ri = static_cast<Eigen::Index>(r);

  PcaResult res;
  res.centroid = points.colwise().mean().transpose();
  const RowMatrix centered = points.rowwise() - res.centroid.transpose();
  const Matrix cov = (centered.transpose() * centered) / static_cast<double>(n);
  Eigen::SelfAdjointEigenSolver<Matrix> es(cov);
  if (es.info() != Eigen::Success) throw Error("eigen decomposition failed");

  std::vector<Eigen::Index> order(static_cast<std::size_t>(d));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  const Vector& ev = es.eigenvalues();
  std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) { return ev[a] > ev[b]; });

  res.basis.resize(d, ri);
  res.eigenvalues.resize(ri);
  for (Eigen::Index c = 0; c < ri; ++c) {
    Vector col = es.eigenvectors().col(order[static_cast<std::size_t>(c)]);
    Eigen::Index arg = 0;
    for (Eigen::Index j = 1; j < d; ++j)
      if (std::abs(col[j]) > std::abs(col[arg])) arg = j;
    if (col[arg] < 0) col = -col;
    res.basis.col(c) = col;
    res.eigenvalues[c] = std::max(0.0, ev[order[static_cast<std::size_t>(c)]]);
  }
  const double top = res.eigenvalues[0];
  res.degenerate = n <= ri || !(top > 0.0) || res.eigenvalues[ri - 1] <= 1e-12 * top;
  res.projected = centered * res.basis;
  if (n == 1) res.projected.setZero();
  return res;
}

// ---------------------------------------------------------------------------
// Hyperspherical coordinates

/// (radius, phi_1..phi_{r-1}). phi_k = atan2(|v_{k+1..r}|, v_k) in [0, pi]
/// for k < r-1; the last angle is atan2(v_r, v_{r-1}) in (-pi, pi].
inline Vector cart2sph(const Vector& v) {
  const auto r = v.size();
  if (r < 2) throw InvalidParameter("cart2sph needs r >= 2");
  Vector s = Vector::Zero(r);
  const double radius = v.norm();
  if (!(radius > 0.0)) return s;
  s[0] = radius;
  for (Eigen::Index k = 0; k + 2 < r; ++k) s[k + 1] = std::atan2(v.tail(r - k - 1).norm(), v[k]);
  double last = std::atan2(v[r - 1], v[r - 2]);
  if (last <= -std::numbers::pi) last = std::numbers::pi;
  s[r - 1] = last + 0.0;  // drop a negative zero
  return s;
}

inline Vector sph2cart(const Vector& s) {
  const auto r = s.size();
  if (r < 2) throw InvalidParameter("sph2cart needs r >= 2");
  Vector v(r);
  double sin_prod = s[0];
  for (Eigen::Index k = 0; k + 1 < r; ++k) {
    v[k] = sin_prod * std::cos(s[k + 1]);
    if (k + 2 < r) sin_prod *= std::sin(s[k + 1]);
  }
  v[r - 1] = sin_prod * std::sin(s[r - 1]);
  return v;
}

// ---------------------------------------------------------------------------
// Radial x angular grid

/// Uniform grid over [r_min, r_max] x prod_k [theta_min_k, theta_max_k].
struct GridSpec {
  std::size_t n_radial = 1;
  std::size_t n_angular = 1;
  std::vector<double> radial_edges;                    // n_radial + 1
  std::vector<std::pair<double, double>> angle_ranges;  // r - 1

  std::size_t coords() const { return angle_ranges.size() + 1; }

  std::size_t cells() const {
    std::size_t c = n_radial;
    for (std::size_t k = 0; k < angle_ranges.size(); ++k) c *= n_angular;
    return c;
  }

  /// Edge j of n uniform divisions of [lo, hi]; the last edge is hi itself.
  static double edge(double lo, double hi, std::size_t j, std::size_t n) {
    return j == n ? hi : lo + (hi - lo) * static_cast<double>(j) / static_cast<double>(n);
  }

  /// Division holding `value`: the last j with edge(j) <= value, clamped to
  /// [0, n-1]. Binning and bin boxes share edge(), so a point always lies in
  /// the box of its own bin.
  static std::size_t bin_index(double value, double lo, double hi, std::size_t n) {
    std::size_t j = 0;
    while (j + 1 < n && edge(lo, hi, j + 1, n) <= value) ++j;
    return j;
  }

  /// Linear bin code; radial index is the most significant digit, so code
  /// order equals lexicographic order of bin coordinates.
  std::uint64_t code_of(const Vector& s) const {
    std::uint64_t code = bin_index(s[0], radial_edges.front(), radial_edges.back(), n_radial);
    for (std::size_t k = 0; k < angle_ranges.size(); ++k)
      code = code * n_angular +
             bin_index(s[static_cast<Eigen::Index>(k + 1)], angle_ranges[k].first, angle_ranges[k].second, n_angular);
    return code;
  }

  /// Closed box [lo, hi] of a bin in spherical-coordinate space.
  void box(std::uint64_t code, Vector& lo, Vector& hi) const {
    const auto r = static_cast<Eigen::Index>(coords());
    lo.resize(r);
    hi.resize(r);
    for (std::size_t k = angle_ranges.size(); k-- > 0;) {
      const std::size_t j = code % n_angular;
      code /= n_angular;
      const auto [a, b] = angle_ranges[k];
      lo[static_cast<Eigen::Index>(k + 1)] = edge(a, b, j, n_angular);
      hi[static_cast<Eigen::Index>(k + 1)] = edge(a, b, j + 1, n_angular);
    }
    lo[0] = radial_edges[code];
    hi[0] = radial_edges[code + 1];
  }
};

struct GridResult {
  GridSpec spec;
  std::vector<std::uint64_t> codes;  // per input point
};

/// Bins spherical coordinates (rows of `sph`) on a grid spanning their own
/// range. `r_min_zero` pins the inner radius at 0.
inline GridResult build_grid(const RowMatrix& sph, std::size_t n_radial, std::size_t n_angular, bool r_min_zero = false) {
  if (sph.rows() < 1) throw InvalidParameter("grid needs at least one point");
  if (n_radial < 1 || n_angular < 1) throw InvalidParameter("grid needs n_radial, n_angular >= 1");
  GridResult g;
  g.spec.n_radial = n_radial;
  g.spec.n_angular = n_angular;
  const double r_lo = r_min_zero ? 0.0 : sph.col(0).minCoeff();
  const double r_hi = sph.col(0).maxCoeff();
  g.spec.radial_edges.resize(n_radial + 1);
  for (std::size_t i = 0; i <= n_radial; ++i) g.spec.radial_edges[i] = GridSpec::edge(r_lo, r_hi, i, n_radial);
  for (Eigen::Index k = 1; k < sph.cols(); ++k) g.spec.angle_ranges.emplace_back(sph.col(k).minCoeff(), sph.col(k).maxCoeff());
  g.codes.resize(static_cast<std::size_t>(sph.rows()));
  for (Eigen::Index i = 0; i < sph.rows(); ++i) g.codes[static_cast<std::size_t>(i)] = g.spec.code_of(sph.row(i).transpose());
  return g;
}

// ---------------------------------------------------------------------------
// Buckets and the index

/// A non-empty bin: `length` member ids starting at `offset` in the bucket's
/// member pool.
struct Bin {
  std::uint64_t code = 0;
  std::uint32_t offset = 0;
  std::uint32_t length = 0;
  friend bool operator==(const Bin&, const Bin&) = default;
};

struct Bucket {
  GaussianId gaussian_id = 0;
  std::vector<PointId> members;  // grouped by bin, ascending id within a bin
  Vector centroid;
  Matrix basis;  // d x r
  GridSpec grid;
  std::vector<Bin> bins;  // ascending code
  bool degenerate = false;

  std::span<const PointId> bin_members(const Bin& b) const { return {members.data() + b.offset, b.length}; }

  /// Spherical coordinates of a (normalized) vector in this bucket's frame.
  template <typename T>
  Vector spherical(std::span<const T> x) const {
    Vector v = Vector::Zero(basis.cols());
    for (Eigen::Index j = 0; j < centroid.size(); ++j) {
      const double c = static_cast<double>(x[static_cast<std::size_t>(j)]) - centroid[j];
      for (Eigen::Index k = 0; k < v.size(); ++k) v[k] += basis(j, k) * c;
    }
    return cart2sph(v);
  }

  friend bool operator==(const Bucket& a, const Bucket& b) {
    return a.gaussian_id == b.gaussian_id && a.members == b.members && a.centroid == b.centroid && a.basis == b.basis &&
           a.grid.n_radial == b.grid.n_radial && a.grid.n_angular == b.grid.n_angular &&
           a.grid.radial_edges == b.grid.radial_edges && a.grid.angle_ranges == b.grid.angle_ranges && a.bins == b.bins &&
           a.degenerate == b.degenerate;
  }
};

struct Fingerprint {
  std::uint64_t n = 0;
  std::uint64_t d = 0;
  std::uint32_t checksum = 0;  // CRC32 of the raw little-endian float payload
  friend bool operator==(const Fingerprint&, const Fingerprint&) = default;
};

struct Index {
  HyperParams hp;
  Normalizer normalizer;
  VectorSet<float> data;  // original vectors; re-ranking uses these
  GaussianSet gaussians;
  std::vector<Bucket> buckets;  // one per active Gaussian, ascending id
  Fingerprint fingerprint;

  std::size_t size() const { return data.size(); }
  std::size_t dim() const { return data.dim(); }
};

/// Quantizes the members of one bucket. `Xn` holds normalized vectors.
template <typename T>
Bucket quantize_bucket(GaussianId g, const std::vector<PointId>& members, PointsView<T> Xn, const HyperParams& hp) {
  Bucket b;
  b.gaussian_id = g;
  const RowMatrix P = detail::gather_rows(Xn, members);
  const std::size_t r = std::min<std::size_t>(hp.r_pca, Xn.dim());
  const auto pca = bucket_pca(P, r);
  b.centroid = pca.centroid;
  b.basis = pca.basis;
  b.degenerate = pca.degenerate;

  RowMatrix sph(P.rows(), static_cast<Eigen::Index>(r));
  for (std::size_t i = 0; i < members.size(); ++i)
    sph.row(static_cast<Eigen::Index>(i)) = b.spherical(Xn.row(members[i])).transpose();
  auto grid = build_grid(sph, hp.n_radial, hp.n_angular, hp.r_min_zero);
  b.grid = std::move(grid.spec);

  std::vector<std::size_t> order(members.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t c) { return grid.codes[a] < grid.codes[c]; });
  b.members.reserve(members.size());
  for (std::size_t i : order) {
    if (b.bins.empty() || b.bins.back().code != grid.codes[i])
      b.bins.push_back({grid.codes[i], static_cast<std::uint32_t>(b.members.size()), 0});
    b.members.push_back(members[i]);
    ++b.bins.back().length;
  }
  return b;
}

/// Freezes buckets for a trained Gaussian set and quantizes each of them.
/// `G` lives in the normalized space described by `normalizer`.
inline Index build_index(VectorSet<float> X, const Normalizer& normalizer, GaussianSet G, const HyperParams& hp) {
  hp.validate();
  if (X.dim() != G.dim()) throw DimensionMismatch(G.dim(), X.dim());
  if (G.active_count() == 0) throw InvalidParameter("no active Gaussian");
  const VectorSet<float> Xn = normalizer.transform(X);
  const auto members = current_buckets(Xn.view(), G, hp.tau);
  const auto active = G.active_ids();

  Index idx;
  idx.hp = hp;
  idx.normalizer = normalizer;
  idx.buckets.resize(active.size());
  parallel_for(active.size(), [&](std::size_t i) { idx.buckets[i] = quantize_bucket(active[i], members[active[i]], Xn.view(), hp); }, active.size());
  idx.fingerprint = {X.size(), X.dim(), crc32_of(X.values().data(), X.values().size() * sizeof(float))};
  idx.data = std::move(X);
  idx.gaussians = std::move(G);
  return idx;
}

/// Every member sits in exactly one bin, bins are sorted, and the union of
/// bucket members covers every point. Returns an empty string when valid.
inline std::string check_index(const Index& idx) {
  std::vector<std::uint8_t> seen(idx.size(), 0);
  if (idx.buckets.size() != idx.gaussians.active_count()) return "bucket count != active Gaussian count";
  const auto d = static_cast<Eigen::Index>(idx.dim());
  for (std::size_t i = 0; i < idx.buckets.size(); ++i) {
    const auto& b = idx.buckets[i];
    if (b.gaussian_id >= idx.gaussians.size() || !idx.gaussians.active(b.gaussian_id)) return "bucket for inactive Gaussian";
    if (i > 0 && !(idx.buckets[i - 1].gaussian_id < b.gaussian_id)) return "buckets not in ascending id order";
    if (b.members.empty()) return "empty bucket";
    if (b.centroid.size() != d || b.basis.rows() != d || b.basis.cols() < 2 || b.basis.cols() > d) return "bucket frame shape";
    if (!b.centroid.allFinite() || !b.basis.allFinite()) return "non-finite bucket frame";
    if (b.grid.radial_edges.size() != b.grid.n_radial + 1 ||
        b.grid.angle_ranges.size() != static_cast<std::size_t>(b.basis.cols()) - 1)
      return "grid shape";
    double cells = static_cast<double>(b.grid.n_radial);
    for (std::size_t k = 0; k < b.grid.angle_ranges.size(); ++k) cells *= static_cast<double>(b.grid.n_angular);
    if (cells > 0x1.0p62) return "grid too large";
    for (double e : b.grid.radial_edges)
      if (!std::isfinite(e)) return "non-finite radial edge";
    for (const auto& [lo, hi] : b.grid.angle_ranges)
      if (!std::isfinite(lo) || !std::isfinite(hi) || lo > hi) return "bad angle range";
    for (const auto& bin : b.bins)
      if (bin.code >= b.grid.cells()) return "bin code out of range";
    std::size_t total = 0;
    for (std::size_t i = 0; i < b.bins.size(); ++i) {
      if (i > 0 && !(b.bins[i - 1].code < b.bins[i].code)) return "bins not strictly sorted";
      if (b.bins[i].offset != total) return "bin offsets not contiguous";
      total += b.bins[i].length;
    }
    if (total != b.members.size()) return "sum of bin sizes != bucket size";
    for (PointId p : b.members) {
      if (p >= idx.size()) return "member id out of range";
      seen[p] = 1;
    }
    for (std::size_t i = 1; i < b.grid.radial_edges.size(); ++i)
      if (b.grid.radial_edges[i] < b.grid.radial_edges[i - 1]) return "radial edges decreasing";
  }
  if (std::find(seen.begin(), seen.end(), 0) != seen.end()) return "union of buckets misses a point";
  return {};
}

}  // namespace garlic
