#pragma once

#include <cmath>

#include "garlic/core.hpp"

namespace garlic {

/// Affine map x -> (x - shift) / scale applied before training and routing.
struct Normalizer {
  Vector shift;
  Vector scale;

  static Normalizer identity(std::size_t d) {
    return {Vector::Zero(static_cast<Eigen::Index>(d)), Vector::Ones(static_cast<Eigen::Index>(d))};
  }

  template <typename T>
  static Normalizer fit(PointsView<T> X, Normalization mode) {
    const auto d = static_cast<Eigen::Index>(X.dim());
    Normalizer nz = identity(X.dim());
    if (mode == Normalization::None) return nz;
    const double n = static_cast<double>(X.size());
    for (std::size_t i = 0; i < X.size(); ++i)
      for (Eigen::Index j = 0; j < d; ++j) nz.shift[j] += static_cast<double>(X.row_ptr(i)[j]);
    nz.shift /= n;
    Vector var = Vector::Zero(d);
    for (std::size_t i = 0; i < X.size(); ++i)
      for (Eigen::Index j = 0; j < d; ++j) {
        const double diff = static_cast<double>(X.row_ptr(i)[j]) - nz.shift[j];
        var[j] += diff * diff;
      }
    var /= n;
    if (mode == Normalization::PerDimension) {
      for (Eigen::Index j = 0; j < d; ++j) nz.scale[j] = var[j] > 0.0 ? std::sqrt(var[j]) : 1.0;
    } else {
      const double s = std::sqrt(var.mean());
      nz.scale.setConstant(s > 0.0 ? s : 1.0);
    }
    return nz;
  }

  std::size_t dim() const { return static_cast<std::size_t>(shift.size()); }

  template <typename T>
  Vector apply(std::span<const T> x) const {
    if (x.size() != dim()) throw DimensionMismatch(dim(), x.size());
    Vector out(shift.size());
    for (Eigen::Index j = 0; j < shift.size(); ++j) out[j] = (static_cast<double>(x[static_cast<std::size_t>(j)]) - shift[j]) / scale[j];
    return out;
  }

  template <typename T>
  VectorSet<float> transform(const VectorSet<T>& X) const {
    if (X.dim() != dim()) throw DimensionMismatch(dim(), X.dim());
    std::vector<float> v(X.size() * X.dim());
    for (std::size_t i = 0; i < X.size(); ++i)
      for (std::size_t j = 0; j < X.dim(); ++j)
        v[i * X.dim() + j] = static_cast<float>((static_cast<double>(X.row_ptr(i)[j]) - shift[static_cast<Eigen::Index>(j)]) /
                                                scale[static_cast<Eigen::Index>(j)]);
    return VectorSet<float>(X.size(), X.dim(), std::move(v));
  }

  /// The float row the index routes with; matches transform() bit for bit.
  template <typename T>
  std::vector<float> apply_f32(std::span<const T> x) const {
    if (x.size() != dim()) throw DimensionMismatch(dim(), x.size());
    std::vector<float> out(x.size());
    for (std::size_t j = 0; j < x.size(); ++j)
      out[j] = static_cast<float>((static_cast<double>(x[j]) - shift[static_cast<Eigen::Index>(j)]) / scale[static_cast<Eigen::Index>(j)]);
    return out;
  }

  friend bool operator==(const Normalizer& a, const Normalizer& b) { return a.shift == b.shift && a.scale == b.scale; }
};

}  // namespace garlic
