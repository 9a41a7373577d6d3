#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "garlic/eval.hpp"
#include "garlic/index_io.hpp"
#include "garlic/init.hpp"

namespace garlic {

/// Row-major int32 matrix (ground-truth ids, labels).
struct IntMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::int32_t> values;

  std::span<const std::int32_t> row(std::size_t i) const { return {values.data() + i * cols, cols}; }
  friend bool operator==(const IntMatrix&, const IntMatrix&) = default;
};

namespace detail {

/// Splits `[d:i32][d x 4-byte payload]` records. All records share d.
inline std::pair<std::size_t, std::size_t> scan_vecs(const std::uint8_t* bytes, std::size_t size) {
  std::size_t offset = 0;
  std::size_t rows = 0;
  std::int32_t dim = -1;
  while (offset < size) {
    if (size - offset < 4) throw FormatError("truncated record header", offset);
    std::int32_t d;
    std::memcpy(&d, bytes + offset, 4);
    if (d <= 0) throw FormatError("record dimension must be positive", offset);
    if (dim >= 0 && d != dim) throw FormatError("inconsistent record dimension", offset);
    dim = d;
    const std::size_t payload = static_cast<std::size_t>(d) * 4;
    if (size - offset - 4 < payload) throw FormatError("truncated record payload", offset);
    offset += 4 + payload;
    ++rows;
  }
  if (rows == 0) throw FormatError("empty vector file", 0);
  return {rows, static_cast<std::size_t>(dim)};
}

template <typename T>
std::vector<T> unpack_vecs(const std::uint8_t* bytes, std::size_t rows, std::size_t dim) {
  std::vector<T> out(rows * dim);
  for (std::size_t i = 0; i < rows; ++i) std::memcpy(out.data() + i * dim, bytes + i * (4 + dim * 4) + 4, dim * 4);
  return out;
}

template <typename T>
std::vector<std::uint8_t> pack_vecs(const T* values, std::size_t rows, std::size_t dim) {
  std::vector<std::uint8_t> out(rows * (4 + dim * 4));
  const auto d = static_cast<std::int32_t>(dim);
  for (std::size_t i = 0; i < rows; ++i) {
    std::uint8_t* rec = out.data() + i * (4 + dim * 4);
    std::memcpy(rec, &d, 4);
    std::memcpy(rec + 4, values + i * dim, dim * 4);
  }
  return out;
}

inline void write_bytes(const std::string& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for " + path);
}

}  // namespace detail

/// fvecs: repeated `[d: i32 LE][d x f32 LE]`.
inline VectorSet<float> parse_fvecs(const std::uint8_t* bytes, std::size_t size) {
  const auto [rows, dim] = detail::scan_vecs(bytes, size);
  auto values = detail::unpack_vecs<float>(bytes, rows, dim);
  for (std::size_t i = 0; i < values.size(); ++i)
    if (!std::isfinite(values[i])) throw FormatError("non-finite value", (i / dim) * (4 + dim * 4) + 4 + (i % dim) * 4);
  if (dim < 2) throw FormatError("vectors need dimension >= 2", 0);
  return VectorSet<float>(rows, dim, std::move(values));
}

inline VectorSet<float> load_fvecs(const std::string& path) {
  const auto bytes = read_file_bytes(path);
  return parse_fvecs(bytes.data(), bytes.size());
}

inline std::vector<std::uint8_t> encode_fvecs(const VectorSet<float>& X) {
  return detail::pack_vecs(X.values().data(), X.size(), X.dim());
}

inline void save_fvecs(const std::string& path, const VectorSet<float>& X) { detail::write_bytes(path, encode_fvecs(X)); }

/// ivecs: same framing with i32 payloads.
inline IntMatrix parse_ivecs(const std::uint8_t* bytes, std::size_t size) {
  const auto [rows, dim] = detail::scan_vecs(bytes, size);
  return {rows, dim, detail::unpack_vecs<std::int32_t>(bytes, rows, dim)};
}

inline IntMatrix load_ivecs(const std::string& path) {
  const auto bytes = read_file_bytes(path);
  return parse_ivecs(bytes.data(), bytes.size());
}

inline std::vector<std::uint8_t> encode_ivecs(const IntMatrix& m) {
  if (m.cols < 1 || m.values.size() != m.rows * m.cols) throw InvalidParameter("malformed integer matrix");
  return detail::pack_vecs(m.values.data(), m.rows, m.cols);
}

inline void save_ivecs(const std::string& path, const IntMatrix& m) { detail::write_bytes(path, encode_ivecs(m)); }

/// Labels are stored as ivecs with one column.
inline std::vector<std::int32_t> load_labels(const std::string& path) {
  auto m = load_ivecs(path);
  if (m.cols != 1) throw FormatError("label file must have dimension 1", 0);
  return std::move(m.values);
}

inline void save_labels(const std::string& path, const std::vector<std::int32_t>& labels) {
  save_ivecs(path, {labels.size(), 1, labels});
}

inline IntMatrix ground_truth_matrix(const GroundTruth& gt) {
  IntMatrix m{gt.ids.size(), gt.k, {}};
  m.values.reserve(m.rows * m.cols);
  for (const auto& row : gt.ids)
    for (PointId p : row) m.values.push_back(static_cast<std::int32_t>(p));
  return m;
}

/// Ground truth read back from ivecs; distances are not stored.
inline GroundTruth ground_truth_from(const IntMatrix& m, std::size_t n) {
  GroundTruth gt;
  gt.k = m.cols;
  gt.ids.resize(m.rows);
  for (std::size_t q = 0; q < m.rows; ++q)
    for (std::int32_t v : m.row(q)) {
      if (v < 0 || static_cast<std::size_t>(v) >= n) throw FormatError("ground-truth id out of range", 0);
      gt.ids[q].push_back(static_cast<PointId>(v));
    }
  return gt;
}

struct LabeledDataset {
  VectorSet<float> X;
  std::optional<std::vector<std::int32_t>> labels;

  void validate() const {
    if (labels && labels->size() != X.size()) throw DimensionMismatch(X.size(), labels->size());
  }
};

struct SynthOptions {
  std::size_t n = 1000;
  std::size_t d = 16;
  std::size_t components = 10;
  double spread = 0.25;
  double label_noise = 0.0;  // fraction of labels replaced by another class
  std::uint64_t seed = 0;
};

/// Points from `components` anisotropic Gaussians: means ~ U[-1,1]^d,
/// covariance A A^T with A = spread * N(0,1)^{d x d} / sqrt(d). Component
/// choice is uniform; the label is the component id.
inline LabeledDataset synth_mixture(const SynthOptions& o) {
  if (o.n < 1 || o.d < 2 || o.components < 1) throw InvalidParameter("synth_mixture needs n >= 1, d >= 2, components >= 1");
  if (!(o.spread >= 0.0) || !std::isfinite(o.spread)) throw InvalidParameter("spread must be finite and >= 0");
  if (!(o.label_noise >= 0.0 && o.label_noise <= 1.0)) throw InvalidParameter("label_noise must be in [0, 1]");
  Rng rng(o.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const auto d = static_cast<Eigen::Index>(o.d);
  std::vector<Vector> means;
  std::vector<Matrix> factors;
  for (std::size_t c = 0; c < o.components; ++c) {
    Vector mu(d);
    for (Eigen::Index j = 0; j < d; ++j) mu[j] = 2.0 * uniform01(rng) - 1.0;
    Matrix A(d, d);
    for (Eigen::Index j = 0; j < d; ++j)
      for (Eigen::Index k = 0; k < d; ++k) A(j, k) = o.spread * normal(rng) / std::sqrt(static_cast<double>(o.d));
    means.push_back(std::move(mu));
    factors.push_back(std::move(A));
  }
  std::vector<float> values(o.n * o.d);
  std::vector<std::int32_t> labels(o.n);
  Vector z(d);
  for (std::size_t i = 0; i < o.n; ++i) {
    const std::size_t c = uniform_index(rng, o.components);
    for (Eigen::Index j = 0; j < d; ++j) z[j] = normal(rng);
    const Vector x = means[c] + factors[c] * z;
    for (Eigen::Index j = 0; j < d; ++j) values[i * o.d + static_cast<std::size_t>(j)] = static_cast<float>(x[j]);
    labels[i] = static_cast<std::int32_t>(c);
  }
  if (o.label_noise > 0.0 && o.components > 1) {
    for (auto& l : labels)
      if (uniform01(rng) < o.label_noise) {
        const auto shift = 1 + uniform_index(rng, o.components - 1);
        l = static_cast<std::int32_t>((static_cast<std::size_t>(l) + shift) % o.components);
      }
  }
  return {VectorSet<float>(o.n, o.d, std::move(values)), std::move(labels)};
}

/// Splits the first `head` rows off a labeled set.
inline std::pair<LabeledDataset, LabeledDataset> split_rows(const LabeledDataset& s, std::size_t head) {
  if (head < 1 || head >= s.X.size()) throw InvalidParameter("split point must leave both parts non-empty");
  const std::size_t d = s.X.dim();
  const auto& v = s.X.values();
  LabeledDataset a{VectorSet<float>(head, d, std::vector<float>(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(head * d))), {}};
  LabeledDataset b{VectorSet<float>(s.X.size() - head, d, std::vector<float>(v.begin() + static_cast<std::ptrdiff_t>(head * d), v.end())), {}};
  if (s.labels) {
    a.labels = std::vector<std::int32_t>(s.labels->begin(), s.labels->begin() + static_cast<std::ptrdiff_t>(head));
    b.labels = std::vector<std::int32_t>(s.labels->begin() + static_cast<std::ptrdiff_t>(head), s.labels->end());
  }
  return {std::move(a), std::move(b)};
}

}  // namespace garlic
