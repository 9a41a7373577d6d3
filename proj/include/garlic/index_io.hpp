#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <type_traits>
#include <vector>

#include "garlic/index.hpp"

namespace garlic {

static_assert(std::endian::native == std::endian::little, "index I/O assumes a little-endian host");

inline constexpr char kIndexMagic[4] = {'G', 'R', 'L', 'C'};
inline constexpr std::uint32_t kIndexVersion = 1;

namespace detail {

class ByteWriter {
 public:
  template <typename T>
    requires std::is_arithmetic_v<T>
  void put(T v) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
    bytes_.insert(bytes_.end(), p, p + sizeof(T));
  }
  void raw(const void* data, std::size_t n) {
    const auto* p = static_cast<const std::uint8_t*>(data);
    bytes_.insert(bytes_.end(), p, p + n);
  }
  void vec(const Vector& v) {
    for (Eigen::Index i = 0; i < v.size(); ++i) put<double>(v[i]);
  }
  std::vector<std::uint8_t>& bytes() { return bytes_; }

 private:
  std::vector<std::uint8_t> bytes_;
};

class ByteReader {
 public:
  ByteReader(const std::uint8_t* data, std::size_t size) : data_(data), size_(size) {}

  std::size_t offset() const { return pos_; }
  std::size_t remaining() const { return size_ - pos_; }

  void need(std::size_t bytes, const char* what) const {
    if (bytes > remaining()) throw FormatError(std::string("truncated ") + what, pos_);
  }

  template <typename T>
    requires std::is_arithmetic_v<T>
  T get(const char* what) {
    need(sizeof(T), what);
    T v;
    std::memcpy(&v, data_ + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }

  /// Reads a count and checks that `count * unit` more bytes can exist.
  std::size_t count(std::size_t unit, const char* what) {
    const auto c = get<std::uint64_t>(what);
    if (unit > 0 && c > remaining() / unit) throw FormatError(std::string("implausible ") + what, pos_ - 8);
    return static_cast<std::size_t>(c);
  }

  Vector vec(std::size_t n, const char* what) {
    need(n * sizeof(double), what);
    Vector v(static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i) v[static_cast<Eigen::Index>(i)] = get<double>(what);
    return v;
  }

  void raw(void* out, std::size_t n, const char* what) {
    need(n, what);
    std::memcpy(out, data_ + pos_, n);
    pos_ += n;
  }

  FormatError error(const std::string& what) const { return FormatError(what, pos_); }

 private:
  const std::uint8_t* data_;
  std::size_t size_;
  std::size_t pos_ = 0;
};

inline void write_hp(ByteWriter& w, const HyperParams& hp) {
  std::uint32_t fields = 0;
  HyperParams::visit(hp, [&](std::string_view, const auto&) { ++fields; });
  w.put<std::uint32_t>(fields);
  HyperParams::visit(hp, [&](std::string_view, const auto& v) {
    using F = std::decay_t<decltype(v)>;
    if constexpr (std::is_same_v<F, double>) w.put<double>(v);
    else if constexpr (std::is_same_v<F, std::uint64_t>) w.put<std::uint64_t>(v);
    else if constexpr (std::is_same_v<F, bool>) w.put<std::uint8_t>(v ? 1 : 0);
    else w.put<std::uint32_t>(static_cast<std::uint32_t>(v));
  });
}

inline HyperParams read_hp(ByteReader& r) {
  HyperParams hp;
  std::uint32_t expected = 0;
  HyperParams::visit(hp, [&](std::string_view, const auto&) { ++expected; });
  if (r.get<std::uint32_t>("hyperparameter count") != expected) throw r.error("hyperparameter field count mismatch");
  HyperParams::visit(hp, [&](std::string_view name, auto& v) {
    using F = std::decay_t<decltype(v)>;
    const std::string what = "hyperparameter " + std::string(name);
    if constexpr (std::is_same_v<F, double>) v = r.get<double>(what.c_str());
    else if constexpr (std::is_same_v<F, std::uint64_t>) v = r.get<std::uint64_t>(what.c_str());
    else if constexpr (std::is_same_v<F, bool>) v = r.get<std::uint8_t>(what.c_str()) != 0;
    else {
      const auto raw = r.get<std::uint32_t>(what.c_str());
      if (to_string(static_cast<F>(raw)) == "?") throw r.error("bad enum value for " + std::string(name));
      v = static_cast<F>(raw);
    }
  });
  try {
    hp.validate();
  } catch (const InvalidParameter& e) {
    throw r.error(e.what());
  }
  return hp;
}

}  // namespace detail

/// Serializes the index. Layout (little-endian): magic "GRLC", u32 version,
/// u64 n, d, gaussian count, bucket count; hyperparameter snapshot; normalizer;
/// u32 data checksum; n*d f32 vectors; per Gaussian (u8 active, mu, log_diag,
/// packed strictly-lower rows); per bucket (id, flags, centroid, basis, grid,
/// bin table as offset+length into a u32 member pool); u32 CRC32 trailer.
inline std::vector<std::uint8_t> serialize_index(const Index& idx) {
  detail::ByteWriter w;
  const std::size_t d = idx.dim();
  w.raw(kIndexMagic, 4);
  w.put<std::uint32_t>(kIndexVersion);
  w.put<std::uint64_t>(idx.size());
  w.put<std::uint64_t>(d);
  w.put<std::uint64_t>(idx.gaussians.size());
  w.put<std::uint64_t>(idx.buckets.size());
  detail::write_hp(w, idx.hp);
  w.vec(idx.normalizer.shift);
  w.vec(idx.normalizer.scale);
  w.put<std::uint32_t>(idx.fingerprint.checksum);
  w.raw(idx.data.values().data(), idx.data.values().size() * sizeof(float));
  for (GaussianId g = 0; g < idx.gaussians.size(); ++g) {
    const auto& p = idx.gaussians[g];
    w.put<std::uint8_t>(idx.gaussians.active(g) ? 1 : 0);
    w.vec(p.mu);
    w.vec(p.log_diag);
    for (Eigen::Index j = 1; j < p.lower.rows(); ++j)
      for (Eigen::Index k = 0; k < j; ++k) w.put<double>(p.lower(j, k));
  }
  for (const auto& b : idx.buckets) {
    w.put<std::uint64_t>(b.gaussian_id);
    w.put<std::uint8_t>(b.degenerate ? 1 : 0);
    w.put<std::uint64_t>(static_cast<std::uint64_t>(b.basis.cols()));
    w.vec(b.centroid);
    for (Eigen::Index c = 0; c < b.basis.cols(); ++c) w.vec(b.basis.col(c));
    w.put<std::uint64_t>(b.grid.n_radial);
    w.put<std::uint64_t>(b.grid.n_angular);
    for (double e : b.grid.radial_edges) w.put<double>(e);
    for (const auto& [lo, hi] : b.grid.angle_ranges) {
      w.put<double>(lo);
      w.put<double>(hi);
    }
    w.put<std::uint64_t>(b.members.size());
    w.put<std::uint64_t>(b.bins.size());
    for (const auto& bin : b.bins) {
      w.put<std::uint64_t>(bin.code);
      w.put<std::uint32_t>(bin.offset);
      w.put<std::uint32_t>(bin.length);
    }
    w.raw(b.members.data(), b.members.size() * sizeof(PointId));
  }
  const std::uint32_t crc = crc32_of(w.bytes().data(), w.bytes().size());
  w.put<std::uint32_t>(crc);
  return std::move(w.bytes());
}

/// Parses and validates an index image. Any malformed input raises
/// FormatError; nothing is trusted before the CRC trailer matches.
inline Index deserialize_index(const std::uint8_t* bytes, std::size_t size) {
  if (size < 8 + 4) throw FormatError("index file too short", 0);
  std::uint32_t stored_crc;
  std::memcpy(&stored_crc, bytes + size - 4, 4);
  if (crc32_of(bytes, size - 4) != stored_crc) throw FormatError("index checksum mismatch", size - 4);
  detail::ByteReader r(bytes, size - 4);

  char magic[4];
  r.raw(magic, 4, "magic");
  if (std::memcmp(magic, kIndexMagic, 4) != 0) throw FormatError("bad magic", 0);
  if (r.get<std::uint32_t>("version") != kIndexVersion) throw FormatError("unsupported index version", 4);
  const auto n = r.get<std::uint64_t>("n");
  const auto d = r.get<std::uint64_t>("d");
  const auto K = r.count(1, "gaussian count");
  const auto B = r.count(1, "bucket count");
  if (n < 1 || d < 2) throw r.error("invalid n or d");
  if (d > r.remaining() / 16 || n > r.remaining() / (d * sizeof(float))) throw r.error("implausible n or d");

  Index idx;
  idx.hp = detail::read_hp(r);
  idx.normalizer.shift = r.vec(d, "normalizer shift");
  idx.normalizer.scale = r.vec(d, "normalizer scale");
  if (!idx.normalizer.scale.allFinite() || !(idx.normalizer.scale.array() > 0).all() || !idx.normalizer.shift.allFinite())
    throw r.error("invalid normalizer");
  idx.fingerprint = {n, d, r.get<std::uint32_t>("data checksum")};

  std::vector<float> values(n * d);
  r.raw(values.data(), values.size() * sizeof(float), "vectors");
  if (crc32_of(values.data(), values.size() * sizeof(float)) != idx.fingerprint.checksum)
    throw r.error("dataset checksum mismatch");
  try {
    idx.data = VectorSet<float>(n, d, std::move(values));
  } catch (const InvalidParameter& e) {
    throw r.error(e.what());
  }

  const auto di = static_cast<Eigen::Index>(d);
  idx.gaussians = GaussianSet(d);
  const std::size_t gaussian_bytes = 1 + (2 * d + d * (d - 1) / 2) * sizeof(double);
  if (K > r.remaining() / gaussian_bytes) throw r.error("implausible gaussian count");
  for (std::size_t g = 0; g < K; ++g) {
    const bool active = r.get<std::uint8_t>("active flag") != 0;
    Vector mu = r.vec(d, "mu");
    Vector log_diag = r.vec(d, "log_diag");
    Matrix lower = Matrix::Zero(di, di);
    for (Eigen::Index j = 1; j < di; ++j)
      for (Eigen::Index k = 0; k < j; ++k) lower(j, k) = r.get<double>("lower");
    GaussianParams p(std::move(mu), std::move(log_diag), std::move(lower));
    if (!p.finite()) throw r.error("non-finite Gaussian parameters");
    idx.gaussians.add(std::move(p));
    if (!active) idx.gaussians.deactivate(g);
  }

  idx.buckets.resize(B);
  for (auto& b : idx.buckets) {
    b.gaussian_id = r.get<std::uint64_t>("bucket id");
    if (b.gaussian_id >= K) throw r.error("bucket id out of range");
    b.degenerate = r.get<std::uint8_t>("bucket flags") != 0;
    const auto rr = r.get<std::uint64_t>("bucket rank");
    if (rr < 2 || rr > d) throw r.error("bucket rank out of range");
    b.centroid = r.vec(d, "centroid");
    b.basis.resize(di, static_cast<Eigen::Index>(rr));
    for (Eigen::Index c = 0; c < b.basis.cols(); ++c) b.basis.col(c) = r.vec(d, "basis");
    b.grid.n_radial = r.get<std::uint64_t>("n_radial");
    b.grid.n_angular = r.get<std::uint64_t>("n_angular");
    if (b.grid.n_radial < 1 || b.grid.n_angular < 1 || b.grid.n_radial > (1u << 20) || b.grid.n_angular > (1u << 20))
      throw r.error("invalid grid size");
    r.need((b.grid.n_radial + 1 + 2 * (rr - 1)) * sizeof(double), "grid");
    b.grid.radial_edges.resize(b.grid.n_radial + 1);
    for (auto& e : b.grid.radial_edges) e = r.get<double>("radial edge");
    for (std::size_t k = 0; k + 1 < rr; ++k) {
      const double lo = r.get<double>("angle range");
      const double hi = r.get<double>("angle range");
      b.grid.angle_ranges.emplace_back(lo, hi);
    }
    const auto members = r.count(sizeof(PointId), "member count");
    const auto bins = r.count(16, "bin count");
    std::size_t covered = 0;
    b.bins.resize(bins);
    for (auto& bin : b.bins) {
      bin.code = r.get<std::uint64_t>("bin code");
      bin.offset = r.get<std::uint32_t>("bin offset");
      bin.length = r.get<std::uint32_t>("bin length");
      if (bin.offset != covered || bin.length > members - covered) throw r.error("bin table inconsistent");
      covered += bin.length;
    }
    if (covered != members) throw r.error("bin table does not cover the members");
    b.members.resize(members);
    r.raw(b.members.data(), members * sizeof(PointId), "members");
  }
  if (r.remaining() != 0) throw r.error("trailing bytes");
  if (const auto problem = check_index(idx); !problem.empty()) throw r.error("invalid index: " + problem);
  return idx;
}

inline void save_index(const Index& idx, const std::string& path) {
  const auto bytes = serialize_index(idx);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for " + path);
}

inline std::vector<std::uint8_t> read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

inline Index load_index(const std::string& path) {
  const auto bytes = read_file_bytes(path);
  return deserialize_index(bytes.data(), bytes.size());
}

}  // namespace garlic
