#pragma once

#include <cstdio>
#include <filesystem>
#include <string>

#include <unistd.h>

#include "garlic/garlic.hpp"

namespace garlic::testing {

/// Small, fast training settings for unit tests.
inline HyperParams quick_hp(std::size_t K = 8, std::size_t epochs = 6) {
  HyperParams hp;
  hp.K_init = K;
  hp.epochs_max = epochs;
  hp.warmup_epochs = 2;
  hp.splitclone_period = 3;
  hp.prune_period = 4;
  hp.batch_size = 256;
  return hp;
}

struct SmallIndex {
  LabeledDataset base;
  LabeledDataset queries;
  BuildOutput built;
};

inline SmallIndex small_index(std::size_t n = 800, std::size_t d = 8, std::uint64_t seed = 1, std::size_t K = 8) {
  SynthOptions o;
  o.n = n + 50;
  o.d = d;
  o.components = 6;
  o.seed = seed;
  auto ds = synth_mixture(o);
  auto [base, queries] = split_rows(ds, n);
  HyperParams hp = quick_hp(K);
  hp.seed = seed;
  auto built = train_and_build(base.X, hp);
  return {std::move(base), std::move(queries), std::move(built)};
}

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("garlic_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  std::string file(const std::string& name) const { return (path_ / name).string(); }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

}  // namespace garlic::testing
