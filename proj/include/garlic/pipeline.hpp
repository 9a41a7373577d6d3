#pragma once

#include "garlic/index.hpp"
#include "garlic/training.hpp"

namespace garlic {

struct BuildOutput {
  Index index;
  TrainState training;
};

/// Fits the normalizer, trains the Gaussians on the normalized data, and
/// quantizes the buckets into an index over the raw vectors.
inline BuildOutput train_and_build(VectorSet<float> X, const HyperParams& hp, const EpochCallback& on_epoch = {}) {
  hp.validate();
  const Normalizer nz = Normalizer::fit(X.view(), hp.normalization);
  const VectorSet<float> Xn = nz.transform(X);
  TrainState st = fit(Xn.view(), hp, on_epoch);
  Index idx = build_index(std::move(X), nz, st.gaussians, hp);
  return {std::move(idx), std::move(st)};
}

}  // namespace garlic
