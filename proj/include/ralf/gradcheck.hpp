#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ralf/augmenter.hpp"

namespace ralf {

struct TensorCheck {
  std::string name;
  double max_abs_error = 0.0;
  /// |analytic - numeric|_2 / max(|analytic|_2, |numeric|_2)
  double relative_error = 0.0;
};

struct GradcheckReport {
  std::vector<TensorCheck> tensors;
  double max_relative_error = 0.0;
};

/// Central differences of `raf_loss` for every parameter entry compared with
/// `raf_grad`. Use on small configurations only: two loss evaluations per entry.
GradcheckReport check_raf_gradients(const RafBatch& batch, const AugmenterParams& params,
                                    const EmbeddingTable& categories, const RafHyperParams& hp,
                                    double step = 1e-4);

/// Random augmenter problem: `proposals` unit features, k retrieved concepts
/// each, `categories` category rows. Deterministic per seed.
struct RafFixture {
  RafBatch batch;
  AugmenterParams params;
  EmbeddingTable categories;
};

RafFixture make_raf_fixture(const AugmenterConfig& cfg, std::size_t proposals,
                            std::size_t categories, std::uint64_t seed);

}  // namespace ralf
