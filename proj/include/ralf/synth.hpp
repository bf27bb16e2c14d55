#pragma once

#include <cstdint>
#include <filesystem>

namespace ralf {

/// Sizes for the clustered synthetic fixture.
struct SynthSpec {
  std::uint64_t seed = 0;
  std::size_t base = 8;
  std::size_t novel = 4;
  std::size_t vocab = 100;
  std::size_t dim = 16;
  std::size_t boxes = 32;
  std::size_t proposals = 64;
  std::size_t concepts = 200;
  /// Spread of boxes and proposals around their category center.
  double noise = 0.3;
  /// RAF iterations written into the generated config.
  std::size_t raf_iterations = 20;
};

/// Writes base/novel/vocab tables, boxes, proposals, concepts, baseline
/// logits and a ready-to-run config.json into `dir`. Categories are random
/// unit centers; boxes and proposals are noisy samples of base centers;
/// vocabulary entries and concepts are perturbed centers. The raw vocabulary
/// also carries case duplicates and copies of novel names so the store
/// filters have work to do. Deterministic per seed.
void write_synthetic_fixture(const SynthSpec& spec, const std::filesystem::path& dir);

}  // namespace ralf
