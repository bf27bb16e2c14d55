#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "ralf/augmenter.hpp"
#include "ralf/ensemble.hpp"
#include "ralf/negative_retriever.hpp"
#include "ralf/ral_loss.hpp"

namespace ralf {

inline constexpr std::size_t kDefaultM = 2000;
inline constexpr double kDefaultKeepFraction = 0.5;

struct InputPaths {
  std::filesystem::path base;                // base categories, binary table
  std::filesystem::path novel;               // novel categories, binary table
  std::filesystem::path vocab;               // raw vocabulary set, binary table
  std::filesystem::path boxes;               // ground-truth boxes, JSONL
  std::filesystem::path proposals;           // proposal visual features, binary matrix
  std::filesystem::path concepts;            // concept corpus, JSONL
  std::filesystem::path concept_embeddings;  // binary matrix aligned with `concepts`
  std::filesystem::path base_logits;         // baseline logits, binary matrix
};

struct RalSettings {
  std::size_t m = kDefaultM;
  RalHyperParams hp;
  SelectionMode selection = SelectionMode::Random;
};

struct EnsembleSettings {
  EnsembleMode mode = EnsembleMode::AdditiveRaw;
  std::string dataset = "coco";
  /// Unset means the dataset default (COCO 1, LVIS 20).
  std::optional<std::size_t> truncate_top;

  std::size_t effective_truncate_top() const;
};

struct PipelineConfig {
  std::uint64_t seed = 0;
  std::filesystem::path out_dir = "out";
  InputPaths paths;
  double keep_fraction = kDefaultKeepFraction;
  RalSettings ral;
  RafHyperParams raf;
  std::size_t proposals_per_batch = 32;
  EnsembleSettings ensemble;

  /// Directory relative paths in the config resolve against.
  std::filesystem::path base_dir;
};

/// Reads a config file. `seed` is mandatory; every other key defaults.
/// Relative paths resolve against the file's directory, and RALF_OUT_DIR
/// (when set) replaces out_dir.
PipelineConfig load_config(const std::filesystem::path& path);
PipelineConfig config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir);
/// Full config with every default filled in, as echoed in run manifests.
nlohmann::json config_to_json(const PipelineConfig& cfg);

std::filesystem::path resolve(const PipelineConfig& cfg, const std::filesystem::path& p);
std::filesystem::path output_path(const PipelineConfig& cfg, const std::string& file);

}  // namespace ralf
