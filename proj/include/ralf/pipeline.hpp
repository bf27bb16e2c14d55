#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "ralf/config.hpp"
#include "ralf/negative_retriever.hpp"
#include "ralf/ral_loss.hpp"
#include "ralf/synth.hpp"

namespace ralf {

// One function per CLI subcommand. Each reads its inputs from the config
// (and the outputs of earlier stages in out_dir), writes its artifacts, and
// returns the run manifest, which is also written to
// <out_dir>/manifests/<command>.json.

nlohmann::json cmd_synth(const SynthSpec& spec, const std::filesystem::path& dir);
nlohmann::json cmd_build_store(const PipelineConfig& cfg);
nlohmann::json cmd_filter_vocab(const PipelineConfig& cfg);
nlohmann::json cmd_retrieve_negatives(const PipelineConfig& cfg);
nlohmann::json cmd_ral_loss(const PipelineConfig& cfg, std::uint64_t iteration = 0);
nlohmann::json cmd_ingest_concepts(const PipelineConfig& cfg);
nlohmann::json cmd_retrieve_concepts(const PipelineConfig& cfg);
nlohmann::json cmd_train_raf(const PipelineConfig& cfg);
nlohmann::json cmd_augment(const PipelineConfig& cfg);
nlohmann::json cmd_ensemble(const PipelineConfig& cfg);

struct GradcheckOptions {
  std::uint64_t seed = 0;
  std::size_t dim = 8;
  std::size_t k = 3;
  std::size_t layers = 2;
  std::size_t heads = 2;
  std::size_t ffn_dim = 16;
  double threshold = 1e-4;
};
/// Finite-difference check of the augmenter and RAL gradients on a random
/// fixture; manifest["passed"] tells whether everything is under threshold.
nlohmann::json cmd_gradcheck(const GradcheckOptions& opts);

/// Desk-scale versions of the ablation axes: n-selection, sampling-scheme,
/// k-sweep, vocab-scale.
nlohmann::json cmd_experiment(const PipelineConfig& cfg, const std::string& axis);

// Serialization shared with tests.
nlohmann::json negative_sets_to_json(const NegativeVocabularySets& sets);
NegativeVocabularySets negative_sets_from_json(const nlohmann::json& j);

/// Reads box JSONL; embedding_ref files resolve against the JSONL's directory.
/// Embeddings are L2-normalized on ingestion.
struct BoxRecord {
  std::string label;
  Vector embedding;
};
std::vector<BoxRecord> read_boxes_jsonl(const std::filesystem::path& path);

/// Per-item sample seed for a RAL iteration.
std::uint64_t item_seed(std::uint64_t seed, std::uint64_t iteration, std::size_t item);

}  // namespace ralf
