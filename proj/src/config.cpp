#include "ralf/config.hpp"

#include <cstdlib>
#include <fstream>

#include "ralf/error.hpp"

namespace ralf {

namespace {

using nlohmann::json;

std::string selection_name(SelectionMode m) {
  return m == SelectionMode::Random ? "random" : "similarity";
}

SelectionMode selection_from(const std::string& s) {
  if (s == "random") return SelectionMode::Random;
  if (s == "similarity") return SelectionMode::Similarity;
  throw Error(ErrorCode::InvalidArgument, "unknown selection mode '" + s + "'");
}

template <typename T>
void read_opt(const json& j, const char* key, T& into) {
  if (j.contains(key)) into = j.at(key).get<T>();
}

void read_path(const json& j, const char* key, std::filesystem::path& into) {
  if (j.contains(key)) into = j.at(key).get<std::string>();
}

}  // namespace

std::size_t EnsembleSettings::effective_truncate_top() const {
  if (truncate_top) return *truncate_top;
  if (dataset == "coco") return kCocoTruncateTop;
  if (dataset == "lvis") return kLvisTruncateTop;
  throw Error(ErrorCode::InvalidArgument, "unknown dataset '" + dataset + "'");
}

PipelineConfig config_from_json(const json& j, const std::filesystem::path& base_dir) {
  PipelineConfig cfg;
  cfg.base_dir = base_dir;
  try {
    if (!j.contains("seed")) throw Error(ErrorCode::InvalidArgument, "config must set \"seed\"");
    cfg.seed = j.at("seed").get<std::uint64_t>();
    read_path(j, "out_dir", cfg.out_dir);
    read_opt(j, "keep_fraction", cfg.keep_fraction);
    read_opt(j, "proposals_per_batch", cfg.proposals_per_batch);

    if (j.contains("paths")) {
      const auto& p = j.at("paths");
      read_path(p, "base", cfg.paths.base);
      read_path(p, "novel", cfg.paths.novel);
      read_path(p, "vocab", cfg.paths.vocab);
      read_path(p, "boxes", cfg.paths.boxes);
      read_path(p, "proposals", cfg.paths.proposals);
      read_path(p, "concepts", cfg.paths.concepts);
      read_path(p, "concept_embeddings", cfg.paths.concept_embeddings);
      read_path(p, "base_logits", cfg.paths.base_logits);
    }
    if (j.contains("ral")) {
      const auto& r = j.at("ral");
      if (r.contains("preset")) {
        const auto& preset = r.at("preset");
        cfg.ral.hp = ral_preset(preset.at("baseline").get<std::string>(),
                                preset.at("dataset").get<std::string>());
      }
      read_opt(r, "m", cfg.ral.m);
      read_opt(r, "n", cfg.ral.hp.n);
      read_opt(r, "lambda_hard", cfg.ral.hp.lambda_hard);
      read_opt(r, "lambda_easy", cfg.ral.hp.lambda_easy);
      read_opt(r, "alpha_hard", cfg.ral.hp.alpha_hard);
      read_opt(r, "alpha_easy", cfg.ral.hp.alpha_easy);
      read_opt(r, "beta_hard", cfg.ral.hp.beta_hard);
      read_opt(r, "beta_easy", cfg.ral.hp.beta_easy);
      if (r.contains("selection")) cfg.ral.selection = selection_from(r.at("selection"));
    }
    if (j.contains("raf")) {
      const auto& r = j.at("raf");
      read_opt(r, "k", cfg.raf.k);
      read_opt(r, "layers", cfg.raf.layers);
      read_opt(r, "heads", cfg.raf.heads);
      read_opt(r, "ffn_dim", cfg.raf.ffn_dim);
      read_opt(r, "beta_cls", cfg.raf.beta_cls);
      read_opt(r, "beta_reg", cfg.raf.beta_reg);
      read_opt(r, "learning_rate", cfg.raf.learning_rate);
      read_opt(r, "iterations", cfg.raf.iterations);
      if (r.contains("activation")) {
        cfg.raf.activation = activation_from_string(r.at("activation").get<std::string>());
      }
    }
    if (j.contains("ensemble")) {
      const auto& e = j.at("ensemble");
      if (e.contains("mode")) cfg.ensemble.mode = ensemble_mode_from_string(e.at("mode").get<std::string>());
      read_opt(e, "dataset", cfg.ensemble.dataset);
      if (e.contains("truncate_top") && !e.at("truncate_top").is_null()) {
        cfg.ensemble.truncate_top = e.at("truncate_top").get<std::size_t>();
      }
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::FormatError, std::string("config: ") + e.what());
  }
  if (!(cfg.keep_fraction > 0.0 && cfg.keep_fraction <= 1.0)) {
    throw Error(ErrorCode::InvalidArgument, "keep_fraction must lie in (0, 1]");
  }
  if (cfg.ral.hp.n == 0 || cfg.ral.hp.beta_hard < 0.0 || cfg.ral.hp.beta_easy < 0.0) {
    throw Error(ErrorCode::InvalidArgument, "ral.n must be >= 1 and betas >= 0");
  }
  if (cfg.proposals_per_batch == 0) {
    throw Error(ErrorCode::InvalidArgument, "proposals_per_batch must be positive");
  }
  return cfg;
}

PipelineConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::FormatError, path.string() + ": " + e.what());
  }
  auto cfg = config_from_json(j, std::filesystem::absolute(path).parent_path());
  if (const char* env = std::getenv("RALF_OUT_DIR"); env && *env) cfg.out_dir = env;
  return cfg;
}

json config_to_json(const PipelineConfig& cfg) {
  const auto& hp = cfg.ral.hp;
  json truncate = cfg.ensemble.truncate_top ? json(*cfg.ensemble.truncate_top) : json(nullptr);
  return json{
      {"seed", cfg.seed},
      {"out_dir", cfg.out_dir.string()},
      {"keep_fraction", cfg.keep_fraction},
      {"proposals_per_batch", cfg.proposals_per_batch},
      {"paths",
       {{"base", cfg.paths.base.string()},
        {"novel", cfg.paths.novel.string()},
        {"vocab", cfg.paths.vocab.string()},
        {"boxes", cfg.paths.boxes.string()},
        {"proposals", cfg.paths.proposals.string()},
        {"concepts", cfg.paths.concepts.string()},
        {"concept_embeddings", cfg.paths.concept_embeddings.string()},
        {"base_logits", cfg.paths.base_logits.string()}}},
      {"ral",
       {{"m", cfg.ral.m},
        {"n", hp.n},
        {"lambda_hard", hp.lambda_hard},
        {"lambda_easy", hp.lambda_easy},
        {"alpha_hard", hp.alpha_hard},
        {"alpha_easy", hp.alpha_easy},
        {"beta_hard", hp.beta_hard},
        {"beta_easy", hp.beta_easy},
        {"selection", selection_name(cfg.ral.selection)}}},
      {"raf",
       {{"k", cfg.raf.k},
        {"layers", cfg.raf.layers},
        {"heads", cfg.raf.heads},
        {"ffn_dim", cfg.raf.ffn_dim},
        {"activation", std::string(to_string(cfg.raf.activation))},
        {"beta_cls", cfg.raf.beta_cls},
        {"beta_reg", cfg.raf.beta_reg},
        {"learning_rate", cfg.raf.learning_rate},
        {"iterations", cfg.raf.iterations}}},
      {"ensemble",
       {{"mode", std::string(to_cli_string(cfg.ensemble.mode))},
        {"dataset", cfg.ensemble.dataset},
        {"truncate_top", truncate},
        {"effective_truncate_top", cfg.ensemble.effective_truncate_top()}}},
  };
}

std::filesystem::path resolve(const PipelineConfig& cfg, const std::filesystem::path& p) {
  if (p.empty() || p.is_absolute()) return p;
  return cfg.base_dir / p;
}

std::filesystem::path output_path(const PipelineConfig& cfg, const std::string& file) {
  const auto dir = resolve(cfg, cfg.out_dir);
  std::filesystem::create_directories(dir);
  return dir / file;
}

}  // namespace ralf
