#include "ralf/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <unordered_set>

#include "ralf/augmenter.hpp"
#include "ralf/concept_store.hpp"
#include "ralf/ensemble.hpp"
#include "ralf/error.hpp"
#include "ralf/gradcheck.hpp"
#include "ralf/kernels.hpp"

namespace ralf {

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot open " + path.string() + " for writing");
  out << j.dump(2) << '\n';
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw Error(ErrorCode::IoError,
                "cannot open " + path.string() + " (did the previous stage run?)");
  }
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::FormatError, path.string() + ": " + e.what());
  }
}

json finish(const PipelineConfig& cfg, const std::string& command, json outputs, json stats) {
  json manifest = {{"command", command},
                   {"config", config_to_json(cfg)},
                   {"outputs", std::move(outputs)},
                   {"stats", std::move(stats)}};
  const auto dir = resolve(cfg, cfg.out_dir) / "manifests";
  fs::create_directories(dir);
  write_json(dir / (command + ".json"), manifest);
  return manifest;
}

fs::path require_path(const PipelineConfig& cfg, const fs::path& p, const char* key) {
  if (p.empty()) throw Error(ErrorCode::InvalidArgument, std::string("config lacks paths.") + key);
  return resolve(cfg, p);
}

std::vector<std::string> names_of(const fs::path& matrix_path) {
  return read_names_file(names_path_for(matrix_path));
}

/// Feature matrix with optional names file; rows normalized.
EmbeddingTable load_features(const fs::path& path) {
  auto m = read_matrix_file(path);
  std::vector<std::string> names;
  if (fs::exists(names_path_for(path))) {
    names = names_of(path);
  } else {
    for (std::size_t i = 0; i < m.rows; ++i) names.push_back("row_" + std::to_string(i));
  }
  return build_table(std::move(names), std::move(m));
}

/// Rows of `first` then rows of `second` whose names are new.
EmbeddingTable union_table(const EmbeddingTable& first, const EmbeddingTable& second) {
  if (first.dim() != second.dim()) {
    throw Error(ErrorCode::DimensionMismatch, "cannot join tables of different dims");
  }
  std::vector<std::string> names = first.names();
  std::vector<std::size_t> extra;
  for (std::size_t i = 0; i < second.count(); ++i) {
    if (!first.find(second.name(i))) extra.push_back(i);
  }
  Matrix m(first.count() + extra.size(), first.dim());
  std::ranges::copy(first.vectors().data, m.data.begin());
  for (std::size_t r = 0; r < extra.size(); ++r) {
    names.push_back(second.name(extra[r]));
    std::ranges::copy(second.row(extra[r]), m.row(first.count() + r).begin());
  }
  return build_table(std::move(names), std::move(m));
}

ConceptStore load_concept_store(const PipelineConfig& cfg) {
  const auto records = read_concepts_jsonl(output_path(cfg, "concept_store.jsonl"));
  const auto m = read_matrix_file(output_path(cfg, "concept_store.bin"));
  return ingest_concepts(records, m, {});
}

std::vector<std::size_t> read_kept(const PipelineConfig& cfg) {
  return read_json(output_path(cfg, "kept.json")).at("kept").get<std::vector<std::size_t>>();
}

std::vector<RetrievedConcepts> retrieve_all(const ConceptStore& store, const EmbeddingTable& feats,
                                            std::size_t k) {
  std::vector<RetrievedConcepts> out;
  out.reserve(feats.count());
  for (std::size_t r = 0; r < feats.count(); ++r) out.push_back(retrieve(store, feats.row(r), k));
  return out;
}

std::vector<RafBatch> make_batches(const EmbeddingTable& feats,
                                   std::vector<RetrievedConcepts> retrieved, std::size_t per_batch) {
  std::vector<RafBatch> batches;
  for (std::size_t begin = 0; begin < feats.count(); begin += per_batch) {
    const std::size_t end = std::min(feats.count(), begin + per_batch);
    RafBatch b;
    b.visual_features = Matrix(end - begin, feats.dim());
    for (std::size_t r = begin; r < end; ++r) {
      std::ranges::copy(feats.row(r), b.visual_features.row(r - begin).begin());
      b.retrieved.push_back(std::move(retrieved[r]));
    }
    batches.push_back(std::move(b));
  }
  return batches;
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

struct RalStats {
  double loss = 0.0, loss_hard = 0.0, loss_easy = 0.0, u_hard = 0.0, u_easy = 0.0, sim_gt = 0.0;

  json to_json() const {
    return {{"loss", loss},     {"loss_hard", loss_hard}, {"loss_easy", loss_easy},
            {"u_hard", u_hard}, {"u_easy", u_easy},       {"sim_gt", sim_gt}};
  }
};

RalStats ral_stats(const std::vector<BoxRecord>& boxes, const NegativeVocabularySets& sets,
                   const EmbeddingTable& base, const EmbeddingTable& vocab, RalHyperParams hp,
                   SelectionMode mode, std::uint64_t seed, std::size_t iterations) {
  hp.n = std::min(hp.n, sets.m);
  RalStats s;
  for (std::size_t it = 0; it < iterations; ++it) {
    std::vector<RalBatchItem> batch;
    for (std::size_t i = 0; i < boxes.size(); ++i) {
      auto sample = sample_iteration(sets, boxes[i].label, hp.n, item_seed(seed, it, i), mode);
      batch.push_back({boxes[i].embedding, boxes[i].label, std::move(sample.hard),
                       std::move(sample.easy)});
    }
    const auto r = ral_total(batch, base, vocab, hp);
    s.loss += r.loss;
    s.loss_hard += r.loss_hard;
    s.loss_easy += r.loss_easy;
    for (const auto& item : r.items) {
      s.u_hard += item.u_hard;
      s.u_easy += item.u_easy;
      s.sim_gt += item.sim_gt;
    }
  }
  const double it = static_cast<double>(iterations);
  const double items = it * static_cast<double>(boxes.size());
  s.loss /= it;
  s.loss_hard /= it;
  s.loss_easy /= it;
  s.u_hard /= items;
  s.u_easy /= items;
  s.sim_gt /= items;
  return s;
}

}  // namespace

std::uint64_t item_seed(std::uint64_t seed, std::uint64_t iteration, std::size_t item) {
  return splitmix64(splitmix64(seed ^ splitmix64(iteration)) + item);
}

json negative_sets_to_json(const NegativeVocabularySets& sets) {
  json cats = json::object();
  for (const auto& [name, s] : sets.categories) cats[name] = {{"hard", s.hard}, {"easy", s.easy}};
  return {{"m", sets.m}, {"categories", std::move(cats)}};
}

NegativeVocabularySets negative_sets_from_json(const json& j) {
  NegativeVocabularySets sets;
  try {
    sets.m = j.at("m").get<std::size_t>();
    for (const auto& [name, s] : j.at("categories").items()) {
      NegativeSets ns{s.at("hard").get<std::vector<std::string>>(),
                      s.at("easy").get<std::vector<std::string>>()};
      if (ns.hard.size() != sets.m || ns.easy.size() != sets.m) {
        throw Error(ErrorCode::FormatError, "negative sets for '" + name + "' are not size m");
      }
      sets.categories.emplace(name, std::move(ns));
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::FormatError, std::string("negative sets: ") + e.what());
  }
  return sets;
}

std::vector<BoxRecord> read_boxes_jsonl(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  std::map<fs::path, Matrix> files;
  std::vector<BoxRecord> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = json::parse(line);
      const auto& ref = j.at("embedding_ref");
      auto file = fs::path(ref.at("file").get<std::string>());
      if (file.is_relative()) file = path.parent_path() / file;
      auto it = files.find(file);
      if (it == files.end()) it = files.emplace(file, read_matrix_file(file)).first;
      const auto row = ref.at("row").get<std::size_t>();
      if (row >= it->second.rows) {
        throw Error(ErrorCode::FormatError, path.string() + ":" + std::to_string(lineno) +
                                                ": row " + std::to_string(row) + " out of range");
      }
      const auto v = it->second.row(row);
      out.push_back({j.at("label").get<std::string>(), normalized_query(v, v.size())});
    } catch (const json::exception& e) {
      throw Error(ErrorCode::FormatError,
                  path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

json cmd_synth(const SynthSpec& spec, const fs::path& dir) {
  write_synthetic_fixture(spec, dir);
  json manifest = {{"command", "synth"},
                   {"spec",
                    {{"seed", spec.seed},
                     {"base", spec.base},
                     {"novel", spec.novel},
                     {"vocab", spec.vocab},
                     {"dim", spec.dim},
                     {"boxes", spec.boxes},
                     {"proposals", spec.proposals},
                     {"concepts", spec.concepts},
                     {"noise", spec.noise}}},
                   {"outputs",
                    {"base.bin", "novel.bin", "vocab.bin", "boxes.bin", "boxes.jsonl",
                     "proposals.bin", "proposals.labels.json", "concepts.jsonl", "concepts.bin",
                     "base_logits.bin", "config.json"}}};
  write_json(dir / "synth.manifest.json", manifest);
  return manifest;
}

json cmd_build_store(const PipelineConfig& cfg) {
  const auto vocab_path = require_path(cfg, cfg.paths.vocab, "vocab");
  const auto raw = read_matrix_file(vocab_path);
  const auto names = names_of(vocab_path);
  const auto novel = names_of(require_path(cfg, cfg.paths.novel, "novel"));
  const auto store = build_store(names, raw, novel);

  save_table(output_path(cfg, "store.bin"), store.table);
  json excluded = json::array();
  std::size_t novel_overlap = 0, duplicates = 0;
  for (const auto& e : store.excluded) {
    excluded.push_back({{"name", e.name}, {"reason", to_string(e.reason)}});
    (e.reason == ExclusionReason::NovelOverlap ? novel_overlap : duplicates) += 1;
  }
  write_json(output_path(cfg, "store.excluded.json"), excluded);
  return finish(cfg, "build-store", {"store.bin", "store.names.json", "store.excluded.json"},
                {{"raw_count", names.size()},
                 {"store_count", store.table.count()},
                 {"excluded_novel_overlap", novel_overlap},
                 {"excluded_case_duplicate", duplicates}});
}

json cmd_filter_vocab(const PipelineConfig& cfg) {
  const auto store = load_table(output_path(cfg, "store.bin"));
  const auto base = load_table(require_path(cfg, cfg.paths.base, "base"));
  const auto ranks = compute_ranks(store, base);
  const auto kept = filter_by_rank_variance(ranks, cfg.keep_fraction);

  Matrix rank_matrix(ranks.base_count, ranks.vocab_count);
  for (std::size_t i = 0; i < ranks.ranks.size(); ++i) rank_matrix.data[i] = ranks.ranks[i];
  write_matrix_file(output_path(cfg, "ranks.bin"), rank_matrix);
  write_names_file(output_path(cfg, "ranks.names.json"), base.names());

  std::vector<char> is_kept(store.count(), 0);
  for (auto i : kept) is_kept[i] = 1;
  json excluded = json::array();
  for (std::size_t i = 0; i < store.count(); ++i) {
    if (!is_kept[i]) {
      excluded.push_back({{"name", store.name(i)},
                          {"reason", to_string(ExclusionReason::LowRankVariance)}});
    }
  }
  std::vector<std::string> kept_names;
  for (auto i : kept) kept_names.push_back(store.name(i));
  write_json(output_path(cfg, "kept.json"), {{"keep_fraction", cfg.keep_fraction},
                                             {"store_count", store.count()},
                                             {"kept_count", kept.size()},
                                             {"kept", kept},
                                             {"kept_names", kept_names},
                                             {"variance", ranks.variance},
                                             {"excluded", excluded}});
  return finish(cfg, "filter-vocab", {"ranks.bin", "ranks.names.json", "kept.json"},
                {{"store_count", store.count()}, {"kept_count", kept.size()}});
}

json cmd_retrieve_negatives(const PipelineConfig& cfg) {
  const auto store = load_table(output_path(cfg, "store.bin"));
  const auto base = load_table(require_path(cfg, cfg.paths.base, "base"));
  const auto kept = read_kept(cfg);
  const auto sets = build_negative_sets(store, base, kept, cfg.ral.m);
  write_json(output_path(cfg, "negatives.json"), negative_sets_to_json(sets));
  return finish(cfg, "retrieve-negatives", {"negatives.json"},
                {{"m", sets.m}, {"categories", sets.categories.size()}, {"kept_count", kept.size()}});
}

json cmd_ral_loss(const PipelineConfig& cfg, std::uint64_t iteration) {
  const auto store = load_table(output_path(cfg, "store.bin"));
  const auto base = load_table(require_path(cfg, cfg.paths.base, "base"));
  const auto sets = negative_sets_from_json(read_json(output_path(cfg, "negatives.json")));
  const auto boxes = read_boxes_jsonl(require_path(cfg, cfg.paths.boxes, "boxes"));

  std::vector<RalBatchItem> batch;
  for (std::size_t i = 0; i < boxes.size(); ++i) {
    auto sample = sample_iteration(sets, boxes[i].label, cfg.ral.hp.n,
                                   item_seed(cfg.seed, iteration, i), cfg.ral.selection);
    batch.push_back({boxes[i].embedding, boxes[i].label, std::move(sample.hard),
                     std::move(sample.easy)});
  }
  const auto result = ral_total(batch, base, store, cfg.ral.hp);

  json items = json::array();
  Matrix grads(batch.size(), base.dim());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto& r = result.items[i];
    items.push_back({{"label", batch[i].label},
                     {"hard", batch[i].hard_n},
                     {"easy", batch[i].easy_n},
                     {"sim_gt", r.sim_gt},
                     {"u_hard", r.u_hard},
                     {"u_easy", r.u_easy},
                     {"loss_hard", r.loss_hard},
                     {"loss_easy", r.loss_easy},
                     {"loss", r.loss}});
    std::ranges::copy(r.grad, grads.row(i).begin());
  }
  write_json(output_path(cfg, "ral_report.json"), {{"iteration", iteration},
                                                   {"loss", result.loss},
                                                   {"loss_hard", result.loss_hard},
                                                   {"loss_easy", result.loss_easy},
                                                   {"items", items}});
  write_matrix_file(output_path(cfg, "ral_grads.bin"), grads);
  return finish(cfg, "ral-loss", {"ral_report.json", "ral_grads.bin"},
                {{"iteration", iteration}, {"boxes", boxes.size()}, {"loss", result.loss}});
}

json cmd_ingest_concepts(const PipelineConfig& cfg) {
  const auto records = read_concepts_jsonl(require_path(cfg, cfg.paths.concepts, "concepts"));
  const auto emb = read_matrix_file(require_path(cfg, cfg.paths.concept_embeddings,
                                                 "concept_embeddings"));
  const auto novel = names_of(require_path(cfg, cfg.paths.novel, "novel"));
  const auto store = ingest_concepts(records, emb, novel);
  write_concepts_jsonl(output_path(cfg, "concept_store.jsonl"), store.records);
  save_table(output_path(cfg, "concept_store.bin"), store.table);
  return finish(cfg, "ingest-concepts",
                {"concept_store.jsonl", "concept_store.bin", "concept_store.names.json"},
                {{"input_records", records.size()}, {"store_size", store.size()}});
}

json cmd_retrieve_concepts(const PipelineConfig& cfg) {
  const auto store = load_concept_store(cfg);
  const auto feats = load_features(require_path(cfg, cfg.paths.proposals, "proposals"));
  const auto retrieved = retrieve_all(store, feats, cfg.raf.k);
  json rows = json::array();
  for (const auto& r : retrieved) {
    rows.push_back({{"indices", r.indices}, {"scores", r.scores}, {"texts", r.texts}});
  }
  write_json(output_path(cfg, "retrieved.json"), {{"k", cfg.raf.k}, {"proposals", rows}});
  return finish(cfg, "retrieve-concepts", {"retrieved.json"},
                {{"proposals", feats.count()}, {"k", cfg.raf.k}, {"store_size", store.size()}});
}

json cmd_train_raf(const PipelineConfig& cfg) {
  const auto store = load_concept_store(cfg);
  const auto feats = load_features(require_path(cfg, cfg.paths.proposals, "proposals"));
  const auto base = load_table(require_path(cfg, cfg.paths.base, "base"));
  const auto vocab = load_table(output_path(cfg, "store.bin"));
  const auto train_cats = union_table(base, vocab);

  auto batches = make_batches(feats, retrieve_all(store, feats, cfg.raf.k), cfg.proposals_per_batch);
  const auto params =
      AugmenterParams::initialize(cfg.raf.augmenter_config(feats.dim()), cfg.seed);
  const std::size_t param_count = params.parameter_count();
  const auto result = train(batches, params, train_cats, cfg.raf);

  write_checkpoint(output_path(cfg, "augmenter.ckpt"), result.params);
  write_loss_trace(output_path(cfg, "loss_trace.csv"), result.trace);
  json stats = {{"parameter_count", param_count},
                {"train_categories", train_cats.count()},
                {"batches", batches.size()},
                {"iterations", result.trace.size()}};
  if (!result.trace.empty()) {
    stats["initial_loss"] = result.trace.front().loss.loss;
    stats["final_loss"] = result.trace.back().loss.loss;
  }
  return finish(cfg, "train-raf", {"augmenter.ckpt", "loss_trace.csv"}, stats);
}

json cmd_augment(const PipelineConfig& cfg) {
  const auto params = read_checkpoint(output_path(cfg, "augmenter.ckpt"), cfg.raf.activation);
  const auto store = load_concept_store(cfg);
  const auto feats = load_features(require_path(cfg, cfg.paths.proposals, "proposals"));
  const auto base = load_table(require_path(cfg, cfg.paths.base, "base"));
  const auto novel = load_table(require_path(cfg, cfg.paths.novel, "novel"));
  const auto test_cats = union_table(base, novel);
  if (params.config.dim != feats.dim() || params.config.k > store.size()) {
    throw Error(ErrorCode::ShapeMismatch, "checkpoint does not fit the proposal/concept data");
  }

  Matrix augmented(feats.count(), feats.dim());
  Matrix logits(feats.count(), test_cats.count());
  for (std::size_t r = 0; r < feats.count(); ++r) {
    const auto retrieved = retrieve(store, feats.row(r), params.config.k);
    const auto v_aug = augment(feats.row(r), retrieved, params);
    std::ranges::copy(v_aug, augmented.row(r).begin());
    std::ranges::copy(aux_logits(v_aug, test_cats), logits.row(r).begin());
  }
  write_matrix_file(output_path(cfg, "augmented.bin"), augmented);
  write_names_file(output_path(cfg, "augmented.names.json"), feats.names());
  write_matrix_file(output_path(cfg, "aux_logits.bin"), logits);
  write_names_file(output_path(cfg, "aux_logits.names.json"), test_cats.names());
  return finish(cfg, "augment",
                {"augmented.bin", "augmented.names.json", "aux_logits.bin", "aux_logits.names.json"},
                {{"proposals", feats.count()},
                 {"test_categories", test_cats.count()},
                 {"parameter_count", params.parameter_count()}});
}

json cmd_ensemble(const PipelineConfig& cfg) {
  const auto base_path = require_path(cfg, cfg.paths.base_logits, "base_logits");
  const auto base = read_matrix_file(base_path);
  const auto aux = read_matrix_file(output_path(cfg, "aux_logits.bin"));
  const std::size_t top = cfg.ensemble.effective_truncate_top();
  const auto final_logits = ensemble_rows(base, aux, cfg.ensemble.mode, top);

  std::vector<std::string> names;
  if (fs::exists(names_path_for(base_path))) names = names_of(base_path);
  json classes = json::array();
  for (std::size_t r = 0; r < final_logits.rows; ++r) {
    const auto c = classify(final_logits.row(r));
    classes.push_back({{"proposal", r},
                       {"class_index", c},
                       {"class_name", c < names.size() ? names[c] : std::to_string(c)}});
  }
  write_matrix_file(output_path(cfg, "final_logits.bin"), final_logits);
  if (!names.empty()) write_names_file(output_path(cfg, "final_logits.names.json"), names);
  write_json(output_path(cfg, "classes.json"), classes);
  return finish(cfg, "ensemble", {"final_logits.bin", "classes.json"},
                {{"mode", to_cli_string(cfg.ensemble.mode)},
                 {"truncate_top", top},
                 {"proposals", final_logits.rows}});
}

json cmd_gradcheck(const GradcheckOptions& opts) {
  AugmenterConfig acfg{opts.dim, opts.ffn_dim, opts.heads, opts.layers, opts.k, Activation::Gelu};
  RafHyperParams hp;
  const auto fixture = make_raf_fixture(acfg, 4, 6, opts.seed);
  const auto report = check_raf_gradients(fixture.batch, fixture.params, fixture.categories, hp);
  json tensors = json::array();
  for (const auto& t : report.tensors) {
    tensors.push_back({{"name", t.name},
                       {"relative_error", t.relative_error},
                       {"max_abs_error", t.max_abs_error}});
  }

  // RAL: per-item gradient vs central differences on a random fixture.
  std::mt19937_64 rng(opts.seed + 1);
  std::normal_distribution<double> normal(0.0, 1.0);
  auto table = [&](const std::string& prefix, std::size_t n) {
    Matrix m(n, opts.dim);
    for (double& x : m.data) x = normal(rng);
    std::vector<std::string> names;
    for (std::size_t i = 0; i < n; ++i) names.push_back(prefix + std::to_string(i));
    return build_table(std::move(names), std::move(m));
  };
  const auto base = table("b", 4);
  const auto vocab = table("v", 30);
  RalHyperParams ral_hp;
  ral_hp.alpha_hard = 0.5;
  std::vector<RalBatchItem> batch;
  for (std::size_t i = 0; i < 6; ++i) {
    Vector e(opts.dim);
    for (double& x : e) x = normal(rng);
    RalBatchItem item{normalized_query(e, opts.dim), base.name(i % base.count()), {}, {}};
    for (auto j : sample_without_replacement(vocab.count(), 10, opts.seed + 10 * i)) {
      (item.hard_n.size() < 5 ? item.hard_n : item.easy_n).push_back(vocab.name(j));
    }
    batch.push_back(std::move(item));
  }
  const auto analytic = ral_total(batch, base, vocab, ral_hp);
  double ral_max = 0.0;
  const double step = 1e-4;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    double diff_sq = 0.0, a_sq = 0.0, n_sq = 0.0;
    for (std::size_t d = 0; d < opts.dim; ++d) {
      auto probe = batch;
      probe[i].box_embedding[d] += step;
      const double plus = ral_total(probe, base, vocab, ral_hp).loss;
      probe[i].box_embedding[d] -= 2 * step;
      const double minus = ral_total(probe, base, vocab, ral_hp).loss;
      const double numeric = (plus - minus) / (2 * step);
      const double a = analytic.items[i].grad[d];
      diff_sq += (a - numeric) * (a - numeric);
      a_sq += a * a;
      n_sq += numeric * numeric;
    }
    const double denom = std::sqrt(std::max(a_sq, n_sq));
    if (denom > 0.0) ral_max = std::max(ral_max, std::sqrt(diff_sq) / denom);
  }

  const bool passed = report.max_relative_error < opts.threshold && ral_max < 1e-5;
  return {{"command", "gradcheck"},
          {"seed", opts.seed},
          {"augmenter",
           {{"dim", opts.dim}, {"k", opts.k}, {"layers", opts.layers}, {"heads", opts.heads},
            {"ffn_dim", opts.ffn_dim}}},
          {"raf_max_relative_error", report.max_relative_error},
          {"raf_tensors", tensors},
          {"ral_max_relative_error", ral_max},
          {"threshold", opts.threshold},
          {"passed", passed}};
}

json cmd_experiment(const PipelineConfig& cfg, const std::string& axis) {
  const auto vocab_path = require_path(cfg, cfg.paths.vocab, "vocab");
  const auto store = build_store(names_of(vocab_path), read_matrix_file(vocab_path),
                                 names_of(require_path(cfg, cfg.paths.novel, "novel")))
                         .table;
  const auto base = load_table(require_path(cfg, cfg.paths.base, "base"));
  const auto boxes = read_boxes_jsonl(require_path(cfg, cfg.paths.boxes, "boxes"));
  constexpr std::size_t kIterations = 5;

  auto sets_for = [&](const EmbeddingTable& vocab, const std::vector<std::size_t>& kept) {
    const std::size_t m = std::min(cfg.ral.m, kept.size() / 2);
    return build_negative_sets(vocab, base, kept, m);
  };
  auto variance_kept = [&](const EmbeddingTable& vocab) {
    return filter_by_rank_variance(compute_ranks(vocab, base), cfg.keep_fraction);
  };
  auto random_subset = [&](std::size_t count, std::size_t keep, std::uint64_t seed) {
    auto idx = sample_without_replacement(count, keep, seed);
    std::ranges::sort(idx);
    return idx;
  };

  json rows = json::array();
  if (axis == "n-selection") {
    const auto sets = sets_for(store, variance_kept(store));
    for (auto mode : {SelectionMode::Random, SelectionMode::Similarity}) {
      const auto s = ral_stats(boxes, sets, base, store, cfg.ral.hp, mode, cfg.seed, kIterations);
      auto row = s.to_json();
      row["selection"] = mode == SelectionMode::Random ? "random" : "similarity";
      row["m"] = sets.m;
      rows.push_back(row);
    }
  } else if (axis == "sampling-scheme") {
    const auto variance = variance_kept(store);
    const std::size_t keep = variance.size();
    // Similarity-based: entries with the highest mean similarity to the base categories.
    const auto sims = kernels::cross_dots(base.vectors(), store.vectors());
    Vector mean_sim(store.count(), 0.0);
    for (std::size_t c = 0; c < sims.rows; ++c) {
      for (std::size_t i = 0; i < sims.cols; ++i) mean_sim[i] += sims(c, i);
    }
    auto similarity = select_top(mean_sim, keep).indices;
    std::ranges::sort(similarity);
    const std::vector<std::pair<const char*, std::vector<std::size_t>>> schemes = {
        {"random", random_subset(store.count(), keep, cfg.seed)},
        {"similarity", similarity},
        {"rank-variance", variance}};
    for (const auto& [name, kept] : schemes) {
      const auto sets = sets_for(store, kept);
      auto row = ral_stats(boxes, sets, base, store, cfg.ral.hp, cfg.ral.selection, cfg.seed,
                           kIterations)
                     .to_json();
      row["scheme"] = name;
      row["kept"] = kept.size();
      rows.push_back(row);
    }
  } else if (axis == "vocab-scale") {
    for (double fraction : {0.4, 0.7, 1.0}) {
      const std::size_t keep = kept_count(store.count(), fraction);
      const auto vocab = store.subset(random_subset(store.count(), keep, cfg.seed));
      const auto sets = sets_for(vocab, variance_kept(vocab));
      auto row = ral_stats(boxes, sets, base, vocab, cfg.ral.hp, cfg.ral.selection, cfg.seed,
                           kIterations)
                     .to_json();
      row["fraction"] = fraction;
      row["store_count"] = vocab.count();
      row["m"] = sets.m;
      rows.push_back(row);
    }
  } else if (axis == "k-sweep") {
    const auto records = read_concepts_jsonl(require_path(cfg, cfg.paths.concepts, "concepts"));
    const auto concepts = ingest_concepts(
        records,
        read_matrix_file(require_path(cfg, cfg.paths.concept_embeddings, "concept_embeddings")),
        names_of(require_path(cfg, cfg.paths.novel, "novel")));
    const auto feats = load_features(require_path(cfg, cfg.paths.proposals, "proposals"));
    const auto train_cats = union_table(base, store);
    for (std::size_t k : {10, 20, 50, 100}) {
      if (k > concepts.size()) continue;
      auto hp = cfg.raf;
      hp.k = k;
      const auto batches =
          make_batches(feats, retrieve_all(concepts, feats, k), cfg.proposals_per_batch);
      const auto result = train(batches, AugmenterParams::initialize(hp.augmenter_config(feats.dim()), cfg.seed),
                                train_cats, hp);
      json row = {{"k", k}, {"iterations", result.trace.size()}};
      if (!result.trace.empty()) {
        row["initial_loss"] = result.trace.front().loss.loss;
        row["final_loss"] = result.trace.back().loss.loss;
      }
      rows.push_back(row);
    }
  } else {
    throw Error(ErrorCode::InvalidArgument,
                "unknown experiment axis '" + axis +
                    "' (expected n-selection, sampling-scheme, k-sweep or vocab-scale)");
  }
  write_json(output_path(cfg, "experiment_" + axis + ".json"), {{"axis", axis}, {"rows", rows}});
  return finish(cfg, "experiment-" + axis, {"experiment_" + axis + ".json"}, {{"rows", rows}});
}

}  // namespace ralf
