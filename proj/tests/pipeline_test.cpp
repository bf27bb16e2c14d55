#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "ralf/augmenter.hpp"
#include "ralf/config.hpp"
#include "ralf/error.hpp"
#include "ralf/pipeline.hpp"
#include "ralf/synth.hpp"

using namespace ralf;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path fresh_dir(const std::string& name) {
  auto p = fs::temp_directory_path() / ("ralf_pipe_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json read_json(const fs::path& p) { return json::parse(slurp(p)); }

int run_cli(const std::string& args, const fs::path& err_file) {
  const std::string cmd =
      std::string(RALF_CLI_PATH) + " " + args + " >/dev/null 2>" + err_file.string();
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

PipelineConfig synth_config(const std::string& name, SynthSpec spec = {}) {
  const auto dir = fresh_dir(name);
  cmd_synth(spec, dir);
  return load_config(dir / "config.json");
}

}  // namespace

TEST(Synth, DeterministicPerSeed) {
  const auto a = fresh_dir("synth_a");
  const auto b = fresh_dir("synth_b");
  SynthSpec spec;
  spec.seed = 11;
  cmd_synth(spec, a);
  cmd_synth(spec, b);
  std::size_t files = 0;
  for (const auto& e : fs::directory_iterator(a)) {
    if (!e.is_regular_file()) continue;
    ++files;
    EXPECT_EQ(slurp(e.path()), slurp(b / e.path().filename())) << e.path().filename();
  }
  EXPECT_GE(files, 10u);
}

TEST(Synth, NoiselessProposalsRecoverTheirCategory) {
  SynthSpec spec;
  spec.noise = 0.0;
  const auto cfg = synth_config("noiseless", spec);
  const auto base = load_table(resolve(cfg, cfg.paths.base));
  const auto props = read_matrix_file(resolve(cfg, cfg.paths.proposals));
  const auto labels =
      read_json(resolve(cfg, cfg.paths.proposals).parent_path() / "proposals.labels.json")
          .get<std::vector<std::string>>();
  ASSERT_EQ(labels.size(), props.rows);
  for (std::size_t r = 0; r < props.rows; ++r) {
    EXPECT_EQ(base.name(pseudo_label(props.row(r), base)), labels[r]);
  }
}

TEST(Pipeline, EndToEnd) {
  auto cfg = synth_config("e2e");
  cmd_build_store(cfg);
  const auto store = load_table(output_path(cfg, "store.bin"));
  EXPECT_EQ(store.count(), 100u);
  const auto excluded = read_json(output_path(cfg, "store.excluded.json"));
  EXPECT_EQ(excluded.size(), 9u);

  cmd_filter_vocab(cfg);
  EXPECT_EQ(read_json(output_path(cfg, "kept.json"))["kept"].size(), 50u);

  cmd_retrieve_negatives(cfg);
  const auto sets = negative_sets_from_json(read_json(output_path(cfg, "negatives.json")));
  EXPECT_EQ(sets.m, cfg.ral.m);
  EXPECT_EQ(sets.categories.size(), 8u);
  EXPECT_EQ(negative_sets_to_json(sets), read_json(output_path(cfg, "negatives.json")));

  const auto ral = cmd_ral_loss(cfg);
  const auto report = read_json(output_path(cfg, "ral_report.json"));
  EXPECT_GE(report["loss"].get<double>(), 0.0);
  EXPECT_EQ(report["items"].size(), 32u);
  EXPECT_EQ(ral["config"], config_to_json(cfg));

  cmd_ingest_concepts(cfg);
  cmd_retrieve_concepts(cfg);
  const auto train = cmd_train_raf(cfg);
  EXPECT_LT(train["stats"]["final_loss"].get<double>(),
            train["stats"]["initial_loss"].get<double>());
  EXPECT_TRUE(fs::exists(output_path(cfg, "augmenter.ckpt")));
  EXPECT_TRUE(fs::exists(output_path(cfg, "loss_trace.csv")));

  cmd_augment(cfg);
  const auto aug = read_matrix_file(output_path(cfg, "augmented.bin"));
  for (std::size_t r = 0; r < aug.rows; ++r) EXPECT_NEAR(std::sqrt(dot(aug.row(r), aug.row(r))), 1.0, 1e-6);

  const auto ens = cmd_ensemble(cfg);
  const auto fin = read_matrix_file(output_path(cfg, "final_logits.bin"));
  const auto base_logits = read_matrix_file(resolve(cfg, cfg.paths.base_logits));
  EXPECT_EQ(fin.rows, base_logits.rows);
  EXPECT_EQ(fin.cols, base_logits.cols);
  EXPECT_EQ(ens["config"]["ensemble"]["effective_truncate_top"], 1);
  for (const char* m : {"build-store", "filter-vocab", "retrieve-negatives", "ral-loss",
                        "ingest-concepts", "retrieve-concepts", "train-raf", "augment",
                        "ensemble"}) {
    EXPECT_TRUE(fs::exists(output_path(cfg, "manifests") / (std::string(m) + ".json"))) << m;
  }
}

TEST(Pipeline, NegativeSetsAtFullScale) {
  SynthSpec spec;
  spec.vocab = 13064;
  auto cfg = synth_config("scale", spec);
  cfg.keep_fraction = 1.0;
  cfg.ral.m = 2000;
  cmd_build_store(cfg);
  cmd_filter_vocab(cfg);
  const auto m = cmd_retrieve_negatives(cfg);
  const auto sets = negative_sets_from_json(read_json(output_path(cfg, "negatives.json")));
  EXPECT_EQ(load_table(output_path(cfg, "store.bin")).count(), 13064u);
  for (const auto& [name, s] : sets.categories) {
    EXPECT_EQ(s.hard.size(), 2000u);
    EXPECT_EQ(s.easy.size(), 2000u);
  }
}

TEST(Config, Defaults) {
  const auto cfg = config_from_json(json{{"seed", 3}}, ".");
  EXPECT_EQ(cfg.seed, 3u);
  EXPECT_EQ(cfg.ral.m, 2000u);
  EXPECT_EQ(cfg.ral.hp.n, 10u);
  EXPECT_EQ(cfg.ral.hp.lambda_easy, 5.0);
  EXPECT_EQ(cfg.keep_fraction, 0.5);
  EXPECT_EQ(cfg.raf.k, 50u);
  EXPECT_EQ(cfg.raf.layers, 6u);
  EXPECT_EQ(cfg.raf.heads, 8u);
  EXPECT_EQ(cfg.raf.ffn_dim, 2048u);
  EXPECT_EQ(cfg.raf.beta_cls, 5.0);
  EXPECT_EQ(cfg.raf.beta_reg, 1.0);
  EXPECT_EQ(cfg.raf.activation, Activation::Gelu);
  EXPECT_EQ(cfg.ensemble.mode, EnsembleMode::AdditiveRaw);
  EXPECT_EQ(cfg.ensemble.effective_truncate_top(), 1u);
  const auto lvis = config_from_json(json{{"seed", 3}, {"ensemble", {{"dataset", "lvis"}}}}, ".");
  EXPECT_EQ(lvis.ensemble.effective_truncate_top(), 20u);
  const auto round = config_from_json(config_to_json(lvis), ".");
  EXPECT_EQ(config_to_json(round), config_to_json(lvis));
  EXPECT_THROW(config_from_json(json::object(), "."), Error);
}

TEST(Config, PathsAndOutDirOverride) {
  const auto dir = fresh_dir("cfgpaths");
  std::ofstream(dir / "c.json") << R"({"seed": 1, "paths": {"base": "x/base.bin"}})";
  const auto cfg = load_config(dir / "c.json");
  EXPECT_EQ(resolve(cfg, cfg.paths.base), dir / "x/base.bin");
  setenv("RALF_OUT_DIR", (dir / "elsewhere").c_str(), 1);
  const auto moved = load_config(dir / "c.json");
  unsetenv("RALF_OUT_DIR");
  EXPECT_EQ(moved.out_dir, dir / "elsewhere");
}

TEST(Cli, TruncateZeroReproducesBaseLogits) {
  auto cfg = synth_config("cli_trunc");
  const auto cfg_path = cfg.base_dir / "config.json";
  const auto err = cfg.base_dir / "err.txt";
  ASSERT_EQ(run_cli("run-all -c " + cfg_path.string(), err), 0) << slurp(err);
  ASSERT_EQ(run_cli("ensemble -c " + cfg_path.string() + " --truncate-top 0", err), 0)
      << slurp(err);
  EXPECT_EQ(slurp(output_path(cfg, "final_logits.bin")), slurp(resolve(cfg, cfg.paths.base_logits)));
}

TEST(Cli, ErrorsAreJson) {
  const auto dir = fresh_dir("cli_err");
  std::ofstream(dir / "c.json") << R"({"paths": {}})";
  const auto err = dir / "err.txt";
  EXPECT_EQ(run_cli("build-store -c " + (dir / "c.json").string(), err), 2);
  const auto j = json::parse(slurp(err));
  EXPECT_TRUE(j.contains("error"));
  EXPECT_TRUE(j.contains("message"));

  std::ofstream(dir / "d.json") << R"({"seed": 1, "paths": {"base": "missing.bin", "vocab": "missing.bin", "novel": "missing.bin"}})";
  EXPECT_EQ(run_cli("build-store -c " + (dir / "d.json").string(), err), 2);
  EXPECT_EQ(json::parse(slurp(err))["error"], "IoError");
}

TEST(Cli, HelpDocumentsTruncationDefaults) {
  const auto dir = fresh_dir("cli_help");
  const std::string cmd = std::string(RALF_CLI_PATH) + " --help > " + (dir / "h.txt").string();
  ASSERT_EQ(std::system(cmd.c_str()), 0);
  const auto help = slurp(dir / "h.txt");
  EXPECT_NE(help.find("1 on COCO"), std::string::npos);
  EXPECT_NE(help.find("20 on LVIS"), std::string::npos);
}

TEST(Gradcheck, CommandPasses) {
  const auto m = cmd_gradcheck({});
  EXPECT_TRUE(m["passed"].get<bool>()) << m.dump();
}

TEST(Experiment, EveryAxisRuns) {
  auto cfg = synth_config("experiments");
  for (const char* axis : {"n-selection", "sampling-scheme", "k-sweep", "vocab-scale"}) {
    const auto m = cmd_experiment(cfg, axis);
    EXPECT_FALSE(m["stats"].empty()) << axis;
  }
  EXPECT_THROW(cmd_experiment(cfg, "nonsense"), Error);
}

TEST(Boxes, EmbeddingsNormalizedOnIngest) {
  const auto cfg = synth_config("boxes");
  const auto boxes = read_boxes_jsonl(resolve(cfg, cfg.paths.boxes));
  ASSERT_EQ(boxes.size(), 32u);
  for (const auto& b : boxes) EXPECT_NEAR(std::sqrt(dot(b.embedding, b.embedding)), 1.0, 1e-12);
  EXPECT_NE(item_seed(1, 0, 0), item_seed(1, 0, 1));
  EXPECT_NE(item_seed(1, 0, 0), item_seed(1, 1, 0));
  EXPECT_EQ(item_seed(1, 2, 3), item_seed(1, 2, 3));
}
