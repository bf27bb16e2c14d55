// Command-line front end: one subcommand per pipeline stage.

#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "ralf/config.hpp"
#include "ralf/error.hpp"
#include "ralf/pipeline.hpp"

namespace {

constexpr const char* kFooter = R"(Defaults:
  RAL      m=2000, n=10, keep_fraction=0.5, selection=random
           alpha_hard=0 alpha_easy=1 lambda_hard=1 lambda_easy=5 beta_hard=1 beta_easy=1
  RAL presets (alpha_hard alpha_easy lambda_hard lambda_easy beta_hard beta_easy):
           OADP               COCO  0 1 1  5 1 1
           OADP               LVIS  0 1 1 10 1 1
           Object-Centric-OVD COCO  0 1 1 10 1 1
           Object-Centric-OVD LVIS  0 1 1  5 1 1
           DetPro             LVIS  0 1 1 10 1 1
  RAF      k=50, layers=6, heads=8, ffn_dim=2048, activation=gelu,
           beta_cls=5.0, beta_reg=1.0, learning_rate=0.01, iterations=100
  Ensemble --truncate-top defaults to 1 on COCO and 20 on LVIS (--dataset).
Environment: RALF_OUT_DIR overrides the config's out_dir.)";

void print_error(ralf::ErrorCode code, const std::string& message) {
  std::cerr << nlohmann::json{{"error", std::string(ralf::to_string(code))}, {"message", message}}.dump()
            << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ralf: retrieval-augmented losses and visual features for open-vocabulary detection"};
  app.footer(kFooter);
  app.require_subcommand(1);

  std::string config_path;
  auto with_config = [&](CLI::App* sub) {
    sub->add_option("-c,--config", config_path, "Pipeline config (JSON)")
        ->required()
        ->check(CLI::ExistingFile);
    return sub;
  };

  ralf::SynthSpec synth;
  std::string synth_dir;
  auto* synth_cmd = app.add_subcommand("synth", "Generate clustered synthetic fixtures");
  synth_cmd->add_option("--out", synth_dir, "Output directory")->required();
  synth_cmd->add_option("--seed", synth.seed, "Random seed")->required();
  synth_cmd->add_option("--base", synth.base, "Base categories")->capture_default_str();
  synth_cmd->add_option("--novel", synth.novel, "Novel categories")->capture_default_str();
  synth_cmd->add_option("--vocab", synth.vocab, "Vocabulary entries")->capture_default_str();
  synth_cmd->add_option("--dim", synth.dim, "Embedding dimension")->capture_default_str();
  synth_cmd->add_option("--boxes", synth.boxes, "Ground-truth boxes")->capture_default_str();
  synth_cmd->add_option("--proposals", synth.proposals, "Region proposals")->capture_default_str();
  synth_cmd->add_option("--concepts", synth.concepts, "Concept records")->capture_default_str();
  synth_cmd->add_option("--noise", synth.noise, "Cluster noise")->capture_default_str();
  synth_cmd->add_option("--raf-iterations", synth.raf_iterations,
                        "RAF iterations written to config.json")
      ->capture_default_str();

  auto* build_store = with_config(app.add_subcommand("build-store", "Filter the raw vocabulary into the store"));
  auto* filter_vocab = with_config(app.add_subcommand("filter-vocab", "Rank-variance filtering of the store"));
  auto* negatives = with_config(app.add_subcommand("retrieve-negatives", "Hard/easy negative sets per base category"));
  std::uint64_t iteration = 0;
  auto* ral_loss = with_config(app.add_subcommand("ral-loss", "RAL losses and gradients for the box batch"));
  ral_loss->add_option("--iteration", iteration, "Iteration index for negative sampling")
      ->capture_default_str();
  auto* ingest = with_config(app.add_subcommand("ingest-concepts", "Build the concept store"));
  auto* retrieve = with_config(app.add_subcommand("retrieve-concepts", "Top-k concepts per proposal"));
  auto* train = with_config(app.add_subcommand("train-raf", "Train the augmenter"));
  auto* augment = with_config(app.add_subcommand("augment", "Augmented features and auxiliary logits"));

  std::optional<std::string> ensemble_mode;
  std::optional<std::size_t> truncate_top;
  std::optional<std::string> dataset;
  auto* ensemble = with_config(app.add_subcommand("ensemble", "Fuse baseline and auxiliary logits"));
  ensemble->add_option("--ensemble-mode", ensemble_mode,
                       "ocovd: base+sigmoid(aux); detpro: base*(sigmoid(aux)-0.25); oadp: base+aux")
      ->check(CLI::IsMember({"ocovd", "detpro", "oadp"}));
  ensemble->add_option("--truncate-top", truncate_top,
                       "Auxiliary entries used per proposal (default: 1 on COCO, 20 on LVIS)");
  ensemble->add_option("--dataset", dataset, "Selects the truncate-top default")
      ->check(CLI::IsMember({"coco", "lvis"}));

  ralf::GradcheckOptions gc;
  auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference check of analytic gradients");
  gradcheck->add_option("--seed", gc.seed, "Fixture seed")->capture_default_str();
  gradcheck->add_option("--dim", gc.dim)->capture_default_str();
  gradcheck->add_option("--k", gc.k)->capture_default_str();
  gradcheck->add_option("--layers", gc.layers)->capture_default_str();
  gradcheck->add_option("--heads", gc.heads)->capture_default_str();
  gradcheck->add_option("--ffn-dim", gc.ffn_dim)->capture_default_str();
  gradcheck->add_option("--threshold", gc.threshold)->capture_default_str();

  std::string axis;
  auto* experiment = with_config(app.add_subcommand("experiment", "Desk-scale ablation over one axis"));
  experiment->add_option("--axis", axis)
      ->required()
      ->check(CLI::IsMember({"n-selection", "sampling-scheme", "k-sweep", "vocab-scale"}));

  auto* run_all = with_config(app.add_subcommand("run-all", "Every pipeline stage in order"));

  CLI11_PARSE(app, argc, argv);

  try {
    nlohmann::json result;
    if (*synth_cmd) {
      result = ralf::cmd_synth(synth, synth_dir);
    } else if (*gradcheck) {
      result = ralf::cmd_gradcheck(gc);
      std::cout << result.dump(2) << '\n';
      std::cout << "max relative error: raf " << result["raf_max_relative_error"].get<double>()
                << ", ral " << result["ral_max_relative_error"].get<double>() << '\n';
      return result["passed"].get<bool>() ? 0 : 1;
    } else {
      auto cfg = ralf::load_config(config_path);
      if (ensemble_mode) cfg.ensemble.mode = ralf::ensemble_mode_from_string(*ensemble_mode);
      if (dataset) cfg.ensemble.dataset = *dataset;
      if (truncate_top) cfg.ensemble.truncate_top = *truncate_top;

      if (*build_store) result = ralf::cmd_build_store(cfg);
      else if (*filter_vocab) result = ralf::cmd_filter_vocab(cfg);
      else if (*negatives) result = ralf::cmd_retrieve_negatives(cfg);
      else if (*ral_loss) result = ralf::cmd_ral_loss(cfg, iteration);
      else if (*ingest) result = ralf::cmd_ingest_concepts(cfg);
      else if (*retrieve) result = ralf::cmd_retrieve_concepts(cfg);
      else if (*train) result = ralf::cmd_train_raf(cfg);
      else if (*augment) result = ralf::cmd_augment(cfg);
      else if (*ensemble) result = ralf::cmd_ensemble(cfg);
      else if (*experiment) result = ralf::cmd_experiment(cfg, axis);
      else if (*run_all) {
        result = nlohmann::json::array();
        result.push_back(ralf::cmd_build_store(cfg)["stats"]);
        result.push_back(ralf::cmd_filter_vocab(cfg)["stats"]);
        result.push_back(ralf::cmd_retrieve_negatives(cfg)["stats"]);
        result.push_back(ralf::cmd_ral_loss(cfg, iteration)["stats"]);
        result.push_back(ralf::cmd_ingest_concepts(cfg)["stats"]);
        result.push_back(ralf::cmd_retrieve_concepts(cfg)["stats"]);
        result.push_back(ralf::cmd_train_raf(cfg)["stats"]);
        result.push_back(ralf::cmd_augment(cfg)["stats"]);
        result.push_back(ralf::cmd_ensemble(cfg)["stats"]);
      }
    }
    std::cout << result.dump(2) << '\n';
  } catch (const ralf::Error& e) {
    print_error(e.code(), e.what());
    return 2;
  } catch (const std::exception& e) {
    print_error(ralf::ErrorCode::IoError, e.what());
    return 2;
  }
  return 0;
}
