// Acceptance suite: one PASS/FAIL line per criterion. Tolerances and time
// budgets are fixed here. Exit status is the number of failures.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

#include "../oracles.hpp"
#include "../task.hpp"
#include "ralf/augmenter.hpp"
#include "ralf/config.hpp"
#include "ralf/ensemble.hpp"
#include "ralf/gradcheck.hpp"
#include "ralf/negative_retriever.hpp"
#include "ralf/ral_loss.hpp"

using namespace ralf;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr double kRetrievalBudget = 5.0;
constexpr double kRalGradBudget = 10.0;
constexpr double kRafGradBudget = 120.0;
constexpr double kPipelineBudget = 60.0;
constexpr double kRalArithmeticTol = 1e-9;
constexpr double kRalGradTol = 1e-5;
constexpr double kHingeExclusion = 1e-6;
constexpr double kIdentityTol = 1e-6;
constexpr double kRafGradTol = 1e-4;
constexpr double kTrainRatio = 0.5;
constexpr double kTrainLearningRate = 1e-2;
constexpr std::size_t kTrainIterations = 500;

struct Outcome {
  bool pass = true;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, x);
  return buf;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int sh(const std::string& cmd) {
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string cli() { return RALF_CLI_PATH; }

fs::path scratch(const std::string& name) {
  auto p = fs::temp_directory_path() / ("ralf_accept_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

Matrix from_rows(const std::vector<std::vector<double>>& rows) {
  Matrix m(rows.size(), rows[0].size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t c = 0; c < rows[r].size(); ++c) m(r, c) = rows[r][c];
  }
  return m;
}

// ---------------------------------------------------------------------------

Outcome retrieval_oracle() {
  std::mt19937_64 rng(20240101);
  const auto t0 = Clock::now();
  int mismatches = 0;
  for (int f = 0; f < 200; ++f) {
    const std::size_t count = 1 + rng() % 1000;
    const std::size_t dim = 1 + rng() % 64;
    const auto table = oracle::random_table(count, dim, rng);
    const auto q = oracle::random_unit(dim, rng);
    const std::size_t k = 1 + rng() % count;
    const auto scores = oracle::all_dots(table.vectors(), q);
    mismatches += topk(table, q, k).indices != oracle::full_sort_top(scores, k);
    mismatches += bottomk(table, q, k).indices != oracle::full_sort_bottom(scores, k);
  }
  const double secs = seconds_since(t0);
  return {mismatches == 0 && secs < kRetrievalBudget,
          std::to_string(mismatches) + " mismatches over 200 fixtures, " + fmt("%.2f s", secs)};
}

Outcome rank_oracle() {
  std::mt19937_64 rng(7);
  std::normal_distribution<double> normal;
  int mismatches = 0, tie_groups = 0, tie_failures = 0;
  for (int f = 0; f < 50; ++f) {
    const std::size_t b = 1 + rng() % 20;
    const std::size_t v = 1 + rng() % 200;
    const std::size_t dim = 2 + rng() % 14;
    Matrix vm(v, dim);
    for (double& x : vm.data) x = normal(rng);
    // Every fourth row repeats its predecessor so ties occur in every fixture.
    for (std::size_t i = 1; i < v; i += 4) {
      for (std::size_t d = 0; d < dim; ++d) vm(i, d) = vm(i - 1, d);
    }
    std::vector<std::string> names;
    for (std::size_t i = 0; i < v; ++i) names.push_back("v" + std::to_string(i));
    const auto vocab = build_table(names, vm);
    const auto base = oracle::random_table(b, dim, rng, "b");
    const auto got = compute_ranks(vocab, base);
    const auto want = oracle::ranks_double_loop(base.vectors(), vocab.vectors());
    for (std::size_t c = 0; c < b; ++c) {
      for (std::size_t i = 0; i < v; ++i) mismatches += got.rank(c, i) != want[c][i];
      for (std::size_t i = 1; i < v; i += 4) {
        ++tie_groups;
        tie_failures += got.rank(c, i) != got.rank(c, i - 1);
      }
    }
  }
  return {mismatches == 0 && tie_failures == 0 && tie_groups > 0,
          std::to_string(mismatches) + " rank mismatches, " + std::to_string(tie_failures) +
              "/" + std::to_string(tie_groups) + " tied pairs not sharing a rank"};
}

Outcome ral_arithmetic() {
  Outcome out;
  double worst = 0.0;
  auto check = [&](double got, double want) { worst = std::max(worst, std::abs(got - want)); };

  const auto coco = ral_preset("oadp", "coco");
  const auto lvis = ral_preset("oadp", "lvis");
  out.pass &= coco.alpha_hard == 0 && coco.alpha_easy == 1 && coco.lambda_hard == 1 &&
              coco.lambda_easy == 5 && coco.beta_hard == 1 && coco.beta_easy == 1 &&
              lvis.lambda_easy == 10;

  check(hard_loss(0.7, 0.3, coco), 0.4);
  check(easy_loss(0.1, 0.9, coco), 0.6);

  // e_b = (0.8, 0.6), T(y) = (1, 0), hard = (0.6, 0.8), easy = (0, 1):
  // sim_gt 0.8, U_hard 0.96, U_easy 0.6.
  const auto base = build_table({"y"}, from_rows({{1, 0}}));
  const auto vocab = build_table({"h", "e"}, from_rows({{0.6, 0.8}, {0, 1}}));
  const std::vector<RalBatchItem> batch{{{0.8, 0.6}, "y", {"h"}, {"e"}}};
  const auto rc = ral_total(batch, base, vocab, coco);
  check(rc.items[0].loss_hard, 0.16);
  check(rc.items[0].loss_easy, 3.04);
  check(rc.loss, 3.2);
  check(rc.items[0].grad[0], -1.0);
  check(rc.items[0].grad[1], 5.0);
  const auto rl = ral_total(batch, base, vocab, lvis);
  check(rl.items[0].loss_easy, 6.04);
  check(rl.loss, 6.2);

  // Inactive hinges: exact zeros.
  bool zeros = hard_loss(0.7, 1.0, coco) == 0.0 && easy_loss(-0.1, 0.2, lvis) == 0.0;
  const auto far = build_table({"h", "e"}, from_rows({{0, 1}, {-1, 0}}));
  const auto ri = ral_total({{{1, 0}, "y", {"h"}, {"e"}}}, base, far, coco);
  zeros &= ri.loss == 0.0 && ri.items[0].grad == Vector{0.0, 0.0};

  out.pass &= worst <= kRalArithmeticTol && zeros;
  out.detail = "max abs error " + fmt("%.2e", worst) + (zeros ? ", inactive hinges exactly 0" : ", inactive hinge nonzero");
  return out;
}

Outcome ral_gradcheck() {
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const auto t0 = Clock::now();
  double worst = 0.0;
  int fixtures = 0, skipped = 0;
  while (fixtures < 100) {
    const std::size_t dim = 8 + rng() % 57;
    const auto base = oracle::random_table(4, dim, rng, "b");
    const auto vocab = oracle::random_table(40, dim, rng, "v");
    RalHyperParams hp = ral_preset(u(rng) < 0.5 ? "oadp" : "ocovd", u(rng) < 0.5 ? "coco" : "lvis");
    std::vector<RalBatchItem> batch;
    const std::size_t items = 1 + rng() % 6;
    for (std::size_t b = 0; b < items; ++b) {
      RalBatchItem it;
      it.box_embedding = oracle::random_unit(dim, rng);
      it.label = "b" + std::to_string(rng() % 4);
      for (int i = 0; i < 10; ++i) {
        it.hard_n.push_back("v" + std::to_string(rng() % 20));
        it.easy_n.push_back("v" + std::to_string(20 + rng() % 20));
      }
      batch.push_back(std::move(it));
    }
    const auto r = ral_total(batch, base, vocab, hp);
    bool near = false;
    for (const auto& it : r.items) {
      near |= std::abs(hp.lambda_hard * it.u_hard - it.sim_gt + hp.alpha_hard) < kHingeExclusion;
      near |= std::abs(hp.lambda_easy * it.u_easy - it.u_hard + hp.alpha_easy) < kHingeExclusion;
    }
    if (near) {
      ++skipped;
      continue;
    }
    const double h = 1e-4;
    for (std::size_t b = 0; b < items; ++b) {
      std::vector<double> numeric(dim);
      for (std::size_t d = 0; d < dim; ++d) {
        const double keep = batch[b].box_embedding[d];
        batch[b].box_embedding[d] = keep + h;
        const double up = ral_total(batch, base, vocab, hp).loss;
        batch[b].box_embedding[d] = keep - h;
        const double down = ral_total(batch, base, vocab, hp).loss;
        batch[b].box_embedding[d] = keep;
        numeric[d] = (up - down) / (2 * h);
      }
      worst = std::max(worst, oracle::relative_error(r.items[b].grad, numeric));
    }
    ++fixtures;
  }
  const double secs = seconds_since(t0);
  return {worst < kRalGradTol && secs < kRalGradBudget,
          "max relative error " + fmt("%.2e", worst) + " over 100 fixtures (" +
              std::to_string(skipped) + " near-hinge skipped), " + fmt("%.2f s", secs)};
}

Outcome augmenter_identity() {
  std::mt19937_64 rng(5);
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    const std::size_t dim = 2 * (1 + rng() % 16);
    AugmenterConfig cfg;
    cfg.dim = dim;
    cfg.heads = 2;
    cfg.ffn_dim = 4 * dim;
    cfg.layers = 1 + rng() % 6;
    cfg.k = 1 + rng() % 10;
    auto p = AugmenterParams::initialize(cfg, i);
    p.proj_w = Matrix(dim, dim);
    for (std::size_t d = 0; d < dim; ++d) p.proj_w(d, d) = 1.0;
    std::fill(p.proj_b.begin(), p.proj_b.end(), 0.0);
    std::fill(p.query_seed.begin(), p.query_seed.end(), 0.0);
    for (auto& l : p.layers) {
      std::fill(l.wo.data.begin(), l.wo.data.end(), 0.0);
      std::fill(l.ffn_w2.data.begin(), l.ffn_w2.data.end(), 0.0);
      std::fill(l.ffn_b2.begin(), l.ffn_b2.end(), 0.0);
    }
    RetrievedConcepts rc;
    rc.embeddings = Matrix(cfg.k, dim);
    for (std::size_t j = 0; j < cfg.k; ++j) {
      const auto h = oracle::random_unit(dim, rng);
      std::copy(h.begin(), h.end(), rc.embeddings.row(j).begin());
      rc.scores.push_back(std::uniform_real_distribution<double>(-1, 1)(rng));
    }
    const auto v = oracle::random_unit(dim, rng);
    const auto out = augment(v, rc, p);
    for (std::size_t d = 0; d < dim; ++d) worst = std::max(worst, std::abs(out[d] - v[d]));
  }
  return {worst <= kIdentityTol, "max |v_aug - v_r| " + fmt("%.2e", worst) + " over 100 inputs"};
}

Outcome raf_gradcheck() {
  const auto t0 = Clock::now();
  double worst = 0.0;
  std::string worst_tensor;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto cfg = task::small_config();  // default activation
    const auto f = make_raf_fixture(cfg, 3, 5, seed);
    RafHyperParams hp;
    hp.k = cfg.k;
    hp.layers = cfg.layers;
    hp.heads = cfg.heads;
    hp.ffn_dim = cfg.ffn_dim;
    hp.activation = cfg.activation;
    const auto report = check_raf_gradients(f.batch, f.params, f.categories, hp, 1e-4);
    for (const auto& t : report.tensors) {
      if (t.relative_error > worst) {
        worst = t.relative_error;
        worst_tensor = t.name;
      }
    }
  }
  const double secs = seconds_since(t0);
  return {worst < kRafGradTol && secs < kRafGradBudget,
          "max relative error " + fmt("%.2e", worst) + " (" + worst_tensor + ") over 50 seeds, " +
              fmt("%.2f s", secs)};
}

Outcome raf_training() {
  const auto cfg = task::small_config();
  const auto t = task::training_task(cfg, 4, 32, 7);
  RafHyperParams hp;
  hp.k = cfg.k;
  hp.layers = cfg.layers;
  hp.heads = cfg.heads;
  hp.ffn_dim = cfg.ffn_dim;
  hp.learning_rate = kTrainLearningRate;
  hp.iterations = kTrainIterations;
  const auto r = train({t.batch}, t.params, t.categories, hp);
  bool strict = true;
  for (std::size_t i = 1; i < 10; ++i) strict &= r.trace[i].loss.loss < r.trace[i - 1].loss.loss;
  const double ratio = r.trace.back().loss.loss / r.trace.front().loss.loss;
  return {strict && ratio < kTrainRatio,
          std::string(strict ? "strictly decreasing" : "not monotone") + " over first 10, loss " +
              fmt("%.4f", r.trace.front().loss.loss) + " -> " + fmt("%.4f", r.trace.back().loss.loss) +
              " (ratio " + fmt("%.3f", ratio) + ") after 500 iterations"};
}

Outcome ensemble_contracts() {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> normal(0, 3);
  bool identity = true, untouched = true;
  for (int f = 0; f < 100; ++f) {
    const std::size_t n = 1 + rng() % 60;
    Vector base(n), aux(n);
    for (auto& x : base) x = normal(rng);
    for (auto& x : aux) x = normal(rng);
    const std::size_t k = rng() % (n + 1);
    const auto top = oracle::full_sort_top(aux, k);
    std::vector<bool> sel(n, false);
    for (auto i : top) sel[i] = true;
    for (auto mode : {EnsembleMode::AdditiveSigmoid, EnsembleMode::MultiplicativeDetpro,
                      EnsembleMode::AdditiveRaw}) {
      identity &= ensemble(base, aux, mode, 0) == base;
      const auto fin = ensemble(base, aux, mode, k);
      for (std::size_t i = 0; i < n; ++i) {
        if (!sel[i]) untouched &= std::memcmp(&fin[i], &base[i], sizeof(double)) == 0;
      }
    }
  }
  const auto dz = ensemble(Vector{3.7, 1.0}, Vector{std::log(1.0 / 3.0), -9.0},
                           EnsembleMode::MultiplicativeDetpro, 1);
  const bool detpro_zero = std::abs(dz[0]) < 1e-15 && dz[1] == 1.0;

  const auto dir = scratch("help");
  bool help = sh(cli() + " --help > " + (dir / "help.txt").string()) == 0;
  const auto text = slurp(dir / "help.txt");
  help &= text.find("1 on COCO") != std::string::npos && text.find("20 on LVIS") != std::string::npos;
  help &= kCocoTruncateTop == 1 && kLvisTruncateTop == 20;

  std::string detail;
  detail += identity ? "truncate 0 identity" : "truncate 0 NOT identity";
  detail += detpro_zero ? "; DetPro zero at ln(1/3)" : "; DetPro zero FAILED";
  detail += untouched ? "; non-selected bit-identical" : "; non-selected changed";
  detail += help ? "; --help shows 1/20" : "; --help missing defaults";
  return {identity && detpro_zero && untouched && help, detail};
}

Outcome end_to_end_determinism() {
  const auto t0 = Clock::now();
  const auto a = scratch("e2e_a");
  const auto b = scratch("e2e_b");
  bool ok = true;
  for (const auto& d : {a, b}) {
    ok &= sh(cli() + " synth --out " + d.string() + " --seed 1234 > /dev/null") == 0;
    ok &= sh(cli() + " run-all -c " + (d / "config.json").string() + " > /dev/null") == 0;
  }
  const double secs = seconds_since(t0);
  std::size_t files = 0, differing = 0;
  for (const auto& e : fs::recursive_directory_iterator(a)) {
    if (!e.is_regular_file()) continue;
    ++files;
    differing += slurp(e.path()) != slurp(b / fs::relative(e.path(), a));
  }
  const bool complete = fs::exists(a / "out" / "final_logits.bin");
  return {ok && complete && differing == 0 && secs < kPipelineBudget,
          std::to_string(files) + " files, " + std::to_string(differing) + " differ; two runs " +
              fmt("%.2f s", secs)};
}

Outcome config_fidelity() {
  bool shipped = true;
  const PipelineConfig defaults;
  shipped &= defaults.ral.m == 2000 && defaults.ral.hp.n == 10;
  shipped &= defaults.raf.k == 50 && defaults.raf.layers == 6 && defaults.raf.heads == 8 &&
             defaults.raf.ffn_dim == 2048 && defaults.raf.beta_cls == 5.0 &&
             defaults.raf.beta_reg == 1.0;
  const AugmenterConfig acfg;
  shipped &= acfg.k == 50 && acfg.layers == 6 && acfg.heads == 8 && acfg.ffn_dim == 2048;

  // A config naming only the seed and input paths, run through the CLI.
  const auto dir = scratch("fidelity");
  bool echoed = sh(cli() + " synth --out " + dir.string() + " --seed 5 > /dev/null") == 0;
  auto generated = json::parse(slurp(dir / "config.json"));
  json minimal{{"seed", 5}, {"paths", generated["paths"]}};
  std::ofstream(dir / "minimal.json") << minimal.dump(2);
  echoed &= sh(cli() + " build-store -c " + (dir / "minimal.json").string() + " > /dev/null") == 0;
  const auto manifest = json::parse(slurp(dir / "out" / "manifests" / "build-store.json"));
  const auto& c = manifest["config"];
  echoed &= c["ral"]["m"] == 2000 && c["ral"]["n"] == 10 && c["raf"]["k"] == 50 &&
            c["raf"]["layers"] == 6 && c["raf"]["heads"] == 8 && c["raf"]["ffn_dim"] == 2048 &&
            c["raf"]["beta_cls"] == 5.0 && c["raf"]["beta_reg"] == 1.0;
  return {shipped && echoed, std::string(shipped ? "shipped defaults match" : "shipped defaults differ") +
                                 (echoed ? "; manifest echoes m=2000 n=10 k=50 L=6 heads=8 ffn=2048 beta 5/1"
                                         : "; manifest echo wrong")};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"retrieval-oracle", retrieval_oracle},
      {"rank-oracle", rank_oracle},
      {"ral-loss-arithmetic", ral_arithmetic},
      {"ral-gradient-check", ral_gradcheck},
      {"augmenter-identity", augmenter_identity},
      {"raf-gradient-check", raf_gradcheck},
      {"raf-training-sanity", raf_training},
      {"ensemble-contracts", ensemble_contracts},
      {"end-to-end-determinism", end_to_end_determinism},
      {"config-fidelity", config_fidelity},
  };
  int failures = 0;
  for (const auto& [name, fn] : criteria) {
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failures += !o.pass;
    std::printf("%s %-24s %s\n", o.pass ? "PASS" : "FAIL", name.c_str(), o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failures,
              criteria.size());
  return failures;
}
