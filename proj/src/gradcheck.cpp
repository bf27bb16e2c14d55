#include "ralf/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace ralf {

GradcheckReport check_raf_gradients(const RafBatch& batch, const AugmenterParams& params,
                                    const EmbeddingTable& categories, const RafHyperParams& hp,
                                    double step) {
  const auto analytic = raf_grad(batch, params, categories, hp);
  const auto analytic_tensors = analytic.grad.tensors();
  const auto names = params.tensor_names();

  AugmenterParams probe = params;
  auto probe_tensors = probe.tensors();
  GradcheckReport report;
  for (std::size_t t = 0; t < probe_tensors.size(); ++t) {
    TensorCheck tc{names[t]};
    double diff_sq = 0.0, a_sq = 0.0, n_sq = 0.0;
    for (std::size_t i = 0; i < probe_tensors[t].size(); ++i) {
      double& x = probe_tensors[t][i];
      const double saved = x;
      x = saved + step;
      const double plus = raf_loss(batch, probe, categories, hp).loss;
      x = saved - step;
      const double minus = raf_loss(batch, probe, categories, hp).loss;
      x = saved;
      const double numeric = (plus - minus) / (2.0 * step);
      const double a = analytic_tensors[t][i];
      tc.max_abs_error = std::max(tc.max_abs_error, std::abs(a - numeric));
      diff_sq += (a - numeric) * (a - numeric);
      a_sq += a * a;
      n_sq += numeric * numeric;
    }
    const double denom = std::max(std::sqrt(std::max(a_sq, n_sq)), 1e-12);
    tc.relative_error = std::sqrt(diff_sq) / denom;
    report.max_relative_error = std::max(report.max_relative_error, tc.relative_error);
    report.tensors.push_back(std::move(tc));
  }
  return report;
}

RafFixture make_raf_fixture(const AugmenterConfig& cfg, std::size_t proposals,
                            std::size_t categories, std::uint64_t seed) {
  std::mt19937_64 rng(seed ^ 0x5EEDF1C5ULL);
  std::normal_distribution<double> normal(0.0, 1.0);
  auto unit_rows = [&](std::size_t rows) {
    Matrix m(rows, cfg.dim);
    for (double& x : m.data) x = normal(rng);
    for (std::size_t r = 0; r < rows; ++r) {
      auto row = m.row(r);
      const double n = std::sqrt(dot(row, row));
      for (double& x : row) x /= n;
    }
    return m;
  };

  RafFixture f;
  f.params = AugmenterParams::initialize(cfg, seed);
  // Larger-than-default embeddings so every tensor carries real gradient signal.
  for (auto t : {std::span<double>(f.params.query_seed), std::span<double>(f.params.pos_embed.data),
                 std::span<double>(f.params.type0), std::span<double>(f.params.type1)}) {
    for (double& x : t) x = 0.3 * normal(rng);
  }
  for (auto& l : f.params.layers) {
    for (double& x : l.ffn_b1) x = 0.1 * normal(rng);
    for (double& x : l.ffn_b2) x = 0.1 * normal(rng);
  }
  for (double& x : f.params.proj_b) x = 0.1 * normal(rng);

  auto cat_rows = unit_rows(categories);
  std::vector<std::string> names;
  for (std::size_t c = 0; c < categories; ++c) names.push_back("c" + std::to_string(c));
  f.categories = build_table(std::move(names), std::move(cat_rows));

  f.batch.visual_features = unit_rows(proposals);
  for (std::size_t r = 0; r < proposals; ++r) {
    RetrievedConcepts rc;
    rc.embeddings = unit_rows(cfg.k);
    for (std::size_t i = 0; i < cfg.k; ++i) {
      rc.scores.push_back(std::uniform_real_distribution<double>(-1.0, 1.0)(rng));
      rc.texts.push_back("concept" + std::to_string(i));
      rc.indices.push_back(i);
    }
    std::ranges::sort(rc.scores, std::greater<>());
    f.batch.retrieved.push_back(std::move(rc));
  }
  return f;
}

}  // namespace ralf
