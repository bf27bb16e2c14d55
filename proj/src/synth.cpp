#include "ralf/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ralf/concept_store.hpp"
#include "ralf/config.hpp"
#include "ralf/embedding_store.hpp"
#include "ralf/error.hpp"

namespace ralf {

namespace {

std::string numbered(const char* prefix, std::size_t i, int width) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%s_%0*zu", prefix, width, i);
  return buf;
}

class Sampler {
 public:
  explicit Sampler(std::uint64_t seed) : rng_(seed) {}

  Vector unit(std::size_t dim) {
    Vector v(dim);
    double sq = 0.0;
    do {
      sq = 0.0;
      for (double& x : v) {
        x = normal_(rng_);
        sq += x * x;
      }
    } while (sq == 0.0);
    for (double& x : v) x /= std::sqrt(sq);
    return v;
  }

  // center + spread * g / sqrt(dim), renormalized.
  Vector around(const Vector& center, double spread) {
    Vector v = center;
    if (spread > 0.0) {
      const double s = spread / std::sqrt(static_cast<double>(center.size()));
      for (double& x : v) x += s * normal_(rng_);
    }
    double sq = 0.0;
    for (double x : v) sq += x * x;
    for (double& x : v) x /= std::sqrt(sq);
    return v;
  }

  std::size_t index(std::size_t n) {
    return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng_);
  }
  double uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(rng_); }
  double gauss() { return normal_(rng_); }

 private:
  std::mt19937_64 rng_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

Matrix stack(const std::vector<Vector>& rows, std::size_t dim) {
  Matrix m(rows.size(), dim);
  for (std::size_t r = 0; r < rows.size(); ++r) std::ranges::copy(rows[r], m.row(r).begin());
  return m;
}

void write_named(const std::filesystem::path& path, const std::vector<std::string>& names,
                 const std::vector<Vector>& rows, std::size_t dim) {
  write_matrix_file(path, stack(rows, dim));
  write_names_file(names_path_for(path), names);
}

}  // namespace

void write_synthetic_fixture(const SynthSpec& spec, const std::filesystem::path& dir) {
  if (spec.base == 0 || spec.vocab == 0 || spec.dim == 0 || spec.proposals == 0 ||
      spec.boxes == 0 || spec.concepts == 0) {
    throw Error(ErrorCode::InvalidArgument, "synthetic sizes must be positive");
  }
  std::filesystem::create_directories(dir);
  Sampler s(spec.seed);
  const std::size_t dim = spec.dim;

  std::vector<std::string> base_names, novel_names;
  std::vector<Vector> base_rows, novel_rows;
  for (std::size_t i = 0; i < spec.base; ++i) {
    base_names.push_back(numbered("base", i, 2));
    base_rows.push_back(s.unit(dim));
  }
  for (std::size_t i = 0; i < spec.novel; ++i) {
    novel_names.push_back(numbered("novel", i, 2));
    novel_rows.push_back(s.unit(dim));
  }

  // Vocabulary: mostly perturbed category centers, some fresh directions.
  std::vector<std::string> vocab_names;
  std::vector<Vector> vocab_rows;
  const std::size_t centers = spec.base + spec.novel;
  for (std::size_t i = 0; i < spec.vocab; ++i) {
    vocab_names.push_back(numbered("vocab", i, 4));
    if (s.uniform() < 0.8) {
      const auto c = s.index(centers);
      const auto& center = c < spec.base ? base_rows[c] : novel_rows[c - spec.base];
      vocab_rows.push_back(s.around(center, 0.8 + 0.8 * s.uniform()));
    } else {
      vocab_rows.push_back(s.unit(dim));
    }
  }
  const std::size_t dups = std::max<std::size_t>(1, spec.vocab / 20);
  for (std::size_t i = 0; i < dups; ++i) {
    const auto src = s.index(spec.vocab);
    std::string upper = vocab_names[src];
    for (char& c : upper) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    vocab_names.push_back(upper);
    vocab_rows.push_back(s.around(vocab_rows[src], 0.05));
  }
  for (std::size_t i = 0; i < spec.novel; ++i) {
    std::string name = novel_names[i];
    name[0] = 'N';
    vocab_names.push_back(name);
    vocab_rows.push_back(s.around(novel_rows[i], 0.05));
  }

  write_named(dir / "base.bin", base_names, base_rows, dim);
  write_named(dir / "novel.bin", novel_names, novel_rows, dim);
  write_named(dir / "vocab.bin", vocab_names, vocab_rows, dim);

  // Ground-truth boxes.
  {
    std::vector<Vector> rows;
    std::ofstream jsonl(dir / "boxes.jsonl", std::ios::trunc);
    for (std::size_t i = 0; i < spec.boxes; ++i) {
      const auto c = s.index(spec.base);
      rows.push_back(s.around(base_rows[c], spec.noise));
      jsonl << nlohmann::json{{"label", base_names[c]},
                              {"embedding_ref", {{"file", "boxes.bin"}, {"row", i}}}}
                   .dump()
            << '\n';
    }
    write_matrix_file(dir / "boxes.bin", stack(rows, dim));
  }

  // Proposal features drawn around base centers, plus baseline logits over
  // base + novel categories.
  std::vector<std::string> test_names = base_names;
  test_names.insert(test_names.end(), novel_names.begin(), novel_names.end());
  {
    std::vector<Vector> rows;
    std::vector<std::string> names, labels;
    Matrix logits(spec.proposals, test_names.size());
    for (std::size_t i = 0; i < spec.proposals; ++i) {
      const auto c = s.index(spec.base);
      rows.push_back(s.around(base_rows[c], spec.noise));
      names.push_back(numbered("proposal", i, 4));
      labels.push_back(base_names[c]);
      for (std::size_t t = 0; t < test_names.size(); ++t) {
        const auto& center = t < spec.base ? base_rows[t] : novel_rows[t - spec.base];
        logits(i, t) = 4.0 * dot(rows.back(), center) + 0.5 * s.gauss();
      }
    }
    write_named(dir / "proposals.bin", names, rows, dim);
    std::ofstream(dir / "proposals.labels.json") << nlohmann::json(labels).dump() << '\n';
    write_matrix_file(dir / "base_logits.bin", logits);
    write_names_file(names_path_for(dir / "base_logits.bin"), test_names);
  }

  // Concepts sourced from base categories and vocabulary entries only.
  {
    std::vector<ConceptRecord> records;
    std::vector<Vector> rows;
    for (std::size_t i = 0; i < spec.concepts; ++i) {
      const auto c = s.index(spec.base);
      ConceptRecord r{numbered("concept", i, 4), {base_names[c]}};
      if (s.uniform() < 0.5) r.sources.push_back(vocab_names[s.index(spec.vocab)]);
      records.push_back(std::move(r));
      rows.push_back(s.around(base_rows[c], 0.6));
    }
    write_concepts_jsonl(dir / "concepts.jsonl", records);
    write_matrix_file(dir / "concepts.bin", stack(rows, dim));
  }

  // Config sized to the fixture: m must fit in half the variance-filtered store.
  const std::size_t expected_kept = (spec.vocab + 1) / 2;
  const std::size_t m = std::clamp<std::size_t>(expected_kept / 2, 1, kDefaultM);
  const std::size_t k = std::min<std::size_t>(50, spec.concepts);
  nlohmann::json cfg = {
      {"seed", spec.seed},
      {"out_dir", "out"},
      {"keep_fraction", kDefaultKeepFraction},
      {"paths",
       {{"base", "base.bin"},
        {"novel", "novel.bin"},
        {"vocab", "vocab.bin"},
        {"boxes", "boxes.jsonl"},
        {"proposals", "proposals.bin"},
        {"concepts", "concepts.jsonl"},
        {"concept_embeddings", "concepts.bin"},
        {"base_logits", "base_logits.bin"}}},
      {"ral", {{"m", m}, {"n", std::min<std::size_t>(10, m)}}},
      {"raf", {{"k", k}, {"heads", dim % 8 == 0 ? 8 : 1}, {"iterations", spec.raf_iterations}}},
      {"ensemble", {{"mode", "oadp"}, {"dataset", "coco"}}},
  };
  std::ofstream(dir / "config.json") << cfg.dump(2) << '\n';
}

}  // namespace ralf
