#include "ralf/negative_retriever.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <unordered_set>

#include "ralf/error.hpp"
#include "ralf/kernels.hpp"

namespace ralf {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

}  // namespace

std::string_view to_string(ExclusionReason r) {
  switch (r) {
    case ExclusionReason::NovelOverlap: return "novel-overlap";
    case ExclusionReason::CaseDuplicate: return "case-duplicate";
    case ExclusionReason::LowRankVariance: return "low-rank-variance";
  }
  return "unknown";
}

namespace {

std::vector<std::size_t> screen_names(const std::vector<std::string>& names,
                                      const std::vector<std::string>& novel_names,
                                      std::vector<Exclusion>& excluded) {
  std::unordered_set<std::string> novel;
  for (const auto& n : novel_names) novel.insert(casefold(n));
  std::unordered_set<std::string> seen;
  std::vector<std::size_t> kept;
  for (std::size_t i = 0; i < names.size(); ++i) {
    const auto folded = casefold(names[i]);
    if (novel.contains(folded)) {
      excluded.push_back({names[i], ExclusionReason::NovelOverlap});
    } else if (!seen.insert(folded).second) {
      excluded.push_back({names[i], ExclusionReason::CaseDuplicate});
    } else {
      kept.push_back(i);
    }
  }
  if (kept.empty()) {
    throw Error(ErrorCode::EmptyStoreAfterFilter, "every vocabulary entry was filtered out");
  }
  return kept;
}

}  // namespace

VocabularyStore build_store(const std::vector<std::string>& names, const Matrix& vectors,
                            const std::vector<std::string>& novel_names) {
  if (names.size() != vectors.rows) {
    throw Error(ErrorCode::DimensionMismatch, "vocabulary names/rows mismatch");
  }
  VocabularyStore store;
  const auto kept_rows = screen_names(names, novel_names, store.excluded);
  std::vector<std::string> kept_names;
  Matrix kept(kept_rows.size(), vectors.cols);
  for (std::size_t r = 0; r < kept_rows.size(); ++r) {
    kept_names.push_back(names[kept_rows[r]]);
    std::ranges::copy(vectors.row(kept_rows[r]), kept.row(r).begin());
  }
  store.table = build_table(std::move(kept_names), std::move(kept));
  return store;
}

VocabularyStore build_store(const EmbeddingTable& raw_vocab,
                            const std::vector<std::string>& novel_names) {
  VocabularyStore store;
  const auto kept_rows = screen_names(raw_vocab.names(), novel_names, store.excluded);
  store.table = raw_vocab.subset(kept_rows);
  return store;
}

RankMatrix compute_ranks(const EmbeddingTable& store, const EmbeddingTable& base) {
  if (store.dim() != base.dim()) {
    throw Error(ErrorCode::DimensionMismatch, "store dim " + std::to_string(store.dim()) +
                                                  " != base dim " + std::to_string(base.dim()));
  }
  RankMatrix out;
  out.base_count = base.count();
  out.vocab_count = store.count();
  const auto sims = kernels::cross_dots(base.vectors(), store.vectors());
  out.ranks = kernels::similarity_ranks(sims);

  out.variance.assign(out.vocab_count, 0.0);
  if (out.base_count == 0) return out;
  const double nb = static_cast<double>(out.base_count);
  for (std::size_t i = 0; i < out.vocab_count; ++i) {
    double mean = 0.0;
    for (std::size_t c = 0; c < out.base_count; ++c) mean += out.rank(c, i);
    mean /= nb;
    double var = 0.0;
    for (std::size_t c = 0; c < out.base_count; ++c) {
      const double d = out.rank(c, i) - mean;
      var += d * d;
    }
    out.variance[i] = var / nb;
  }
  return out;
}

std::size_t kept_count(std::size_t count, double keep_fraction) {
  if (!(keep_fraction > 0.0 && keep_fraction <= 1.0)) {
    throw Error(ErrorCode::InvalidArgument, "keep_fraction must lie in (0, 1]");
  }
  // 1e-9 slack keeps e.g. 0.7 * 10 from rounding up to 8.
  const double raw = std::ceil(keep_fraction * static_cast<double>(count) - 1e-9);
  return std::clamp<std::size_t>(static_cast<std::size_t>(std::max(raw, 1.0)), 1, count);
}

std::vector<std::size_t> filter_by_rank_variance(const RankMatrix& ranks, double keep_fraction) {
  const std::size_t n = ranks.vocab_count;
  if (n == 0) return {};
  const std::size_t keep = kept_count(n, keep_fraction);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return ranks.variance[a] > ranks.variance[b];
  });
  order.resize(keep);
  std::ranges::sort(order);
  return order;
}

NegativeVocabularySets build_negative_sets(const EmbeddingTable& store,
                                           const EmbeddingTable& base,
                                           const std::vector<std::size_t>& kept, std::size_t m) {
  if (m == 0 || m > kept.size() / 2) {
    throw Error(ErrorCode::MTooLarge, "m=" + std::to_string(m) + " requires at least " +
                                          std::to_string(2 * m) + " kept entries, have " +
                                          std::to_string(kept.size()));
  }
  if (store.dim() != base.dim()) {
    throw Error(ErrorCode::DimensionMismatch, "store/base dimension mismatch");
  }
  Matrix kept_vectors(kept.size(), store.dim());
  for (std::size_t r = 0; r < kept.size(); ++r) {
    std::ranges::copy(store.row(kept.at(r)), kept_vectors.row(r).begin());
  }
  const auto sims = kernels::cross_dots(base.vectors(), kept_vectors);

  NegativeVocabularySets out;
  out.m = m;
  std::vector<NegativeSets> per_base(base.count());
  const auto nb = static_cast<std::int64_t>(base.count());
#pragma omp parallel for schedule(dynamic)
  for (std::int64_t c = 0; c < nb; ++c) {
    const auto hard = select_top(sims.row(c), m);
    const auto easy = select_bottom(sims.row(c), m);
    for (auto i : hard.indices) per_base[c].hard.push_back(store.name(kept[i]));
    for (auto i : easy.indices) per_base[c].easy.push_back(store.name(kept[i]));
  }
  for (std::size_t c = 0; c < base.count(); ++c) {
    out.categories.emplace(base.name(c), std::move(per_base[c]));
  }
  return out;
}

std::vector<std::size_t> sample_without_replacement(std::size_t population, std::size_t n,
                                                    std::uint64_t seed) {
  if (n > population) throw Error(ErrorCode::NTooLarge, "sample larger than population");
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> pool(population);
  std::iota(pool.begin(), pool.end(), std::size_t{0});
  for (std::size_t i = 0; i < n; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, population - 1);
    std::swap(pool[i], pool[pick(rng)]);
  }
  pool.resize(n);
  return pool;
}

IterationSample sample_iteration(const NegativeVocabularySets& sets, const std::string& label,
                                 std::size_t n, std::uint64_t seed, SelectionMode mode) {
  if (n > sets.m) {
    throw Error(ErrorCode::NTooLarge,
                "n=" + std::to_string(n) + " exceeds m=" + std::to_string(sets.m));
  }
  auto it = sets.categories.find(label);
  if (it == sets.categories.end()) {
    const auto folded = casefold(label);
    it = std::ranges::find_if(sets.categories,
                              [&](const auto& kv) { return casefold(kv.first) == folded; });
  }
  if (it == sets.categories.end()) {
    throw Error(ErrorCode::UnknownCategory, "no negative sets for '" + label + "'");
  }
  const auto& [hard, easy] = it->second;
  IterationSample out;
  if (mode == SelectionMode::Similarity) {
    out.hard.assign(hard.begin(), hard.begin() + static_cast<std::ptrdiff_t>(n));
    out.easy.assign(easy.begin(), easy.begin() + static_cast<std::ptrdiff_t>(n));
    return out;
  }
  // Distinct streams so the hard and easy draws are independent.
  const std::uint64_t hard_seed = splitmix64(seed ^ 0x68617264ULL);
  const std::uint64_t easy_seed = splitmix64(seed ^ 0x65617379ULL);
  for (auto i : sample_without_replacement(hard.size(), n, hard_seed)) out.hard.push_back(hard[i]);
  for (auto i : sample_without_replacement(easy.size(), n, easy_seed)) out.easy.push_back(easy[i]);
  return out;
}

}  // namespace ralf
