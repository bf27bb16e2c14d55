#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "ralf/embedding_store.hpp"

namespace ralf {

enum class ExclusionReason { NovelOverlap, CaseDuplicate, LowRankVariance };

std::string_view to_string(ExclusionReason r);

struct Exclusion {
  std::string name;
  ExclusionReason reason;
};

/// Filtered vocabulary C^V plus an audit trail of everything removed.
struct VocabularyStore {
  EmbeddingTable table;
  std::vector<Exclusion> excluded;
};

/// Rank of every vocabulary entry under every base category, and the
/// population variance of each entry's ranks across base categories.
struct RankMatrix {
  std::size_t base_count = 0;
  std::size_t vocab_count = 0;
  std::vector<std::int32_t> ranks;  // base_count x vocab_count, row-major
  std::vector<double> variance;     // vocab_count

  std::int32_t rank(std::size_t base, std::size_t vocab) const {
    return ranks[base * vocab_count + vocab];
  }
};

struct NegativeSets {
  std::vector<std::string> hard;  // descending similarity
  std::vector<std::string> easy;  // ascending similarity
};

struct NegativeVocabularySets {
  std::size_t m = 0;
  std::map<std::string, NegativeSets> categories;
};

enum class SelectionMode { Random, Similarity };

struct IterationSample {
  std::vector<std::string> hard;
  std::vector<std::string> easy;
};

/// Drops case-fold duplicates (first occurrence wins) and anything matching a
/// novel name. Takes raw names so duplicates can be recorded rather than
/// rejected. Throws EmptyStoreAfterFilter.
VocabularyStore build_store(const std::vector<std::string>& names, const Matrix& vectors,
                            const std::vector<std::string>& novel_names);
/// Convenience overload for an already validated table.
VocabularyStore build_store(const EmbeddingTable& raw_vocab,
                            const std::vector<std::string>& novel_names);

RankMatrix compute_ranks(const EmbeddingTable& store, const EmbeddingTable& base);

/// Number of entries kept for a given fraction: ceil(fraction * count), at least 1.
std::size_t kept_count(std::size_t count, double keep_fraction);

/// Indices (ascending) of the highest-variance entries; ties by ascending index.
std::vector<std::size_t> filter_by_rank_variance(const RankMatrix& ranks, double keep_fraction);

/// Throws MTooLarge unless m <= |kept| / 2.
NegativeVocabularySets build_negative_sets(const EmbeddingTable& store,
                                           const EmbeddingTable& base,
                                           const std::vector<std::size_t>& kept, std::size_t m);

/// n names from each of hard and easy. Random mode draws uniformly without
/// replacement from a generator seeded with `seed`; similarity mode takes the
/// first n in stored order. Throws NTooLarge, UnknownCategory.
IterationSample sample_iteration(const NegativeVocabularySets& sets, const std::string& label,
                                 std::size_t n, std::uint64_t seed,
                                 SelectionMode mode = SelectionMode::Random);

/// Draws n distinct indices from [0, population) by partial Fisher-Yates.
std::vector<std::size_t> sample_without_replacement(std::size_t population, std::size_t n,
                                                    std::uint64_t seed);

}  // namespace ralf
