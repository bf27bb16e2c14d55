#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "ralf/embedding_store.hpp"

namespace ralf {

struct ConceptRecord {
  std::string text;
  std::vector<std::string> sources;
};

/// Deduplicated concept corpus aligned row-for-row with its embedding table.
struct ConceptStore {
  std::vector<ConceptRecord> records;
  EmbeddingTable table;  // row i embeds records[i].text

  std::size_t size() const { return records.size(); }
};

/// H_r, s_r and the matching concept texts, best first.
struct RetrievedConcepts {
  Matrix embeddings;  // k x dim
  Vector scores;      // raw cosines, descending
  std::vector<std::string> texts;
  std::vector<std::size_t> indices;

  std::size_t k() const { return scores.size(); }
};

/// `embeddings` row i belongs to records[i]. Duplicate texts (case-folded)
/// merge their sources and keep the first row. Throws AlignmentMismatch,
/// NovelLeakage, InvalidRecord.
ConceptStore ingest_concepts(const std::vector<ConceptRecord>& records, const Matrix& embeddings,
                             const std::vector<std::string>& novel_names);

/// Throws KTooLarge.
RetrievedConcepts retrieve(const ConceptStore& store, std::span<const double> v_r, std::size_t k);

/// One {"text", "sources"} object per line.
std::vector<ConceptRecord> read_concepts_jsonl(const std::filesystem::path& path);
void write_concepts_jsonl(const std::filesystem::path& path,
                          const std::vector<ConceptRecord>& records);

}  // namespace ralf
