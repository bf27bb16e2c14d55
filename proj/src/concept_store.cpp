#include "ralf/concept_store.hpp"

#include <algorithm>
#include <fstream>
#include <unordered_map>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "ralf/error.hpp"

namespace ralf {

namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

}  // namespace

ConceptStore ingest_concepts(const std::vector<ConceptRecord>& records, const Matrix& embeddings,
                             const std::vector<std::string>& novel_names) {
  if (records.size() != embeddings.rows) {
    throw Error(ErrorCode::AlignmentMismatch, std::to_string(records.size()) +
                                                  " concept records but " +
                                                  std::to_string(embeddings.rows) + " embedding rows");
  }
  std::unordered_set<std::string> novel;
  for (const auto& n : novel_names) novel.insert(casefold(n));

  ConceptStore store;
  std::unordered_map<std::string, std::size_t> by_text;
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto text = trim(records[i].text);
    if (text.empty()) {
      throw Error(ErrorCode::InvalidRecord, "concept " + std::to_string(i) + " has empty text");
    }
    for (const auto& src : records[i].sources) {
      if (novel.contains(casefold(src))) {
        throw Error(ErrorCode::NovelLeakage,
                    "concept '" + text + "' was generated from novel category '" + src + "'");
      }
    }
    auto [it, inserted] = by_text.emplace(casefold(text), store.records.size());
    if (inserted) {
      store.records.push_back({text, {}});
      rows.push_back(i);
    }
    auto& sources = store.records[it->second].sources;
    for (const auto& src : records[i].sources) {
      if (std::ranges::find(sources, src) == sources.end()) sources.push_back(src);
    }
  }

  std::vector<std::string> names;
  Matrix vectors(rows.size(), embeddings.cols);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    names.push_back(store.records[r].text);
    std::ranges::copy(embeddings.row(rows[r]), vectors.row(r).begin());
  }
  store.table = build_table(std::move(names), std::move(vectors));
  return store;
}

RetrievedConcepts retrieve(const ConceptStore& store, std::span<const double> v_r, std::size_t k) {
  const auto hits = topk(store.table, v_r, k);
  RetrievedConcepts out;
  out.embeddings = Matrix(k, store.table.dim());
  out.scores = hits.scores;
  out.indices = hits.indices;
  for (std::size_t i = 0; i < k; ++i) {
    std::ranges::copy(store.table.row(hits.indices[i]), out.embeddings.row(i).begin());
    out.texts.push_back(store.records[hits.indices[i]].text);
  }
  return out;
}

std::vector<ConceptRecord> read_concepts_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  std::vector<ConceptRecord> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      out.push_back({j.at("text").get<std::string>(),
                     j.value("sources", std::vector<std::string>{})});
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::FormatError,
                  path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

void write_concepts_jsonl(const std::filesystem::path& path,
                          const std::vector<ConceptRecord>& records) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot open " + path.string() + " for writing");
  for (const auto& r : records) {
    out << nlohmann::json{{"text", r.text}, {"sources", r.sources}}.dump() << '\n';
  }
}

}  // namespace ralf
