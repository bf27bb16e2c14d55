#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "ralf/matrix.hpp"

namespace ralf {

/// ASCII case fold; non-ASCII bytes pass through unchanged.
std::string casefold(std::string_view s);

/// Immutable table of named, L2-normalized row vectors. Only `build_table`
/// constructs one, so every instance satisfies the table invariants.
class EmbeddingTable {
 public:
  EmbeddingTable() = default;

  std::size_t count() const { return names_.size(); }
  std::size_t dim() const { return vectors_.cols; }
  bool normalized() const { return true; }

  const std::vector<std::string>& names() const { return names_; }
  const std::string& name(std::size_t i) const { return names_[i]; }
  const Matrix& vectors() const { return vectors_; }
  std::span<const double> row(std::size_t i) const { return vectors_.row(i); }

  /// Case-insensitive lookup.
  std::optional<std::size_t> find(std::string_view name) const;
  /// Throws UnknownName when absent.
  std::size_t index_of(std::string_view name) const;

  /// Rows `indices` (in that order) as a new table.
  EmbeddingTable subset(std::span<const std::size_t> indices) const;

 private:
  friend EmbeddingTable build_table(std::vector<std::string> names, Matrix vectors);

  std::vector<std::string> names_;
  Matrix vectors_;
  std::unordered_map<std::string, std::size_t> by_folded_name_;
};

struct TopKResult {
  std::vector<std::size_t> indices;
  std::vector<double> scores;
};

/// Validates and L2-normalizes `vectors`.
/// Throws DimensionMismatch, DuplicateName, ZeroNormRow or NonFiniteValue.
EmbeddingTable build_table(std::vector<std::string> names, Matrix vectors);

/// Unit-normalized copy of `query`. Throws DimensionMismatch, ZeroNormQuery,
/// NonFiniteValue.
Vector normalized_query(std::span<const double> query, std::size_t dim);

/// The k rows most similar to `query`, scores descending, ties by ascending index.
TopKResult topk(const EmbeddingTable& table, std::span<const double> query, std::size_t k);
/// The k rows least similar to `query`, scores ascending, ties by ascending index.
TopKResult bottomk(const EmbeddingTable& table, std::span<const double> query, std::size_t k);

// Same selection over precomputed similarity scores.
TopKResult select_top(std::span<const double> scores, std::size_t k);
TopKResult select_bottom(std::span<const double> scores, std::size_t k);

// Binary matrix file: "RALF", u32 version, u64 count, u32 dim, f32 row-major,
// all little-endian. Names live next to it in <stem>.names.json.
inline constexpr std::uint32_t kMatrixFormatVersion = 1;

void write_matrix_file(const std::filesystem::path& path, const Matrix& m);
Matrix read_matrix_file(const std::filesystem::path& path);

std::filesystem::path names_path_for(const std::filesystem::path& matrix_path);
void write_names_file(const std::filesystem::path& path, const std::vector<std::string>& names);
std::vector<std::string> read_names_file(const std::filesystem::path& path);

/// Writes the matrix file and its companion names file.
void save_table(const std::filesystem::path& path, const EmbeddingTable& table);
/// Reads both files and runs `build_table`.
EmbeddingTable load_table(const std::filesystem::path& path);

}  // namespace ralf
