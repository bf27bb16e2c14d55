#include "ralf/embedding_store.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

#include <nlohmann/json.hpp>

#include "ralf/error.hpp"
#include "ralf/kernels.hpp"

namespace ralf {

namespace {

constexpr std::array<char, 4> kMagic = {'R', 'A', 'L', 'F'};

template <typename T>
void put_le(std::ostream& out, T value) {
  std::array<unsigned char, sizeof(T)> bytes{};
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    bytes[i] = static_cast<unsigned char>((value >> (8 * i)) & 0xFF);
  }
  out.write(reinterpret_cast<const char*>(bytes.data()), bytes.size());
}

template <typename T>
T get_le(std::istream& in) {
  std::array<unsigned char, sizeof(T)> bytes{};
  in.read(reinterpret_cast<char*>(bytes.data()), bytes.size());
  if (!in) throw Error(ErrorCode::FormatError, "truncated matrix file header");
  T value = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) value |= static_cast<T>(bytes[i]) << (8 * i);
  return value;
}

bool better_top(double sa, std::size_t a, double sb, std::size_t b) {
  return sa > sb || (sa == sb && a < b);
}

bool better_bottom(double sa, std::size_t a, double sb, std::size_t b) {
  return sa < sb || (sa == sb && a < b);
}

template <typename Better>
TopKResult select(std::span<const double> scores, std::size_t k, Better better) {
  if (k > scores.size()) {
    throw Error(ErrorCode::KTooLarge, "k=" + std::to_string(k) + " exceeds table count " +
                                          std::to_string(scores.size()));
  }
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                    [&](std::size_t a, std::size_t b) { return better(scores[a], a, scores[b], b); });
  TopKResult out;
  out.indices.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k));
  out.scores.reserve(k);
  for (auto i : out.indices) out.scores.push_back(scores[i]);
  return out;
}

}  // namespace

std::string casefold(std::string_view s) {
  std::string out(s);
  for (char& c : out) {
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
  }
  return out;
}

std::optional<std::size_t> EmbeddingTable::find(std::string_view name) const {
  auto it = by_folded_name_.find(casefold(name));
  if (it == by_folded_name_.end()) return std::nullopt;
  return it->second;
}

std::size_t EmbeddingTable::index_of(std::string_view name) const {
  if (auto i = find(name)) return *i;
  throw Error(ErrorCode::UnknownName, "unknown name '" + std::string(name) + "'");
}

EmbeddingTable EmbeddingTable::subset(std::span<const std::size_t> indices) const {
  // Rows are already unit length; copy rather than renormalize.
  EmbeddingTable t;
  t.vectors_ = Matrix(indices.size(), dim());
  for (std::size_t r = 0; r < indices.size(); ++r) {
    const auto& n = names_.at(indices[r]);
    if (!t.by_folded_name_.emplace(casefold(n), r).second) {
      throw Error(ErrorCode::DuplicateName, "'" + n + "' selected twice");
    }
    t.names_.push_back(n);
    std::ranges::copy(row(indices[r]), t.vectors_.row(r).begin());
  }
  return t;
}

EmbeddingTable build_table(std::vector<std::string> names, Matrix vectors) {
  if (names.size() != vectors.rows) {
    throw Error(ErrorCode::DimensionMismatch, std::to_string(names.size()) + " names for " +
                                                  std::to_string(vectors.rows) + " rows");
  }
  if (vectors.data.size() != vectors.rows * vectors.cols) {
    throw Error(ErrorCode::DimensionMismatch, "matrix storage is not rectangular");
  }
  if (vectors.rows > 0 && vectors.cols == 0) {
    throw Error(ErrorCode::DimensionMismatch, "embedding dimension must be positive");
  }
  for (std::size_t i = 0; i < vectors.data.size(); ++i) {
    if (!std::isfinite(vectors.data[i])) {
      throw Error(ErrorCode::NonFiniteValue,
                  "non-finite value in row " + std::to_string(i / vectors.cols));
    }
  }
  EmbeddingTable t;
  for (std::size_t i = 0; i < names.size(); ++i) {
    auto [it, inserted] = t.by_folded_name_.emplace(casefold(names[i]), i);
    if (!inserted) {
      throw Error(ErrorCode::DuplicateName, "'" + names[i] + "' collides with '" +
                                                names[it->second] + "' after case folding");
    }
  }
  auto zeros = kernels::normalize_rows(vectors);
  if (!zeros.empty()) {
    throw Error(ErrorCode::ZeroNormRow, "row " + std::to_string(zeros.front()) + " ('" +
                                            names[zeros.front()] + "') has zero norm");
  }
  t.names_ = std::move(names);
  t.vectors_ = std::move(vectors);
  return t;
}

Vector normalized_query(std::span<const double> query, std::size_t dim) {
  if (query.size() != dim) {
    throw Error(ErrorCode::DimensionMismatch, "query dim " + std::to_string(query.size()) +
                                                  " != table dim " + std::to_string(dim));
  }
  double sq = 0.0;
  for (double x : query) {
    if (!std::isfinite(x)) throw Error(ErrorCode::NonFiniteValue, "non-finite query value");
    sq += x * x;
  }
  if (sq == 0.0) throw Error(ErrorCode::ZeroNormQuery, "query has zero norm");
  const double norm = std::sqrt(sq);
  Vector out(query.begin(), query.end());
  for (double& x : out) x /= norm;
  return out;
}

TopKResult select_top(std::span<const double> scores, std::size_t k) {
  return select(scores, k, better_top);
}

TopKResult select_bottom(std::span<const double> scores, std::size_t k) {
  return select(scores, k, better_bottom);
}

TopKResult topk(const EmbeddingTable& table, std::span<const double> query, std::size_t k) {
  if (k > table.count()) {
    throw Error(ErrorCode::KTooLarge, "k=" + std::to_string(k) + " exceeds table count " +
                                          std::to_string(table.count()));
  }
  const auto q = normalized_query(query, table.dim());
  const auto scores = kernels::row_dots(table.vectors(), q);
  return select_top(scores, k);
}

TopKResult bottomk(const EmbeddingTable& table, std::span<const double> query, std::size_t k) {
  if (k > table.count()) {
    throw Error(ErrorCode::KTooLarge, "k=" + std::to_string(k) + " exceeds table count " +
                                          std::to_string(table.count()));
  }
  const auto q = normalized_query(query, table.dim());
  const auto scores = kernels::row_dots(table.vectors(), q);
  return select_bottom(scores, k);
}

void write_matrix_file(const std::filesystem::path& path, const Matrix& m) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot open " + path.string() + " for writing");
  out.write(kMagic.data(), kMagic.size());
  put_le<std::uint32_t>(out, kMatrixFormatVersion);
  put_le<std::uint64_t>(out, m.rows);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(m.cols));
  for (double x : m.data) {
    put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(static_cast<float>(x)));
  }
  if (!out) throw Error(ErrorCode::IoError, "write failed for " + path.string());
}

Matrix read_matrix_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  std::array<char, 4> magic{};
  in.read(magic.data(), magic.size());
  if (!in || magic != kMagic) {
    throw Error(ErrorCode::FormatError, path.string() + ": bad magic");
  }
  const auto version = get_le<std::uint32_t>(in);
  if (version != kMatrixFormatVersion) {
    throw Error(ErrorCode::FormatError,
                path.string() + ": unsupported version " + std::to_string(version));
  }
  const auto rows = get_le<std::uint64_t>(in);
  const auto cols = get_le<std::uint32_t>(in);
  Matrix m(rows, cols);
  std::vector<unsigned char> buf(m.data.size() * 4);
  in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (static_cast<std::size_t>(in.gcount()) != buf.size()) {
    throw Error(ErrorCode::FormatError, path.string() + ": truncated payload");
  }
  for (std::size_t i = 0; i < m.data.size(); ++i) {
    std::uint32_t bits = 0;
    for (std::size_t b = 0; b < 4; ++b) bits |= std::uint32_t{buf[4 * i + b]} << (8 * b);
    m.data[i] = std::bit_cast<float>(bits);
  }
  in.peek();
  if (!in.eof()) throw Error(ErrorCode::FormatError, path.string() + ": trailing bytes");
  return m;
}

std::filesystem::path names_path_for(const std::filesystem::path& matrix_path) {
  auto p = matrix_path;
  p.replace_extension(".names.json");
  return p;
}

void write_names_file(const std::filesystem::path& path, const std::vector<std::string>& names) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot open " + path.string() + " for writing");
  out << nlohmann::json(names).dump() << '\n';
}

std::vector<std::string> read_names_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  try {
    return nlohmann::json::parse(in).get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::FormatError, path.string() + ": " + e.what());
  }
}

void save_table(const std::filesystem::path& path, const EmbeddingTable& table) {
  write_matrix_file(path, table.vectors());
  write_names_file(names_path_for(path), table.names());
}

EmbeddingTable load_table(const std::filesystem::path& path) {
  auto m = read_matrix_file(path);
  auto names = read_names_file(names_path_for(path));
  return build_table(std::move(names), std::move(m));
}

}  // namespace ralf
