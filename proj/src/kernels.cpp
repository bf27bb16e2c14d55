#include "ralf/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace ralf::kernels {

namespace {

double row_norm(std::span<const double> r) { return std::sqrt(dot(r, r)); }

}  // namespace

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

Vector row_dots(const Matrix& table, std::span<const double> query) {
  Vector out(table.rows);
  const auto n = static_cast<std::int64_t>(table.rows);
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < n; ++i) {
    out[i] = dot(table.row(i), query);
  }
  return out;
}

Matrix cross_dots(const Matrix& queries, const Matrix& table) {
  Matrix out(queries.rows, table.rows);
  const auto n = static_cast<std::int64_t>(queries.rows * table.rows);
#pragma omp parallel for schedule(static)
  for (std::int64_t idx = 0; idx < n; ++idx) {
    const auto r = static_cast<std::size_t>(idx) / table.rows;
    const auto i = static_cast<std::size_t>(idx) % table.rows;
    out(r, i) = dot(queries.row(r), table.row(i));
  }
  return out;
}

std::vector<std::size_t> normalize_rows(Matrix& m) {
  std::vector<char> zero(m.rows, 0);
  const auto n = static_cast<std::int64_t>(m.rows);
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < n; ++i) {
    auto r = m.row(i);
    const double norm = row_norm(r);
    if (norm == 0.0) {
      zero[i] = 1;
      continue;
    }
    for (double& x : r) x /= norm;
  }
  std::vector<std::size_t> zeros;
  for (std::size_t i = 0; i < m.rows; ++i) {
    if (zero[i]) zeros.push_back(i);
  }
  return zeros;
}

std::vector<std::int32_t> similarity_ranks(const Matrix& sims) {
  std::vector<std::int32_t> ranks(sims.rows * sims.cols);
  const auto n = static_cast<std::int64_t>(sims.rows);
#pragma omp parallel for schedule(dynamic)
  for (std::int64_t c = 0; c < n; ++c) {
    const auto row = sims.row(c);
    std::vector<std::size_t> order(sims.cols);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return row[a] > row[b]; });
    // Walk descending; a tie group shares 1 + (number of strictly greater).
    std::size_t pos = 0;
    while (pos < order.size()) {
      std::size_t end = pos;
      while (end < order.size() && row[order[end]] == row[order[pos]]) ++end;
      for (std::size_t t = pos; t < end; ++t) {
        ranks[c * sims.cols + order[t]] = static_cast<std::int32_t>(pos + 1);
      }
      pos = end;
    }
  }
  return ranks;
}

namespace reference {

Vector row_dots(const Matrix& table, std::span<const double> query) {
  Vector out(table.rows);
  for (std::size_t i = 0; i < table.rows; ++i) out[i] = dot(table.row(i), query);
  return out;
}

Matrix cross_dots(const Matrix& queries, const Matrix& table) {
  Matrix out(queries.rows, table.rows);
  for (std::size_t r = 0; r < queries.rows; ++r) {
    for (std::size_t i = 0; i < table.rows; ++i) {
      out(r, i) = dot(queries.row(r), table.row(i));
    }
  }
  return out;
}

std::vector<std::size_t> normalize_rows(Matrix& m) {
  std::vector<std::size_t> zeros;
  for (std::size_t i = 0; i < m.rows; ++i) {
    auto r = m.row(i);
    const double norm = row_norm(r);
    if (norm == 0.0) {
      zeros.push_back(i);
      continue;
    }
    for (double& x : r) x /= norm;
  }
  return zeros;
}

std::vector<std::int32_t> similarity_ranks(const Matrix& sims) {
  std::vector<std::int32_t> ranks(sims.rows * sims.cols);
  for (std::size_t c = 0; c < sims.rows; ++c) {
    for (std::size_t i = 0; i < sims.cols; ++i) {
      std::int32_t rank = 1;
      for (std::size_t j = 0; j < sims.cols; ++j) {
        if (j != i && sims(c, j) > sims(c, i)) ++rank;
      }
      ranks[c * sims.cols + i] = rank;
    }
  }
  return ranks;
}

}  // namespace reference

}  // namespace ralf::kernels
