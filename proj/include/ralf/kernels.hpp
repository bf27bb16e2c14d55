#pragma once

// Data-parallel inner loops shared by the retrieval and ranking modules.
// Each kernel has an OpenMP version (used by the library) and a serial
// reference in `kernels::reference` that tests and the benchmark compare
// against. Per-row arithmetic is identical in both, so the parallel results
// are bit-identical to the reference regardless of thread count.

#include <cstdint>
#include <span>
#include <vector>

#include "ralf/matrix.hpp"

namespace ralf::kernels {

/// out[i] = <table.row(i), query>, accumulated in double.
Vector row_dots(const Matrix& table, std::span<const double> query);

/// out(r, i) = <queries.row(r), table.row(i)>.
Matrix cross_dots(const Matrix& queries, const Matrix& table);

/// Scales every row to unit L2 norm. Rows with zero norm are left untouched
/// and their indices returned.
std::vector<std::size_t> normalize_rows(Matrix& m);

/// For each row c of `sims`, rank(c, i) = 1 + #{ j != i : sims(c, j) > sims(c, i) }.
/// Sort-based, O(V log V) per row.
std::vector<std::int32_t> similarity_ranks(const Matrix& sims);

namespace reference {

Vector row_dots(const Matrix& table, std::span<const double> query);
Matrix cross_dots(const Matrix& queries, const Matrix& table);
std::vector<std::size_t> normalize_rows(Matrix& m);
/// Direct double loop over (i, j); O(V^2) per row.
std::vector<std::int32_t> similarity_ranks(const Matrix& sims);

}  // namespace reference

/// Worker threads OpenMP will use (1 when built without OpenMP).
int max_threads();

}  // namespace ralf::kernels
