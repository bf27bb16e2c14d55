#include <gtest/gtest.h>

#include <random>

#include "oracles.hpp"
#include "ralf/kernels.hpp"

using namespace ralf;

namespace {

Matrix random_matrix(std::size_t r, std::size_t c, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  Matrix m(r, c);
  for (double& x : m.data) x = normal(rng);
  return m;
}

}  // namespace

TEST(Kernels, RowDotsMatchReferenceBitwise) {
  const Matrix t = random_matrix(1037, 33, 1);
  const Matrix q = random_matrix(1, 33, 2);
  EXPECT_EQ(kernels::row_dots(t, q.row(0)), kernels::reference::row_dots(t, q.row(0)));
}

TEST(Kernels, CrossDotsMatchReferenceBitwise) {
  const Matrix a = random_matrix(17, 12, 3);
  const Matrix b = random_matrix(301, 12, 4);
  EXPECT_EQ(kernels::cross_dots(a, b), kernels::reference::cross_dots(a, b));
}

TEST(Kernels, NormalizeRowsMatchesReferenceAndReportsZeroRows) {
  Matrix a = random_matrix(50, 7, 5);
  for (std::size_t d = 0; d < 7; ++d) a(13, d) = 0.0;
  Matrix b = a;
  const auto za = kernels::normalize_rows(a);
  const auto zb = kernels::reference::normalize_rows(b);
  EXPECT_EQ(a, b);
  EXPECT_EQ(za, std::vector<std::size_t>{13});
  EXPECT_EQ(za, zb);
}

TEST(Kernels, SortedRanksMatchDoubleLoop) {
  Matrix s = random_matrix(9, 150, 6);
  // Quantize so that ties are common.
  for (double& x : s.data) x = std::round(x * 4.0) / 4.0;
  EXPECT_EQ(kernels::similarity_ranks(s), kernels::reference::similarity_ranks(s));
}

TEST(Kernels, RanksOfDistinctRowArePermutation) {
  const Matrix s = random_matrix(3, 40, 7);
  const auto r = kernels::similarity_ranks(s);
  for (std::size_t c = 0; c < 3; ++c) {
    std::vector<int> row(r.begin() + c * 40, r.begin() + (c + 1) * 40);
    std::sort(row.begin(), row.end());
    for (int i = 0; i < 40; ++i) EXPECT_EQ(row[i], i + 1);
  }
}
