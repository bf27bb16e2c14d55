// Parallel kernels against their serial references.

#include <random>

#include <benchmark/benchmark.h>

#include "ralf/kernels.hpp"

namespace {

ralf::Matrix random_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  ralf::Matrix m(rows, cols);
  for (double& x : m.data) x = normal(rng);
  return m;
}

void BM_RowDots(benchmark::State& state) {
  const auto table = random_matrix(13064, 512, 1);
  const auto query = random_matrix(1, 512, 2);
  for (auto _ : state) benchmark::DoNotOptimize(ralf::kernels::row_dots(table, query.row(0)));
}
BENCHMARK(BM_RowDots)->Unit(benchmark::kMillisecond);

void BM_RowDotsReference(benchmark::State& state) {
  const auto table = random_matrix(13064, 512, 1);
  const auto query = random_matrix(1, 512, 2);
  for (auto _ : state) {
    benchmark::DoNotOptimize(ralf::kernels::reference::row_dots(table, query.row(0)));
  }
}
BENCHMARK(BM_RowDotsReference)->Unit(benchmark::kMillisecond);

void BM_CrossDots(benchmark::State& state) {
  const auto base = random_matrix(48, 512, 3);
  const auto vocab = random_matrix(13064, 512, 4);
  for (auto _ : state) benchmark::DoNotOptimize(ralf::kernels::cross_dots(base, vocab));
}
BENCHMARK(BM_CrossDots)->Unit(benchmark::kMillisecond);

void BM_CrossDotsReference(benchmark::State& state) {
  const auto base = random_matrix(48, 512, 3);
  const auto vocab = random_matrix(13064, 512, 4);
  for (auto _ : state) benchmark::DoNotOptimize(ralf::kernels::reference::cross_dots(base, vocab));
}
BENCHMARK(BM_CrossDotsReference)->Unit(benchmark::kMillisecond);

void BM_SimilarityRanks(benchmark::State& state) {
  const auto sims = random_matrix(48, static_cast<std::size_t>(state.range(0)), 5);
  for (auto _ : state) benchmark::DoNotOptimize(ralf::kernels::similarity_ranks(sims));
}
BENCHMARK(BM_SimilarityRanks)->Arg(1000)->Arg(13064)->Unit(benchmark::kMillisecond);

void BM_SimilarityRanksReference(benchmark::State& state) {
  const auto sims = random_matrix(48, static_cast<std::size_t>(state.range(0)), 5);
  for (auto _ : state) benchmark::DoNotOptimize(ralf::kernels::reference::similarity_ranks(sims));
}
BENCHMARK(BM_SimilarityRanksReference)->Arg(1000)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
