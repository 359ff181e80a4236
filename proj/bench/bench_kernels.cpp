// Serial reference vs OpenMP kernels. Thread count follows OMP_NUM_THREADS.

#include <random>
#include <vector>

#include <benchmark/benchmark.h>

#include "mockforge/kernels.hpp"

namespace kernels = mockforge::kernels;

namespace {

template <typename T>
std::vector<T> random_values(std::size_t n, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<T> v(n);
  for (auto& x : v) x = static_cast<T>(u(rng));
  return v;
}

template <bool Parallel>
void BM_Gemm(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = random_values<double>(n * n, 1), b = random_values<double>(n * n, 2);
  std::vector<double> c(n * n);
  for (auto _ : state) {
    if constexpr (Parallel) {
      kernels::gemm_parallel(false, true, n, n, n, a.data(), b.data(), c.data(), false);
    } else {
      kernels::gemm_serial(false, true, n, n, n, a.data(), b.data(), c.data(), false);
    }
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(2 * n * n * n));
  state.counters["threads"] = kernels::max_threads();
}

// Vector-index scans: one query against `rows` stored embeddings.
template <bool Parallel, bool Dot>
void BM_IndexScan(benchmark::State& state) {
  const auto rows = static_cast<std::size_t>(state.range(0));
  const std::size_t dim = 64;
  const auto m = random_values<float>(rows * dim, 3), q = random_values<float>(dim, 4);
  std::vector<double> out(rows);
  for (auto _ : state) {
    if constexpr (Dot) {
      Parallel ? kernels::row_dots_parallel(m.data(), rows, dim, q.data(), out.data())
               : kernels::row_dots_serial(m.data(), rows, dim, q.data(), out.data());
    } else {
      Parallel ? kernels::row_sqdist_parallel(m.data(), rows, dim, q.data(), out.data())
               : kernels::row_sqdist_serial(m.data(), rows, dim, q.data(), out.data());
    }
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(rows));
}

}  // namespace

BENCHMARK(BM_Gemm<false>)->Name("gemm/serial")->RangeMultiplier(2)->Range(32, 256);
BENCHMARK(BM_Gemm<true>)->Name("gemm/openmp")->RangeMultiplier(2)->Range(32, 256);
BENCHMARK(BM_IndexScan<false, true>)->Name("row_dots/serial")->Arg(4096)->Arg(78560);
BENCHMARK(BM_IndexScan<true, true>)->Name("row_dots/openmp")->Arg(4096)->Arg(78560);
BENCHMARK(BM_IndexScan<false, false>)->Name("row_sqdist/serial")->Arg(4096)->Arg(78560);
BENCHMARK(BM_IndexScan<true, false>)->Name("row_sqdist/openmp")->Arg(4096)->Arg(78560);

BENCHMARK_MAIN();
