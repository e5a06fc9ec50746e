// Serial reference kernels against their OpenMP forms. Set OMP_NUM_THREADS to
// vary the thread count of the omp variants.

#include <benchmark/benchmark.h>

#include <algorithm>
#include <random>
#include <vector>

#include "fedsheaf/kernels.hpp"

namespace k = fedsheaf::kernels;

namespace {

std::vector<double> random_values(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dist;
  std::vector<double> v(n);
  for (double& x : v) x = dist(rng);
  return v;
}

// Random sparse matrix with about `per_row` entries per row plus the diagonal.
k::CsrMatrix random_csr(std::size_t n, std::size_t per_row, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> col(0, n - 1);
  k::CsrMatrix a;
  a.rows = a.cols = n;
  a.row_ptr.push_back(0);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<std::size_t> cols{i};
    for (std::size_t j = 0; j < per_row; ++j) cols.push_back(col(rng));
    std::sort(cols.begin(), cols.end());
    cols.erase(std::unique(cols.begin(), cols.end()), cols.end());
    for (std::size_t c : cols) {
      a.col_idx.push_back(c);
      a.values.push_back(1.0 / static_cast<double>(cols.size()));
    }
    a.row_ptr.push_back(a.col_idx.size());
  }
  return a;
}

template <auto Gemm>
void BM_gemm(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = random_values(n * n, 1), b = random_values(n * n, 2);
  std::vector<double> c(n * n);
  for (auto _ : state) {
    Gemm(a, b, c, n, n, n);
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n * n * n));
}

template <auto Spmm>
void BM_spmm(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const std::size_t f = 64;
  const auto a = random_csr(n, 8, 3);
  const auto x = random_values(n * f, 4);
  std::vector<double> y(n * f);
  for (auto _ : state) {
    Spmm(a, x, y, f);
    benchmark::DoNotOptimize(y.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(a.nnz() * f));
}

template <auto Softmax>
void BM_softmax(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = random_values(n * n, 5);
  std::vector<double> out(n * n);
  for (auto _ : state) {
    Softmax(a, out, n, n);
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n * n));
}

}  // namespace

BENCHMARK(BM_gemm<k::serial::gemm>)->Name("gemm/serial")->RangeMultiplier(2)->Range(64, 256)->UseRealTime();
BENCHMARK(BM_gemm<k::omp::gemm>)->Name("gemm/omp")->RangeMultiplier(2)->Range(64, 256)->UseRealTime();
BENCHMARK(BM_spmm<k::serial::spmm>)->Name("spmm/serial")->RangeMultiplier(4)->Range(1024, 16384)->UseRealTime();
BENCHMARK(BM_spmm<k::omp::spmm>)->Name("spmm/omp")->RangeMultiplier(4)->Range(1024, 16384)->UseRealTime();
BENCHMARK(BM_softmax<k::serial::row_softmax>)->Name("softmax/serial")->RangeMultiplier(2)->Range(128, 1024)->UseRealTime();
BENCHMARK(BM_softmax<k::omp::row_softmax>)->Name("softmax/omp")->RangeMultiplier(2)->Range(128, 1024)->UseRealTime();

BENCHMARK_MAIN();
