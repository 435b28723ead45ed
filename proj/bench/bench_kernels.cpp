// Serial reference kernels against the OpenMP versions, at the shapes
// of the enhanced model's first layers (batch 16, 1 s crops).

#include <random>
#include <vector>

#include <benchmark/benchmark.h>

#include "xlid/kernels.hpp"

namespace k = xlid::kernels;

namespace {

std::vector<float> random_vec(std::size_t n, unsigned seed) {
  std::mt19937 rng(seed);
  std::normal_distribution<float> d;
  std::vector<float> v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

template <bool Parallel>
void BM_Gemm(benchmark::State& state) {
  const k::Index m = state.range(0), n = state.range(1), kk = state.range(2);
  const auto a = random_vec(m * kk, 1), b = random_vec(kk * n, 2);
  std::vector<float> c(m * n);
  for (auto _ : state) {
    if constexpr (Parallel) {
      k::gemm<float>(false, false, m, n, kk, a.data(), b.data(), c.data(), false);
    } else {
      k::serial::gemm<float>(false, false, m, n, kk, a.data(), b.data(), c.data(), false);
    }
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(state.iterations() * 2 * m * n * kk);
}

template <bool Parallel>
void BM_Splice(benchmark::State& state) {
  const k::Index batch = 16, t = 98, dim = state.range(0);
  const std::vector<int> offsets{-4, -2, 0, 2, 4};
  const auto x = random_vec(batch * t * dim, 3);
  std::vector<float> out(batch * (t - 8) * dim * offsets.size());
  for (auto _ : state) {
    if constexpr (Parallel) {
      k::splice<float>(x.data(), batch, t, dim, offsets, out.data());
    } else {
      k::serial::splice<float>(x.data(), batch, t, dim, offsets, out.data());
    }
    benchmark::DoNotOptimize(out.data());
  }
  state.SetBytesProcessed(state.iterations() * out.size() * sizeof(float));
}

template <bool Parallel>
void BM_StatsPool(benchmark::State& state) {
  const k::Index batch = 16, t = state.range(0), dim = 1500;
  const auto x = random_vec(batch * t * dim, 4);
  std::vector<float> out(batch * 2 * dim);
  for (auto _ : state) {
    if constexpr (Parallel) {
      k::stats_pool<float>(x.data(), batch, t, dim, 1e-10f, out.data());
    } else {
      k::serial::stats_pool<float>(x.data(), batch, t, dim, 1e-10f, out.data());
    }
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(state.iterations() * batch * t * dim);
}

}  // namespace

// Rows are frames x batch, columns output width, depth spliced input width.
BENCHMARK(BM_Gemm<false>)->Args({1504, 1280, 120})->Args({1440, 512, 1280})->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Gemm<true>)->Args({1504, 1280, 120})->Args({1440, 512, 1280})->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Splice<false>)->Arg(24)->Arg(512)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_Splice<true>)->Arg(24)->Arg(512)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_StatsPool<false>)->Arg(84)->Arg(284)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_StatsPool<true>)->Arg(84)->Arg(284)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
