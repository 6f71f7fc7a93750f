// SPDX-License-Identifier: Apache-2.0
// Serial reference kernels against their OpenMP counterparts.

#include <benchmark/benchmark.h>

#include <vector>

#include "ld3m/kernels.hpp"
#include "ld3m/rng.hpp"

namespace k = ld3m::kernels;

namespace {

std::vector<double> random_vec(std::size_t n, std::uint64_t seed) {
  ld3m::Rng rng(seed);
  std::vector<double> v(n);
  for (auto& x : v) x = rng.normal();
  return v;
}

template <auto Gemm>
void BM_gemm(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const k::GemmDims d{n, n, n};
  const auto a = random_vec(n * n, 1), b = random_vec(n * n, 2);
  std::vector<double> c(n * n);
  for (auto _ : state) {
    Gemm(d, a, b, c);
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * 2 * n * n * n));
}

template <auto Unary>
void BM_tanh(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto x = random_vec(n, 3);
  std::vector<double> out(n);
  for (auto _ : state) {
    Unary(k::Unary::tanh, x, out);
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * n));
}

template <auto Binary>
void BM_mul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = random_vec(n, 4), b = random_vec(n, 5);
  std::vector<double> out(n);
  for (auto _ : state) {
    Binary(k::Binary::mul, a, b, out);
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * n));
}

template <auto LogSoftmax>
void BM_log_softmax(benchmark::State& state) {
  const auto rows = static_cast<std::size_t>(state.range(0));
  const std::size_t cols = 10;
  const auto x = random_vec(rows * cols, 6);
  std::vector<double> out(rows * cols);
  for (auto _ : state) {
    LogSoftmax(rows, cols, x, out);
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * rows));
}

}  // namespace

BENCHMARK(BM_gemm<k::serial::gemm>)->Name("gemm/serial")->Arg(32)->Arg(128)->Arg(256);
BENCHMARK(BM_gemm<k::omp::gemm>)->Name("gemm/openmp")->Arg(32)->Arg(128)->Arg(256);
BENCHMARK(BM_tanh<k::serial::unary>)->Name("tanh/serial")->Arg(1 << 12)->Arg(1 << 18);
BENCHMARK(BM_tanh<k::omp::unary>)->Name("tanh/openmp")->Arg(1 << 12)->Arg(1 << 18);
BENCHMARK(BM_mul<k::serial::binary>)->Name("mul/serial")->Arg(1 << 12)->Arg(1 << 18);
BENCHMARK(BM_mul<k::omp::binary>)->Name("mul/openmp")->Arg(1 << 12)->Arg(1 << 18);
BENCHMARK(BM_log_softmax<k::serial::log_softmax_rows>)->Name("log_softmax/serial")->Arg(256)->Arg(16384);
BENCHMARK(BM_log_softmax<k::omp::log_softmax_rows>)->Name("log_softmax/openmp")->Arg(256)->Arg(16384);
BENCHMARK_MAIN();
