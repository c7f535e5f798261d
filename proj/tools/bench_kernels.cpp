// Serial reference vs OpenMP kernels. Run with OMP_NUM_THREADS to vary the
// team size; the serial rows are the baseline.

#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "entlm/kernels.hpp"

namespace k = entlm::kernels;

namespace {

std::vector<float> random_vec(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> nd(0.0f, 1.0f);
  std::vector<float> v(n);
  for (auto& x : v) x = nd(rng);
  return v;
}

template <bool Parallel>
void BM_matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = random_vec(n * n, 1), b = random_vec(n * n, 2);
  std::vector<float> c(n * n);
  for (auto _ : state) {
    if constexpr (Parallel) {
      k::omp::matmul_nn<float>(a, b, c, n, n, n, false);
    } else {
      k::serial::matmul_nn<float>(a, b, c, n, n, n, false);
    }
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * n * n * n));
}

template <bool Parallel>
void BM_softmax(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto x = random_vec(n * n, 3);
  std::vector<std::uint8_t> mask(n * n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j <= i; ++j) mask[i * n + j] = 1;
  }
  std::vector<float> y(n * n);
  for (auto _ : state) {
    if constexpr (Parallel) {
      k::omp::softmax_rows<float>(x, mask, y, n, n);
    } else {
      k::serial::softmax_rows<float>(x, mask, y, n, n);
    }
    benchmark::DoNotOptimize(y.data());
  }
}

template <bool Parallel>
void BM_layer_norm(benchmark::State& state) {
  const auto rows = static_cast<std::size_t>(state.range(0));
  const std::size_t cols = 256;
  const auto x = random_vec(rows * cols, 4);
  const std::vector<float> g(cols, 1.0f), b(cols, 0.0f);
  std::vector<float> y(rows * cols), mean(rows), rstd(rows);
  for (auto _ : state) {
    if constexpr (Parallel) {
      k::omp::layer_norm<float>(x, g, b, 1e-5f, y, mean, rstd, rows, cols);
    } else {
      k::serial::layer_norm<float>(x, g, b, 1e-5f, y, mean, rstd, rows, cols);
    }
    benchmark::DoNotOptimize(y.data());
  }
}

template <bool Parallel>
void BM_gelu(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto x = random_vec(n, 5);
  std::vector<float> y(n);
  for (auto _ : state) {
    if constexpr (Parallel) {
      k::omp::gelu<float>(x, y);
    } else {
      k::serial::gelu<float>(x, y);
    }
    benchmark::DoNotOptimize(y.data());
  }
}

}  // namespace

BENCHMARK(BM_matmul<false>)->Name("matmul/serial")->Arg(64)->Arg(128)->Arg(256);
BENCHMARK(BM_matmul<true>)->Name("matmul/omp")->Arg(64)->Arg(128)->Arg(256);
BENCHMARK(BM_softmax<false>)->Name("softmax/serial")->Arg(128)->Arg(512);
BENCHMARK(BM_softmax<true>)->Name("softmax/omp")->Arg(128)->Arg(512);
BENCHMARK(BM_layer_norm<false>)->Name("layer_norm/serial")->Arg(128)->Arg(1024);
BENCHMARK(BM_layer_norm<true>)->Name("layer_norm/omp")->Arg(128)->Arg(1024);
BENCHMARK(BM_gelu<false>)->Name("gelu/serial")->Arg(1 << 14)->Arg(1 << 18);
BENCHMARK(BM_gelu<true>)->Name("gelu/omp")->Arg(1 << 14)->Arg(1 << 18);

BENCHMARK_MAIN();
