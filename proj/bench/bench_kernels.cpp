// OpenMP kernels against the serial reference, on shapes from the desk model.

#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "advreg/kernels.hpp"

namespace k = advreg::kernels;

namespace {

std::vector<double> filled(std::size_t n, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

k::ConvGeometry desk_conv(std::size_t batch) {
  k::ConvGeometry g;
  g.batch = batch;
  g.in_channels = 8;
  g.out_channels = 8;
  g.height = 10;
  g.width = 10;
  g.kernel = 3;
  return g;
}

template <auto Fn>
void BM_matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = filled(n * n, 1), b = filled(n * n, 2);
  std::vector<double> c(n * n);
  for (auto _ : state) {
    Fn(a, b, c, n, n, n);
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<long>(2 * n * n * n));
}

template <auto Fn>
void BM_conv_forward(benchmark::State& state) {
  const auto g = desk_conv(static_cast<std::size_t>(state.range(0)));
  const auto x = filled(g.input_size(), 3), w = filled(g.weight_size(), 4);
  std::vector<double> y(g.output_size());
  for (auto _ : state) {
    Fn(g, x, w, y);
    benchmark::DoNotOptimize(y.data());
  }
}

template <auto Fn>
void BM_conv_backward_input(benchmark::State& state) {
  const auto g = desk_conv(static_cast<std::size_t>(state.range(0)));
  const auto gy = filled(g.output_size(), 5), w = filled(g.weight_size(), 6);
  std::vector<double> gx(g.input_size());
  for (auto _ : state) {
    Fn(g, gy, w, gx);
    benchmark::DoNotOptimize(gx.data());
  }
}

template <auto Fn>
void BM_conv_backward_weight(benchmark::State& state) {
  const auto g = desk_conv(static_cast<std::size_t>(state.range(0)));
  const auto x = filled(g.input_size(), 7), gy = filled(g.output_size(), 8);
  std::vector<double> gw(g.weight_size());
  for (auto _ : state) {
    Fn(g, x, gy, gw);
    benchmark::DoNotOptimize(gw.data());
  }
}

template <auto Fn>
void BM_max_pool(benchmark::State& state) {
  k::PoolGeometry g;
  g.planes = static_cast<std::size_t>(state.range(0)) * 8;
  g.height = 10;
  g.width = 10;
  const auto x = filled(g.planes * g.height * g.width, 9);
  std::vector<double> y(g.output_size());
  std::vector<std::size_t> arg(g.output_size());
  for (auto _ : state) {
    Fn(g, x, y, arg);
    benchmark::DoNotOptimize(y.data());
  }
}

}  // namespace

BENCHMARK(BM_matmul<k::matmul>)->Name("matmul/omp")->Arg(64)->Arg(256);
BENCHMARK(BM_matmul<k::reference::matmul>)->Name("matmul/serial")->Arg(64)->Arg(256);
BENCHMARK(BM_conv_forward<k::conv2d_forward>)->Name("conv_forward/omp")->Arg(128);
BENCHMARK(BM_conv_forward<k::reference::conv2d_forward>)->Name("conv_forward/serial")->Arg(128);
BENCHMARK(BM_conv_backward_input<k::conv2d_backward_input_acc>)->Name("conv_backward_input/omp")->Arg(128);
BENCHMARK(BM_conv_backward_input<k::reference::conv2d_backward_input_acc>)
    ->Name("conv_backward_input/serial")
    ->Arg(128);
BENCHMARK(BM_conv_backward_weight<k::conv2d_backward_weight_acc>)->Name("conv_backward_weight/omp")->Arg(128);
BENCHMARK(BM_conv_backward_weight<k::reference::conv2d_backward_weight_acc>)
    ->Name("conv_backward_weight/serial")
    ->Arg(128);
BENCHMARK(BM_max_pool<k::max_pool_forward>)->Name("max_pool/omp")->Arg(128);
BENCHMARK(BM_max_pool<k::reference::max_pool_forward>)->Name("max_pool/serial")->Arg(128);

BENCHMARK_MAIN();
