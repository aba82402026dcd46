// Serial reference kernels against their OpenMP counterparts on desk-scale shapes.

#include <benchmark/benchmark.h>

#include <vector>

#include "mea/kernels.hpp"
#include "mea/rng.hpp"

using namespace mea;

namespace {

std::vector<double> random_buffer(std::size_t n, std::uint64_t seed) {
  Rng rng = make_rng(seed);
  std::vector<double> v(n);
  for (auto& x : v) x = uniform01(rng) - 0.5;
  return v;
}

// Batch 8 of 64x64 images through the encoder's first layer shape by default.
kernels::ConvDims conv_dims(const benchmark::State& state) {
  return kernels::ConvDims{.n = 8,
                           .in_c = static_cast<int>(state.range(0)),
                           .out_c = static_cast<int>(state.range(1)),
                           .h = 64,
                           .w = 64,
                           .k = 3};
}

template <auto Kernel>
void BM_ConvForward(benchmark::State& state) {
  const auto d = conv_dims(state);
  const auto x = random_buffer(static_cast<std::size_t>(d.n) * d.in_c * d.h * d.w, 1);
  const auto w = random_buffer(static_cast<std::size_t>(d.out_c) * d.in_c * d.k * d.k, 2);
  const auto b = random_buffer(d.out_c, 3);
  std::vector<double> y(static_cast<std::size_t>(d.n) * d.out_c * d.h * d.w);
  for (auto _ : state) {
    Kernel(x, w, b, y, d);
    benchmark::DoNotOptimize(y.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<long>(y.size()));
}

template <auto Kernel>
void BM_ConvBackwardInput(benchmark::State& state) {
  const auto d = conv_dims(state);
  const auto dy = random_buffer(static_cast<std::size_t>(d.n) * d.out_c * d.h * d.w, 4);
  const auto w = random_buffer(static_cast<std::size_t>(d.out_c) * d.in_c * d.k * d.k, 5);
  std::vector<double> dx(static_cast<std::size_t>(d.n) * d.in_c * d.h * d.w);
  for (auto _ : state) {
    Kernel(dy, w, dx, d);
    benchmark::DoNotOptimize(dx.data());
  }
}

template <auto Kernel>
void BM_ConvBackwardParams(benchmark::State& state) {
  const auto d = conv_dims(state);
  const auto x = random_buffer(static_cast<std::size_t>(d.n) * d.in_c * d.h * d.w, 6);
  const auto dy = random_buffer(static_cast<std::size_t>(d.n) * d.out_c * d.h * d.w, 7);
  std::vector<double> dw(static_cast<std::size_t>(d.out_c) * d.in_c * d.k * d.k);
  std::vector<double> db(d.out_c);
  for (auto _ : state) {
    Kernel(x, dy, dw, db, d);
    benchmark::DoNotOptimize(dw.data());
  }
}

template <auto Kernel>
void BM_LinearForward(benchmark::State& state) {
  const kernels::LinearDims d{.n = 8, .in = static_cast<int>(state.range(0)), .out = static_cast<int>(state.range(1))};
  const auto x = random_buffer(static_cast<std::size_t>(d.n) * d.in, 8);
  const auto w = random_buffer(static_cast<std::size_t>(d.out) * d.in, 9);
  const auto b = random_buffer(d.out, 10);
  std::vector<double> y(static_cast<std::size_t>(d.n) * d.out);
  for (auto _ : state) {
    Kernel(x, w, b, y, d);
    benchmark::DoNotOptimize(y.data());
  }
}

template <auto Kernel>
void BM_AvgPool(benchmark::State& state) {
  const kernels::PlaneDims d{.planes = 8 * 8, .h = 64, .w = 64, .factor = static_cast<int>(state.range(0))};
  const auto x = random_buffer(static_cast<std::size_t>(d.planes) * d.h * d.w, 11);
  std::vector<double> y(static_cast<std::size_t>(d.planes) * (d.h / d.factor) * (d.w / d.factor));
  for (auto _ : state) {
    Kernel(x, y, d);
    benchmark::DoNotOptimize(y.data());
  }
}

template <auto Kernel>
void BM_Jpeg(benchmark::State& state) {
  const kernels::PlaneDims d{.planes = 8 * 3, .h = 64, .w = 64, .factor = 1};
  auto x = random_buffer(static_cast<std::size_t>(d.planes) * d.h * d.w, 12);
  for (auto& v : x) v += 0.5;
  std::vector<double> y(x.size());
  const auto table = kernels::luminance_table(50);
  for (auto _ : state) {
    Kernel(x, y, d, table);
    benchmark::DoNotOptimize(y.data());
  }
}

}  // namespace

// {in_c, out_c}: encoder features, fuse, and decoder conv2 shapes.
#define MEA_CONV_ARGS ->Args({3, 8})->Args({12, 8})->Args({8, 8})->Unit(benchmark::kMicrosecond)

BENCHMARK(BM_ConvForward<kernels::ref::conv2d_forward>) MEA_CONV_ARGS;
BENCHMARK(BM_ConvForward<kernels::omp::conv2d_forward>) MEA_CONV_ARGS;
BENCHMARK(BM_ConvBackwardInput<kernels::ref::conv2d_backward_input>) MEA_CONV_ARGS;
BENCHMARK(BM_ConvBackwardInput<kernels::omp::conv2d_backward_input>) MEA_CONV_ARGS;
BENCHMARK(BM_ConvBackwardParams<kernels::ref::conv2d_backward_params>) MEA_CONV_ARGS;
BENCHMARK(BM_ConvBackwardParams<kernels::omp::conv2d_backward_params>) MEA_CONV_ARGS;

// {in, out}: encoder message projection at grid 16 and the decoder readout.
BENCHMARK(BM_LinearForward<kernels::ref::linear_forward>)->Args({62, 1024})->Args({512, 30});
BENCHMARK(BM_LinearForward<kernels::omp::linear_forward>)->Args({62, 1024})->Args({512, 30});

BENCHMARK(BM_AvgPool<kernels::ref::avg_pool_forward>)->Arg(2)->Arg(4);
BENCHMARK(BM_AvgPool<kernels::omp::avg_pool_forward>)->Arg(2)->Arg(4);

BENCHMARK(BM_Jpeg<kernels::ref::jpeg_quantize>)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_Jpeg<kernels::omp::jpeg_quantize>)->Unit(benchmark::kMicrosecond);

BENCHMARK_MAIN();
