#include <benchmark/benchmark.h>

#include <vector>

#include "fh/kernels.hpp"
#include "fh/rng.hpp"

namespace {

using fh::kernels::ConvGeometry;
using fh::kernels::TransposedConvGeometry;
namespace par = fh::kernels::parallel;
namespace ref = fh::kernels::reference;

std::vector<float> random_vec(std::size_t n, std::uint64_t seed) {
  fh::Rng rng(seed);
  std::vector<float> v(n);
  for (auto& x : v) x = static_cast<float>(rng.uniform(-1.0, 1.0));
  return v;
}

// Shapes from the desk-scale U-Net: batch 8, 64x64 input, 8..32 channels.
ConvGeometry conv_shape(const benchmark::State& state) {
  const int c = static_cast<int>(state.range(0));
  const int size = static_cast<int>(state.range(1));
  return ConvGeometry{8, c, size, size, c, 3, 1, 1};
}

struct ConvData {
  std::vector<float> x, w, b, y, dy, dx, dw, db;
  explicit ConvData(const ConvGeometry& g)
      : x(random_vec(static_cast<std::size_t>(g.batch) * g.in_channels * g.in_h * g.in_w, 1)),
        w(random_vec(static_cast<std::size_t>(g.out_channels) * g.in_channels * g.kernel * g.kernel, 2)),
        b(random_vec(g.out_channels, 3)),
        y(static_cast<std::size_t>(g.batch) * g.out_channels * g.out_h() * g.out_w()),
        dy(random_vec(y.size(), 4)),
        dx(x.size()),
        dw(w.size()),
        db(b.size()) {}
};

double conv_flops(const ConvGeometry& g) {
  return 2.0 * g.batch * g.out_channels * g.out_h() * g.out_w() * g.in_channels * g.kernel * g.kernel;
}

template <bool Parallel>
void BM_Conv2dForward(benchmark::State& state) {
  const auto g = conv_shape(state);
  ConvData d(g);
  for (auto _ : state) {
    if constexpr (Parallel) par::conv2d_forward<float>(g, d.x, d.w, d.b, d.y);
    else ref::conv2d_forward<float>(g, d.x, d.w, d.b, d.y);
    benchmark::DoNotOptimize(d.y.data());
  }
  state.counters["GFLOPS"] = benchmark::Counter(conv_flops(g), benchmark::Counter::kIsIterationInvariantRate,
                                                benchmark::Counter::kIs1000);
}

template <bool Parallel>
void BM_Conv2dBackward(benchmark::State& state) {
  const auto g = conv_shape(state);
  ConvData d(g);
  for (auto _ : state) {
    if constexpr (Parallel) {
      par::conv2d_backward_data<float>(g, d.dy, d.w, d.dx);
      par::conv2d_backward_weights<float>(g, d.x, d.dy, d.dw, d.db);
    } else {
      ref::conv2d_backward_data<float>(g, d.dy, d.w, d.dx);
      ref::conv2d_backward_weights<float>(g, d.x, d.dy, d.dw, d.db);
    }
    benchmark::DoNotOptimize(d.dx.data());
    benchmark::DoNotOptimize(d.dw.data());
  }
  state.counters["GFLOPS"] = benchmark::Counter(2 * conv_flops(g), benchmark::Counter::kIsIterationInvariantRate,
                                                benchmark::Counter::kIs1000);
}

template <bool Parallel>
void BM_ConvTranspose2dForward(benchmark::State& state) {
  const int c = static_cast<int>(state.range(0));
  const int size = static_cast<int>(state.range(1));
  const TransposedConvGeometry g{8, c, size, size, c, 4, 2, 1};
  const auto x = random_vec(static_cast<std::size_t>(8) * c * size * size, 1);
  const auto w = random_vec(static_cast<std::size_t>(c) * c * 16, 2);
  const auto b = random_vec(c, 3);
  std::vector<float> y(static_cast<std::size_t>(8) * c * g.out_h() * g.out_w());
  for (auto _ : state) {
    if constexpr (Parallel) par::conv_transpose2d_forward<float>(g, x, w, b, y);
    else ref::conv_transpose2d_forward<float>(g, x, w, b, y);
    benchmark::DoNotOptimize(y.data());
  }
}

void conv_args(benchmark::internal::Benchmark* b) {
  b->Args({8, 64})->Args({16, 32})->Args({32, 16})->Unit(benchmark::kMillisecond);
}

BENCHMARK(BM_Conv2dForward<true>)->Name("conv2d_forward/parallel")->Apply(conv_args);
BENCHMARK(BM_Conv2dForward<false>)->Name("conv2d_forward/reference")->Apply(conv_args);
BENCHMARK(BM_Conv2dBackward<true>)->Name("conv2d_backward/parallel")->Apply(conv_args);
BENCHMARK(BM_Conv2dBackward<false>)->Name("conv2d_backward/reference")->Apply(conv_args);
BENCHMARK(BM_ConvTranspose2dForward<true>)->Name("conv_transpose2d_forward/parallel")->Apply(conv_args);
BENCHMARK(BM_ConvTranspose2dForward<false>)->Name("conv_transpose2d_forward/reference")->Apply(conv_args);

}  // namespace

BENCHMARK_MAIN();
