// Serial reference kernels vs the blocked OpenMP kernels, plus whole-network
// forward passes. Thread count follows MELAD_THREADS / OMP_NUM_THREADS.

#include <benchmark/benchmark.h>

#include "melad/conv.hpp"
#include "melad/model.hpp"
#include "melad/rng.hpp"
#include "melad/trainer.hpp"

using namespace melad;

namespace {

Tensor random(std::vector<std::size_t> dims, std::uint64_t seed) {
  Tensor t(std::move(dims));
  Rng rng(seed);
  for (auto& v : t.data()) v = static_cast<float>(rng.uniform(-1.0, 1.0));
  return t;
}

struct ConvCase {
  Tensor input, grad;
  ConvParams params;
};

// args: channels, spatial size, dilation; batch of 4
ConvCase make_case(const benchmark::State& state) {
  const auto c = static_cast<std::size_t>(state.range(0));
  const auto s = static_cast<std::size_t>(state.range(1));
  ConvCase k;
  k.input = random({4, c, s, s}, 1);
  k.grad = random({4, c, s, s}, 2);
  k.params.kernel = random({c, c, 3, 3}, 3);
  k.params.bias.assign(c, 0.1f);
  k.params.dilation = static_cast<int>(state.range(2));
  return k;
}

void set_flops(benchmark::State& state, double passes) {
  const double c = double(state.range(0)), s = double(state.range(1));
  state.counters["GFLOP/s"] = benchmark::Counter(passes * 2.0 * 9 * c * c * s * s * 4 * 1e-9,
                                                 benchmark::Counter::kIsIterationInvariantRate);
}

void BM_ConvForwardReference(benchmark::State& state) {
  const ConvCase k = make_case(state);
  for (auto _ : state) benchmark::DoNotOptimize(reference::conv2d_dilated(k.input, k.params));
  set_flops(state, 1);
}

void BM_ConvForward(benchmark::State& state) {
  const ConvCase k = make_case(state);
  for (auto _ : state) benchmark::DoNotOptimize(conv2d_dilated(k.input, k.params));
  set_flops(state, 1);
}

void BM_ConvBackwardReference(benchmark::State& state) {
  const ConvCase k = make_case(state);
  for (auto _ : state)
    benchmark::DoNotOptimize(reference::conv2d_dilated_backward(k.input, k.params, k.grad));
  set_flops(state, 2);
}

void BM_ConvBackward(benchmark::State& state) {
  const ConvCase k = make_case(state);
  const auto mode = state.range(3) ? ExecMode::fast : ExecMode::deterministic;
  for (auto _ : state)
    benchmark::DoNotOptimize(conv2d_dilated_backward(k.input, k.params, k.grad, mode));
  set_flops(state, 2);
}

void BM_NetworkForward(benchmark::State& state, const char* preset) {
  const Network net(initial_weights(preset_architecture(preset), 1));
  const Tensor img = random({3, 150, 150}, 4);
  for (auto _ : state) benchmark::DoNotOptimize(net.forward(img));
}

void conv_args(benchmark::internal::Benchmark* b) {
  b->ArgNames({"ch", "px", "dil"})->Args({8, 32, 1})->Args({32, 32, 2})->Args({32, 64, 4});
}

}  // namespace

BENCHMARK(BM_ConvForwardReference)->Apply(conv_args)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ConvForward)->Apply(conv_args)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ConvBackwardReference)->Apply(conv_args)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ConvBackward)
    ->ArgNames({"ch", "px", "dil", "fast"})
    ->Args({8, 32, 1, 0})
    ->Args({32, 32, 2, 0})
    ->Args({32, 64, 4, 0})
    ->Args({32, 64, 4, 1})
    ->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(BM_NetworkForward, lite, "mela-d-lite")->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(BM_NetworkForward, full, "mela-d")->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
