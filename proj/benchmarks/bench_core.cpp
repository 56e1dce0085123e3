#include "sal/data.hpp"
#include "sal/engine.hpp"
#include "sal/floors.hpp"
#include "sal/nn.hpp"
#include "sal/optimizer.hpp"

#include <benchmark/benchmark.h>

#include <vector>

namespace {

constexpr int kIn = 784;
constexpr int kClasses = 10;
constexpr int kBatch = 64;

sal::Matrix random_batch() { return sal::Matrix::Random(kBatch, kIn); }

std::vector<int> labels() {
    std::vector<int> y(kBatch);
    for (int i = 0; i < kBatch; ++i) y[i] = i % kClasses;
    return y;
}

sal::Dataset blobs() { return sal::synth_blobs(256, 64, kClasses, 3.0, 1); }

} // namespace

// Args: depth, width.
static void BM_Forward(benchmark::State& state) {
    const auto net = sal::Network::initialized(kIn, kClasses, state.range(0), state.range(1), sal::Activation::sigmoid, 1);
    const auto x = random_batch();
    for (auto _ : state) benchmark::DoNotOptimize(sal::forward(net, x));
    state.SetItemsProcessed(state.iterations() * kBatch);
}
BENCHMARK(BM_Forward)->Args({4, 64})->Args({8, 256})->Args({16, 256});

static void BM_ForwardBackward(benchmark::State& state) {
    const auto net = sal::Network::initialized(kIn, kClasses, state.range(0), state.range(1), sal::Activation::sigmoid, 1);
    const auto x = random_batch();
    const auto y = labels();
    for (auto _ : state) {
        const auto trace = sal::forward(net, x);
        sal::OutputGradients head;
        head.logits = sal::softmax_ce(trace.logits, y).grad;
        benchmark::DoNotOptimize(sal::backward(net, trace, head));
    }
    state.SetItemsProcessed(state.iterations() * kBatch);
}
BENCHMARK(BM_ForwardBackward)->Args({4, 64})->Args({8, 256})->Args({16, 256});

static void BM_AdamStep(benchmark::State& state) {
    auto net = sal::Network::initialized(kIn, kClasses, state.range(0), state.range(1), sal::Activation::sigmoid, 1);
    sal::Optimizer opt({}, net);
    const auto grads = sal::zero_gradients(net);
    for (auto _ : state) opt.step(net, grads);
}
BENCHMARK(BM_AdamStep)->Args({8, 256});

static void BM_DirectEpoch(benchmark::State& state) {
    const auto data = blobs();
    auto net = sal::Network::initialized(data.in_dim(), kClasses, state.range(0), state.range(1), sal::Activation::sigmoid, 1);
    sal::Optimizer opt({}, net);
    sal::ShuffleStream shuffle(1);
    for (auto _ : state) benchmark::DoNotOptimize(sal::train_direct(net, opt, data, 1, kBatch, shuffle));
    state.SetItemsProcessed(state.iterations() * data.size());
}
BENCHMARK(BM_DirectEpoch)->Args({8, 128})->Unit(benchmark::kMillisecond);

// One guidance epoch of an 8-layer floor under its 4-layer parent.
static void BM_GuidedEpoch(benchmark::State& state) {
    const auto data = blobs();
    const auto specs = sal::floor_specs(8, 128, 2);
    const auto upper = sal::Network::initialized(data.in_dim(), kClasses, specs[1].depth, specs[1].width,
                                                 sal::Activation::sigmoid, 2);
    auto lower = sal::Network::initialized(data.in_dim(), kClasses, specs[0].depth, specs[0].width,
                                           sal::Activation::sigmoid, 3);
    const auto mapping = sal::map_layers(specs[1], specs[0]);
    sal::Optimizer opt({}, lower);
    sal::ShuffleStream shuffle(1);
    for (auto _ : state)
        benchmark::DoNotOptimize(sal::train_guided(lower, opt, upper, mapping, data, 1, kBatch, shuffle));
    state.SetItemsProcessed(state.iterations() * data.size());
}
BENCHMARK(BM_GuidedEpoch)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
