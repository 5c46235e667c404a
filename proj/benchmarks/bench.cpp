#include <benchmark/benchmark.h>

#include "icepll/data.hpp"
#include "icepll/loss.hpp"
#include "icepll/net.hpp"
#include "icepll/rng.hpp"

using namespace icepll;

namespace {

Vec bench_logits(std::uint64_t seed) {
  Rng rng(seed);
  Vec z(kNumClasses);
  for (double& v : z) v = rng.uniform(-4.0, 4.0);
  return z;
}

void BM_Softmax(benchmark::State& state) {
  const Vec z = bench_logits(1);
  for (auto _ : state) {
    benchmark::DoNotOptimize(softmax(z));
  }
}
BENCHMARK(BM_Softmax);

void BM_FocalLoss(benchmark::State& state) {
  const Vec p = softmax(bench_logits(2));
  const Vec y = {0, 0, 0.25, 0.75, 0, 0};
  for (auto _ : state) {
    benchmark::DoNotOptimize(focal_loss(p, y, 0.25, 1.0));
  }
}
BENCHMARK(BM_FocalLoss);

void BM_LossGradient(benchmark::State& state) {
  const Vec z = bench_logits(3);
  const Vec y = {0, 0, 0.25, 0.75, 0, 0};
  const LossConfig cfg = LossConfig::focal(0.25, 1.0);
  for (auto _ : state) {
    benchmark::DoNotOptimize(loss_gradient(z, y, cfg));
  }
}
BENCHMARK(BM_LossGradient);

void BM_EncodeConfidencePartial(benchmark::State& state) {
  EggCode egg;
  egg.sa = 86;
  egg.ca = 79;
  egg.sb = 83;
  egg.cb = 24;
  for (auto _ : state) {
    benchmark::DoNotOptimize(encode_confidence_partial(egg));
  }
}
BENCHMARK(BM_EncodeConfidencePartial);

void BM_ForwardBatch(benchmark::State& state) {
  const Network net(default_layer_spec(), 0);
  Rng rng(4);
  Tensor batch({static_cast<std::size_t>(state.range(0)), 3, 16, 16});
  for (double& v : batch.data) v = rng.normal(0.0, 1.0);
  for (auto _ : state) {
    benchmark::DoNotOptimize(net.forward(batch, false, nullptr, nullptr));
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_ForwardBatch)->Arg(1)->Arg(32)->Arg(128);

void BM_ForwardBackward(benchmark::State& state) {
  const Network net(default_layer_spec(), 0);
  Rng rng(5);
  const std::size_t n = static_cast<std::size_t>(state.range(0));
  Tensor batch({n, 3, 16, 16});
  for (double& v : batch.data) v = rng.normal(0.0, 1.0);
  const LossConfig cfg = LossConfig::focal(0.25, 1.0);
  Vec y(kNumClasses, 0.0);
  y[3] = 1.0;
  for (auto _ : state) {
    ForwardCache cache;
    Rng mask(6);
    const Tensor logits = net.forward(batch, true, &mask, &cache);
    Tensor grad(logits.shape);
    for (std::size_t b = 0; b < n; ++b) {
      Vec z(logits.data.begin() + b * kNumClasses, logits.data.begin() + (b + 1) * kNumClasses);
      const Vec g = loss_gradient(z, y, cfg);
      for (std::size_t j = 0; j < kNumClasses; ++j)
        grad.data[b * kNumClasses + j] = g[j] / static_cast<double>(n);
    }
    benchmark::DoNotOptimize(net.backward(cache, grad));
  }
  state.SetItemsProcessed(state.iterations() * n);
}
BENCHMARK(BM_ForwardBackward)->Arg(32)->Arg(128);

void BM_AdamStep(benchmark::State& state) {
  Network net(default_layer_spec(), 0);
  auto grads = zeros_like(net.parameters());
  Rng rng(7);
  for (auto& block : grads) {
    for (auto& t : block) {
      for (double& g : t.data) g = rng.normal(0.0, 0.01);
    }
  }
  auto adam = AdamState::init(net.parameters());
  for (auto _ : state) {
    adam_step(net.parameters(), grads, adam);
  }
}
BENCHMARK(BM_AdamStep);

void BM_GenerateSynthetic(benchmark::State& state) {
  SyntheticSpec spec = SyntheticSpec::defaults();
  spec.count = static_cast<std::size_t>(state.range(0));
  spec.patch = 16;
  for (auto _ : state) {
    benchmark::DoNotOptimize(generate_synthetic(spec, 0));
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_GenerateSynthetic)->Arg(100)->Arg(1000);

}  // namespace

BENCHMARK_MAIN();
