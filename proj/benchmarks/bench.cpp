#include <benchmark/benchmark.h>

#include "biseg/ops.hpp"
#include "biseg/pipeline.hpp"
#include "biseg/score_maps.hpp"
#include "biseg/synth_data.hpp"
#include "biseg/trainer.hpp"

using namespace biseg;

namespace {

Tensor random_tensor(Rng& rng, const Shape& shape) {
  Tensor t(shape);
  for (auto& v : t.data()) v = static_cast<float>(rng.uniform(-1, 1));
  return t;
}

void BM_Conv2d(benchmark::State& state) {
  const int c = static_cast<int>(state.range(0));
  const int hw = static_cast<int>(state.range(1));
  Rng rng(1);
  const Tensor in = random_tensor(rng, {c, hw, hw});
  const Tensor w = random_tensor(rng, {c, c, 3, 3});
  const Tensor b = random_tensor(rng, {c});
  for (auto _ : state) benchmark::DoNotOptimize(conv2d(in, w, b, ConvSpec{1, 1}));
  state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(c) * c * 9 * hw * hw);
}
BENCHMARK(BM_Conv2d)->Args({16, 32})->Args({32, 16})->Args({64, 8});

void BM_Assemble(benchmark::State& state) {
  const int k = static_cast<int>(state.range(0));
  const int m = static_cast<int>(state.range(1));
  Rng rng(2);
  const ScoreMapSet set{random_tensor(rng, {ScoreMapSet::channels_for(k, 4), 8, 8}), k, 8, 4};
  const Roi roi{5, 7, 50, 58, 1};
  for (auto _ : state) benchmark::DoNotOptimize(assemble(set, roi, m));
}
BENCHMARK(BM_Assemble)->Args({7, 20})->Args({9, 40})->Args({11, 40});

void BM_TrainStep(benchmark::State& state) {
  TrainConfig cfg;
  cfg.variant = all_variants()[static_cast<std::size_t>(state.range(0))].name;
  const auto sample = generate_sample(3, 0, SynthConfig{});
  const ModelParams params = ModelParams::init(cfg.model_config(), 1);
  Rng rng(4);
  for (auto _ : state) benchmark::DoNotOptimize(compute_step(params, sample, cfg, rng));
  state.SetLabel(cfg.variant);
}
BENCHMARK(BM_TrainStep)->DenseRange(0, 3)->Unit(benchmark::kMillisecond);

void BM_RunImage(benchmark::State& state) {
  TrainConfig tc;
  const auto sample = generate_sample(3, 0, SynthConfig{});
  const ModelParams params = ModelParams::init(tc.model_config(), 1);
  InferenceConfig ic;
  const auto props = proposals_for(sample, 0, ic, nullptr);
  for (auto _ : state) benchmark::DoNotOptimize(run_image(sample.image, props, params, ic));
}
BENCHMARK(BM_RunImage)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
