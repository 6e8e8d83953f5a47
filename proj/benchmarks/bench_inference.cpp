#include <benchmark/benchmark.h>

#include "csda/config.hpp"
#include "csda/data.hpp"
#include "csda/nn_ops.hpp"
#include "csda/rng.hpp"
#include "csda/trainer.hpp"

using namespace csda;

namespace {

Tensor random_batch(int n, int s, int c, std::uint64_t seed) {
  Rng rng(seed);
  Tensor x(Shape{n, s, s, c}, 0.0);
  for (auto& v : x.data) v = rng.uniform();
  return x;
}

void BM_Conv2d(benchmark::State& state) {
  const int s = static_cast<int>(state.range(0));
  const int c = static_cast<int>(state.range(1));
  Tensor x = random_batch(1, s, 3, 1);
  Rng rng(2);
  Tensor w(Shape{3, 3, 3, c}, 0.0);
  for (auto& v : w.data) v = rng.normal(0, 0.1);
  Tensor b(Shape{c}, 0.0);
  for (auto _ : state) {
    Tensor y = conv2d(x, w, b);
    benchmark::DoNotOptimize(y.data.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(s) * s);
}
BENCHMARK(BM_Conv2d)->Args({64, 8})->Args({64, 16})->Args({128, 8});

void BM_Predict(benchmark::State& state) {
  TrainConfig cfg;
  cfg.image_size = 64;
  cfg.depth = static_cast<int>(state.range(0));
  cfg.base_width = static_cast<int>(state.range(1));
  cfg.d_cs = 4;
  cfg.seed = 3;
  ModelPair model = model_for_config(cfg);
  SceneParams params;
  params.image_size = 64;
  Sample sample = generate(params, 5);
  for (auto _ : state) {
    Tensor probs = predict(model, sample);
    benchmark::DoNotOptimize(probs.data.data());
  }
}
BENCHMARK(BM_Predict)->Args({2, 4})->Args({3, 8});

void BM_Generate(benchmark::State& state) {
  SceneParams params;
  params.image_size = static_cast<int>(state.range(0));
  std::uint64_t seed = 0;
  for (auto _ : state) {
    Sample s = generate(params, seed++);
    benchmark::DoNotOptimize(s.image.data.data());
  }
}
BENCHMARK(BM_Generate)->Arg(64)->Arg(128);

}  // namespace

BENCHMARK_MAIN();
