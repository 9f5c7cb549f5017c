#include <benchmark/benchmark.h>

#include <random>

#include "pd/gradcheck.hpp"
#include "pd/losses.hpp"
#include "pd/train.hpp"

using namespace pd;

namespace {

Tensorf random_tensor(Shape s, std::uint64_t seed) {
  std::mt19937_64 g(seed);
  std::uniform_real_distribution<float> dist(0.0f, 1.0f);
  Tensorf t = Tensorf::zeros(s);
  for (auto& v : *t.data) v = dist(g);
  return t;
}

void BM_Conv2dForward(benchmark::State& state) {
  const int c = int(state.range(0));
  Tensorf x = random_tensor({1, c, 64, 64}, 1);
  Tensorf k = random_tensor({c, c, 3, 3}, 2);
  Tensorf b = Tensorf::zeros({1, c, 1, 1});
  for (auto _ : state) {
    Tensorf y = conv2d(x, k, b, 1, 1);
    benchmark::DoNotOptimize(y.data->data());
  }
  state.SetItemsProcessed(state.iterations() * x.numel());
}
BENCHMARK(BM_Conv2dForward)->Arg(16)->Arg(32);

void BM_Conv2dBackward(benchmark::State& state) {
  const int c = int(state.range(0));
  Tensorf x = random_tensor({1, c, 64, 64}, 1);
  Tensorf k = random_tensor({c, c, 3, 3}, 2);
  Tensorf b = Tensorf::zeros({1, c, 1, 1});
  for (auto _ : state) {
    Tapef tape;
    tape.watch(x);
    tape.watch(k);
    tape.backward(reduce_mean(conv2d(x, k, b, 1, 1)));
    benchmark::DoNotOptimize(x.grad->data());
    unwatch(x);
    unwatch(k);
  }
}
BENCHMARK(BM_Conv2dBackward)->Arg(16)->Arg(32);

void BM_PatchSampling(benchmark::State& state) {
  const int n = int(state.range(0));
  Tensorf img = random_tensor({1, 1, 64, 128}, 3);
  DisparityMap<float> d{Tensorf::full({1, 1, 64, 128}, 4.5f), Side::left};
  for (auto _ : state) {
    PatchSet<float> p = sample_patches(img, &d, n);
    benchmark::DoNotOptimize(p.patches.data->data());
  }
}
BENCHMARK(BM_PatchSampling)->Arg(5)->Arg(9);

void BM_ZnccLoss(benchmark::State& state) {
  const int n = int(state.range(0));
  StereoSample<float> s = gen_textured_scene<float>(
      128, 64, TextureSpec{}, DisparitySpec::constant(4.0), 7);
  DisparityMap<float> dl{Tensorf::full({1, 1, 64, 128}, 4.0f), Side::left};
  DisparityMap<float> dr{Tensorf::full({1, 1, 64, 128}, 4.0f), Side::right};
  for (auto _ : state) {
    auto [scalar, map] = patch_matching_loss(s.left, s.right, dl, dr, n);
    benchmark::DoNotOptimize(scalar.item());
  }
}
BENCHMARK(BM_ZnccLoss)->Arg(5)->Arg(9);

// one optimization step end to end (network init included once per run)
void BM_FullTrainStep(benchmark::State& state) {
  TrainConfig cfg;
  cfg.width = 64;
  cfg.height = 32;
  cfg.batch = int(state.range(0));
  cfg.total_steps = 1;
  for (auto _ : state) {
    TrainResult r = train(cfg);
    benchmark::DoNotOptimize(r.log.data());
  }
}
BENCHMARK(BM_FullTrainStep)->Arg(1)->Arg(4)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
