#include <benchmark/benchmark.h>

#include <random>

#include "dualmotion/synthetic.hpp"
#include "dualmotion/training.hpp"

using namespace dualmotion;

namespace {

Tensor uniform(Shape shape, std::uint64_t seed, double lo = -1, double hi = 1) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor t(std::move(shape));
  for (auto& v : t.values()) v = u(rng);
  return t;
}

ModelConfig model_config(int size, int width) {
  ModelConfig m;
  m.height = size;
  m.width = size;
  m.latent_channels = width;
  m.critic_channels = 8;
  return m;
}

}  // namespace

// Args: channels in/out, spatial size.
void BM_Conv2dForward(benchmark::State& state) {
  const int c = static_cast<int>(state.range(0)), s = static_cast<int>(state.range(1));
  const Var x(uniform({1, c, s, s}, 1)), w(uniform({c, c, 3, 3}, 2)), b(Tensor::zeros({c}));
  NoGradGuard guard;
  for (auto _ : state) benchmark::DoNotOptimize(ops::conv2d(x, w, b, ops::ConvGeometry::same(3)));
  state.SetItemsProcessed(state.iterations() * static_cast<long long>(c) * c * 9 * s * s);
}
BENCHMARK(BM_Conv2dForward)->Args({8, 64})->Args({16, 32})->Args({64, 16});

void BM_Conv2dBackward(benchmark::State& state) {
  const int c = static_cast<int>(state.range(0)), s = static_cast<int>(state.range(1));
  const Var x(uniform({1, c, s, s}, 1), true), w(uniform({c, c, 3, 3}, 2), true), b(Tensor::zeros({c}), true);
  const Tensor weights = uniform({1, c, s, s}, 3);
  for (auto _ : state) {
    backward(ops::weighted_sum(ops::conv2d(x, w, b, ops::ConvGeometry::same(3)), weights));
    zero_grads({{"x", x}, {"w", w}, {"b", b}});
  }
}
BENCHMARK(BM_Conv2dBackward)->Args({8, 64})->Args({16, 32});

void BM_Warp(benchmark::State& state) {
  const int s = static_cast<int>(state.range(0));
  const Var src(uniform({1, 3, s, s}, 4)), flow(uniform({1, 2, s, s}, 5, -3, 3));
  NoGradGuard guard;
  for (auto _ : state) benchmark::DoNotOptimize(ops::warp(src, flow));
  state.SetItemsProcessed(state.iterations() * s * s);
}
BENCHMARK(BM_Warp)->Arg(64)->Arg(128)->Arg(256);

// Args: frame size, latent width D.
void BM_ForwardBundle(benchmark::State& state) {
  const ModelConfig cfg = model_config(static_cast<int>(state.range(0)), static_cast<int>(state.range(1)));
  Rng rng(6);
  const DualMotionModel model(cfg, rng);
  std::vector<Var> frames;
  for (int t = 0; t < 4; ++t) frames.emplace_back(uniform({1, 3, cfg.height, cfg.width}, 10 + t));
  NoGradGuard guard;
  for (auto _ : state) benchmark::DoNotOptimize(forward_bundle(model, frames, std::nullopt, {}));
}
BENCHMARK(BM_ForwardBundle)->Args({64, 16})->Args({64, 64})->Unit(benchmark::kMillisecond);

// One training round: five critic updates and one generator update.
void BM_TrainRound(benchmark::State& state) {
  const ModelConfig cfg = model_config(64, static_cast<int>(state.range(0)));
  TrainingConfig tc;
  tc.seed = 7;
  std::mt19937_64 rng(8);
  SceneSampling sampling;
  sampling.num_frames = 8;
  std::vector<Clip> clips;
  for (int i = 0; i < 2; ++i) {
    const SyntheticClip s = generate_moving_shapes(random_scene(sampling, rng), i);
    clips.push_back({s.frames, s.flows, std::nullopt});
  }
  Trainer trainer(TrainingState::create(cfg, tc), clips);
  std::vector<StepRecord> records;
  for (auto _ : state) {
    records.clear();
    trainer.train_round(records);
  }
}
BENCHMARK(BM_TrainRound)->Arg(16)->Arg(64)->Unit(benchmark::kMillisecond);
BENCHMARK_MAIN();
