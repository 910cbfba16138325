#include <benchmark/benchmark.h>

#include <random>

#include "traitfuse/behaviour.hpp"
#include "traitfuse/fusion.hpp"
#include "traitfuse/gradcheck_suite.hpp"
#include "traitfuse/ops.hpp"
#include "traitfuse/random.hpp"
#include "traitfuse/synth.hpp"

using namespace traitfuse;

namespace {

void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  std::mt19937_64 rng(1);
  const Tensor a = normal_tensor({n, n}, 1.0, rng);
  const Tensor b = normal_tensor({n, n}, 1.0, rng);
  for (auto _ : state) {
    Tape t;
    benchmark::DoNotOptimize(matmul(t.constant(a), t.constant(b)).value());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n * n * n));
}
BENCHMARK(BM_Matmul)->Arg(32)->Arg(128)->Arg(392);

// Face branch of the query pipeline at the default grid: 3D convolution
// over (64, 8, 7, 7) with 16 kernels of 1x3x3.
void BM_Conv3d(benchmark::State& state) {
  std::mt19937_64 rng(2);
  const Tensor x = normal_tensor({64, 8, 9, 9}, 1.0, rng);
  const Tensor k = normal_tensor({16, 64, 1, 3, 3}, 0.1, rng);
  const Tensor b = normal_tensor({16}, 0.1, rng);
  for (auto _ : state) {
    Tape t;
    benchmark::DoNotOptimize(convolve(t.constant(x), t.constant(k), t.constant(b), 1, 3).value());
  }
}
BENCHMARK(BM_Conv3d);

void BM_EncodeFrame(benchmark::State& state) {
  SynthSpec spec;
  spec.plant_probability = 1.0;
  const auto video = gen_synthetic_video(spec, 0);
  std::size_t i = 1;
  for (auto _ : state) {
    benchmark::DoNotOptimize(encode_frame(video.keypoints, i));
    i = i + 2 < video.keypoints.size() ? i + 1 : 1;
  }
}
BENCHMARK(BM_EncodeFrame);

void BM_ModelForward(benchmark::State& state) {
  const auto cfg = ModelConfig::toy();
  const auto model = FusionModel::init(cfg, 3);
  const auto sample = random_sample(cfg, static_cast<std::size_t>(state.range(0)), 4);
  for (auto _ : state) benchmark::DoNotOptimize(predict(model, sample));
}
BENCHMARK(BM_ModelForward)->Arg(1)->Arg(4);

void BM_ModelForwardBackward(benchmark::State& state) {
  const auto cfg = ModelConfig::toy();
  const auto model = FusionModel::init(cfg, 3);
  const auto sample = random_sample(cfg, static_cast<std::size_t>(state.range(0)), 4);
  std::mt19937_64 rng(5);
  for (auto _ : state) {
    Tape t;
    const auto out = model_forward(t, model, sample, true, rng);
    const auto loss = mse(out, t.constant(sample.targets.to_tensor()));
    t.backward(loss);
    benchmark::DoNotOptimize(t.gradient(*model.parameters().front()));
  }
}
BENCHMARK(BM_ModelForwardBackward)->Arg(1)->Arg(4);

}  // namespace
BENCHMARK_MAIN();
