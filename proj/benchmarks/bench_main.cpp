// Microbenchmarks for the hot paths: core ops, the spatial codec, and whole
// per-sample training steps at micro (8x8) and default (64x64) scale. The
// default-scale TrainStep number is what sizes the benchmark protocol's
// epoch budget.
#include <benchmark/benchmark.h>

#include <vector>

#include "sifm/adam.hpp"
#include "sifm/model.hpp"
#include "sifm/ops.hpp"
#include "sifm/rng.hpp"

using namespace sifm;

namespace {

Tensor<float> random_tensor(Shape shape, Rng& rng) {
  Tensor<float> t(std::move(shape));
  for (float& v : t.values_mut()) v = static_cast<float>(rng.uniform() - 0.5);
  return t;
}

ModelConfig micro_cfg() {
  ModelConfig cfg;
  cfg.height = 8;
  cfg.width = 8;
  cfg.codec.stem_channels = 8;
  cfg.codec.num_merge_stages = 1;
  cfg.codec.attn_window = 2;
  cfg.codec.heads_per_stage = {1, 2};
  cfg.codec.token_dim = 8;
  cfg.fusion.d = 16;
  cfg.fusion.num_layers = 1;
  cfg.fusion.num_heads = 2;
  return cfg;
}

const MultiGranularitySample& sample_for(std::int64_t side) {
  static PerGranularity<int> dummy;  // anchor the statics below per side
  if (side == 8) {
    static const MultiGranularitySample s = [] {
      SynthConfig sc;
      sc.height = 8;
      sc.width = 8;
      sc.num_days = 400;
      return make_sample(synth_generate(sc), 200);
    }();
    return s;
  }
  static const MultiGranularitySample s = [] {
    SynthConfig sc;
    sc.num_days = 400;  // default 64x64 grid
    return make_sample(synth_generate(sc), 200);
  }();
  return s;
}

void BM_Matmul(benchmark::State& state) {
  const std::int64_t n = state.range(0);
  Rng rng(1);
  auto a = random_tensor({n, n}, rng);
  auto b = random_tensor({n, n}, rng);
  for (auto _ : state) benchmark::DoNotOptimize(matmul(a, b));
  state.SetItemsProcessed(state.iterations() * n * n * n);
}
BENCHMARK(BM_Matmul)->Arg(64)->Arg(256);

void BM_LayerNorm(benchmark::State& state) {
  Rng rng(2);
  auto x = random_tensor({256, 128}, rng);
  auto g = random_tensor({128}, rng);
  auto b = random_tensor({128}, rng);
  for (auto _ : state) benchmark::DoNotOptimize(layer_norm(x, g, b));
}
BENCHMARK(BM_LayerNorm);

void BM_Softmax(benchmark::State& state) {
  Rng rng(3);
  auto x = random_tensor({256, 49}, rng);
  for (auto _ : state) benchmark::DoNotOptimize(softmax(x));
}
BENCHMARK(BM_Softmax);

void BM_EncodeFrame(benchmark::State& state) {
  const std::int64_t side = state.range(0);
  const ModelConfig cfg = side == 8 ? micro_cfg() : ModelConfig{};
  auto params = ModelParams<float>::init(cfg, 5);
  Rng rng(4);
  auto frame = random_tensor({side, side}, rng);
  for (auto _ : state) benchmark::DoNotOptimize(encode_frame(frame, params.codec, cfg.codec));
}
BENCHMARK(BM_EncodeFrame)->Arg(8)->Arg(64)->Unit(benchmark::kMillisecond);

void BM_Forward(benchmark::State& state) {
  const std::int64_t side = state.range(0);
  const ModelConfig cfg = side == 8 ? micro_cfg() : ModelConfig{};
  auto params = ModelParams<float>::init(cfg, 5);
  const auto& sample = sample_for(side);
  for (auto _ : state)
    benchmark::DoNotOptimize(forward_sifm(sample.inputs, params, cfg));
  state.SetLabel("21 frames in, 21 out");
}
BENCHMARK(BM_Forward)->Arg(8)->Arg(64)->Unit(benchmark::kMillisecond);

// One training step for one sample: tape, forward, loss, backward. Batch
// cost is this times the batch size (gradients accumulate across samples).
void BM_TrainStep(benchmark::State& state) {
  const std::int64_t side = state.range(0);
  const ModelConfig cfg = side == 8 ? micro_cfg() : ModelConfig{};
  auto params = ModelParams<float>::init(cfg, 5);
  for (auto* t : params.tensors()) t->zero_grad();
  const auto& sample = sample_for(side);
  for (auto _ : state) {
    Tape<float> tape;
    auto pred = forward_sifm(sample.inputs, params, cfg);
    auto loss = loss_sifm(pred, sample.targets);
    tape.backward(scale(loss, 0.25f));
  }
}
BENCHMARK(BM_TrainStep)->Arg(8)->Arg(64)->Unit(benchmark::kMillisecond);

void BM_AdamStep(benchmark::State& state) {
  const ModelConfig cfg;  // default 64x64 model
  auto params = ModelParams<float>::init(cfg, 5);
  std::vector<Tensor<float>> view;
  for (auto* t : params.tensors()) {
    t->zero_grad();
    view.push_back(*t);
  }
  AdamState<float> opt;
  for (auto _ : state) adam_step(std::span<Tensor<float>>(view), opt);
  state.SetLabel(std::to_string(model_param_count(cfg)) + " params");
}
BENCHMARK(BM_AdamStep)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
