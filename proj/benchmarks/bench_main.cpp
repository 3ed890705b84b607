// Copyright 2026 The maskattack Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
#include <benchmark/benchmark.h>

#include "maskattack/attack.hpp"
#include "maskattack/audio.hpp"
#include "maskattack/ctc.hpp"
#include "maskattack/features.hpp"
#include "maskattack/model.hpp"
#include "maskattack/synth.hpp"

namespace {

using namespace maskattack;

AudioClip one_second() { return gaussian_noise(8000, 0.1, 1); }

void BM_StftPower(benchmark::State& state) {
  const AudioClip clip = one_second();
  const FeatureConfig cfg;
  for (auto _ : state) benchmark::DoNotOptimize(stft_power(clip, cfg));
}
BENCHMARK(BM_StftPower)->Unit(benchmark::kMicrosecond);

void BM_MelCosineBackward(benchmark::State& state) {
  const AudioClip a = one_second();
  const AudioClip b = gaussian_noise(8000, 0.1, 2);
  const FeatureConfig cfg;
  for (auto _ : state) benchmark::DoNotOptimize(mel_cosine_loss_backward(a, b, cfg));
}
BENCHMARK(BM_MelCosineBackward)->Unit(benchmark::kMicrosecond);

void BM_CtcLossBackward(benchmark::State& state) {
  const auto frames = static_cast<Eigen::Index>(state.range(0));
  const ModelCheckpoint ckpt = init_checkpoint(ModelArch{}, FeatureConfig{}, 3);
  const LogitsSequence logits = model_forward(ckpt, gaussian_noise(static_cast<std::size_t>(frames) * 80 + 120, 0.1, 3));
  const LabelSequence target = encode_text("open the door");
  for (auto _ : state) {
    benchmark::DoNotOptimize(ctc_loss(logits, target));
    benchmark::DoNotOptimize(ctc_loss_backward(logits, target));
  }
}
BENCHMARK(BM_CtcLossBackward)->Arg(50)->Arg(100)->Unit(benchmark::kMicrosecond);

void BM_ModelForwardBackward(benchmark::State& state) {
  const ModelCheckpoint ckpt = init_checkpoint(ModelArch{}, FeatureConfig{}, 4);
  const AcousticModel model(ckpt);
  const AudioClip clip = one_second();
  for (auto _ : state) {
    const ForwardTrace trace = model.forward(clip);
    const Matrix grad = Matrix::Constant(trace.logits.rows(), trace.logits.cols(), 1e-3);
    benchmark::DoNotOptimize(model.backward_input(trace, grad));
  }
}
BENCHMARK(BM_ModelForwardBackward)->Unit(benchmark::kMicrosecond);

// One SMA optimization step: total loss with gradient, then the projection.
void BM_SmaStep(benchmark::State& state) {
  const ModelCheckpoint ckpt = init_checkpoint(ModelArch{}, FeatureConfig{}, 5);
  const SynthProfile profile = default_profile();
  const DualSource src = make_dual_source(render_clean("open the door", profile), render_clean("play music", profile), 0.5);
  const LabelSequence y = encode_text("open the door");
  const AttackConfig cfg;
  AudioClip delta = gaussian_noise(src.mixed.size(), cfg.sigma_init, 6);
  for (auto _ : state) {
    const TotalLoss loss = total_loss(ckpt, src.mixed, delta, src.select, y, cfg);
    for (std::size_t i = 0; i < delta.size(); ++i) delta.samples[i] -= cfg.alpha * loss.grad[i];
    delta = clip_inf(delta, cfg.epsilon);
  }
}
BENCHMARK(BM_SmaStep)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
