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
#include <cmath>
#include <numeric>
#include <thread>

#include <nlohmann/json.hpp>

#include "maskattack/error.hpp"
#include "maskattack/log.hpp"
#include "maskattack/model.hpp"
#include "maskattack/random.hpp"

namespace maskattack {
namespace {

struct Example {
  const AudioClip* clip = nullptr;
  Matrix features;
  LabelSequence target;
  bool clean = false;
};

constexpr std::size_t kNone = static_cast<std::size_t>(-1);

struct Draw {
  double noise_sigma = 0.0;
  std::uint64_t noise_seed = 0;
  std::size_t interferer = kNone;
  double interferer_gain = 0.0;
};

struct AdamState {
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
};

constexpr double kBeta1 = 0.9;
constexpr double kBeta2 = 0.999;
constexpr double kAdamEps = 1e-8;

// Per-bin standardization from every training frame. The +1 under the root
// keeps near-constant bins (silent bands) from being blown up.
void fit_standardization(ModelCheckpoint& ckpt, const std::vector<Example>& examples) {
  const int bins = ckpt.arch.n_mels;
  Eigen::RowVectorXd sum = Eigen::RowVectorXd::Zero(bins);
  Eigen::RowVectorXd sq = Eigen::RowVectorXd::Zero(bins);
  double count = 0.0;
  for (const auto& ex : examples) {
    sum += ex.features.colwise().sum();
    sq += ex.features.array().square().matrix().colwise().sum();
    count += static_cast<double>(ex.features.rows());
  }
  const Eigen::RowVectorXd mean = sum / count;
  const Eigen::RowVectorXd var = (sq / count).array() - mean.array().square();
  auto& shift = ckpt.param("norm.shift").data;
  auto& scale = ckpt.param("norm.scale").data;
  for (int b = 0; b < bins; ++b) {
    shift[static_cast<std::size_t>(b)] = mean(b);
    scale[static_cast<std::size_t>(b)] = 1.0 / std::sqrt(std::max(var(b), 0.0) + 1.0);
  }
}

}  // namespace

void validate(const TrainConfig& cfg) {
  if (!(cfg.learning_rate > 0.0)) throw Error(ErrorCode::kInvalidArgument, "learning_rate must be positive");
  if (cfg.steps < 1) throw Error(ErrorCode::kInvalidArgument, "steps must be >= 1");
  if (cfg.batch_size < 1) throw Error(ErrorCode::kInvalidArgument, "batch_size must be >= 1");
  if (cfg.augmentations < 0) throw Error(ErrorCode::kInvalidArgument, "augmentations must be >= 0");
  if (!(cfg.noise_sigma_max >= 0.0)) throw Error(ErrorCode::kInvalidArgument, "noise_sigma_max must be >= 0");
  if (!(cfg.noise_fraction >= 0.0 && cfg.noise_fraction <= 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "noise_fraction must lie in [0, 1]");
  }
  if (!(cfg.interference_fraction >= 0.0 && cfg.interference_fraction <= 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "interference_fraction must lie in [0, 1]");
  }
  if (!(cfg.interference_gain_max >= 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "interference_gain_max must be >= 0");
  }
  if (cfg.jobs < 1) throw Error(ErrorCode::kInvalidArgument, "jobs must be >= 1");
  if (cfg.optimizer != "adam") throw Error(ErrorCode::kInvalidArgument, "only the adam optimizer is available");
  validate(cfg.features);
}

TrainResult train(const std::vector<LabeledClip>& dataset, const TrainConfig& cfg) {
  validate(cfg);
  if (dataset.empty()) throw Error(ErrorCode::kInvalidArgument, "empty training set");

  const MelFrontEnd front(cfg.features);
  std::vector<Example> examples;
  examples.reserve(dataset.size());
  for (const auto& item : dataset) {
    Example ex{&item.clip, front.logmel(front.analyze(item.clip).mel), encode_text(item.transcript), item.clean};
    if (min_frames(ex.target.symbols) > static_cast<std::size_t>(ex.features.rows())) {
      throw Error(ErrorCode::kInfeasibleTarget, "'" + item.transcript + "' does not fit in " +
                                                    std::to_string(ex.features.rows()) + " frames");
    }
    examples.push_back(std::move(ex));
  }

  ModelArch arch = cfg.arch;
  arch.n_mels = cfg.features.n_mels;
  TrainResult result;
  result.checkpoint = init_checkpoint(arch, cfg.features, cfg.seed);
  ModelCheckpoint& ckpt = result.checkpoint;
  fit_standardization(ckpt, examples);
  const AcousticModel model(ckpt);

  AdamState adam;
  for (const auto& t : ckpt.params) {
    adam.m.emplace_back(t.data.size(), 0.0);
    adam.v.emplace_back(t.data.size(), 0.0);
  }

  Rng rng(derive_seed(cfg.seed, 0x5348554646ULL));
  std::vector<std::size_t> order(examples.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::size_t cursor = order.size();
  auto next_index = [&]() {
    if (cursor == order.size()) {
      for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
      cursor = 0;
    }
    return order[cursor++];
  };

  const auto batch = static_cast<std::size_t>(cfg.batch_size);
  std::vector<double> losses(batch);
  std::vector<std::vector<Tensor>> grads(batch);
  std::vector<std::size_t> picks(batch);
  std::vector<Draw> draws(batch);
  result.curve.reserve(static_cast<std::size_t>(cfg.steps));

  auto work = [&](std::size_t begin, std::size_t end) {
    for (std::size_t b = begin; b < end; ++b) {
      const Example& ex = examples[picks[b]];
      const Draw& d = draws[b];
      Matrix augmented;
      const bool mixed = d.noise_sigma > 0.0 || d.interferer != kNone;
      if (mixed) {
        AudioClip clip = *ex.clip;
        if (d.interferer != kNone) {
          const AudioClip& other = *examples[d.interferer].clip;
          const std::size_t n = std::min(clip.size(), other.size());
          for (std::size_t i = 0; i < n; ++i) clip.samples[i] += d.interferer_gain * other.samples[i];
        }
        if (d.noise_sigma > 0.0) {
          clip = superimpose(clip, gaussian_noise(clip.size(), d.noise_sigma, d.noise_seed, clip.sample_rate));
        }
        augmented = front.logmel(front.analyze(clip).mel);
      }
      const ForwardTrace trace = model.forward_features(mixed ? augmented : ex.features);
      const CtcLossGrad ctc = ctc_loss_and_grad(trace.logits, ex.target);
      losses[b] = ctc.loss;
      grads[b] = model.backward_params(trace, ctc.grad);
    }
  };

  for (int step = 0; step < cfg.steps; ++step) {
    for (std::size_t b = 0; b < batch; ++b) {
      picks[b] = next_index();
      Draw& d = draws[b];
      const bool noisy = rng.uniform() < cfg.noise_fraction;
      const double sigma = rng.uniform(0.0, cfg.noise_sigma_max);
      d.noise_sigma = noisy ? sigma : 0.0;
      d.noise_seed = rng.next_u64();
      d.interferer = kNone;
      if (cfg.interference_fraction > 0.0 && rng.uniform() < cfg.interference_fraction) {
        const std::size_t other = rng.below(examples.size());
        if (examples[other].target.text != examples[picks[b]].target.text) {
          d.interferer = other;
          d.interferer_gain = rng.uniform(0.0, cfg.interference_gain_max);
        }
      }
    }
    const auto jobs = std::min<std::size_t>(static_cast<std::size_t>(cfg.jobs), batch);
    if (jobs <= 1) {
      work(0, batch);
    } else {
      std::vector<std::jthread> threads;
      const std::size_t chunk = (batch + jobs - 1) / jobs;
      for (std::size_t begin = 0; begin < batch; begin += chunk) {
        threads.emplace_back(work, begin, std::min(batch, begin + chunk));
      }
    }

    double mean_loss = 0.0;
    for (double l : losses) mean_loss += l;
    mean_loss /= static_cast<double>(batch);
    result.curve.push_back(mean_loss);

    const double t = step + 1.0;
    const double correction1 = 1.0 - std::pow(kBeta1, t);
    const double correction2 = 1.0 - std::pow(kBeta2, t);
    for (std::size_t p = 0; p < ckpt.params.size(); ++p) {
      Tensor& param = ckpt.params[p];
      if (!param.trainable) continue;
      auto& m = adam.m[p];
      auto& v = adam.v[p];
      for (std::size_t i = 0; i < param.data.size(); ++i) {
        double g = 0.0;
        for (std::size_t b = 0; b < batch; ++b) g += grads[b][p].data[i];
        g /= static_cast<double>(batch);
        m[i] = kBeta1 * m[i] + (1.0 - kBeta1) * g;
        v[i] = kBeta2 * v[i] + (1.0 - kBeta2) * g * g;
        param.data[i] -= cfg.learning_rate * (m[i] / correction1) / (std::sqrt(v[i] / correction2) + kAdamEps);
      }
    }
    if (log::debug_enabled() && (step % 100 == 0 || step + 1 == cfg.steps)) {
      log::debug("train step " + std::to_string(step) + " loss " + std::to_string(mean_loss));
    }
  }

  ckpt.meta = TrainingMeta{cfg.seed, cfg.steps, result.curve.back(), cfg.optimizer};
  for (const auto& ex : examples) {
    if (!ex.clean) continue;
    ++result.clean_total;
    if (greedy_decode(model.forward_features(ex.features).logits) == ex.target.text) ++result.clean_matches;
  }
  result.converged = result.clean_total > 0 && result.clean_matches == result.clean_total;
  return result;
}

void to_json(nlohmann::json& j, const TrainConfig& cfg) {
  j = nlohmann::json{{"learning_rate", cfg.learning_rate}, {"optimizer", cfg.optimizer},
                     {"steps", cfg.steps},                 {"batch_size", cfg.batch_size},
                     {"augmentations", cfg.augmentations}, {"noise_sigma_max", cfg.noise_sigma_max},
                     {"noise_fraction", cfg.noise_fraction},
                     {"interference_fraction", cfg.interference_fraction},
                     {"interference_gain_max", cfg.interference_gain_max},
                     {"seed", cfg.seed},
                     {"arch", cfg.arch},                   {"features", cfg.features}};
}

void from_json(const nlohmann::json& j, TrainConfig& cfg) {
  cfg = TrainConfig{};
  cfg.learning_rate = j.value("learning_rate", cfg.learning_rate);
  cfg.optimizer = j.value("optimizer", cfg.optimizer);
  cfg.steps = j.value("steps", cfg.steps);
  cfg.batch_size = j.value("batch_size", cfg.batch_size);
  cfg.augmentations = j.value("augmentations", cfg.augmentations);
  cfg.noise_sigma_max = j.value("noise_sigma_max", cfg.noise_sigma_max);
  cfg.noise_fraction = j.value("noise_fraction", cfg.noise_fraction);
  cfg.interference_fraction = j.value("interference_fraction", cfg.interference_fraction);
  cfg.interference_gain_max = j.value("interference_gain_max", cfg.interference_gain_max);
  cfg.seed = j.value("seed", cfg.seed);
  cfg.jobs = j.value("jobs", cfg.jobs);
  if (j.contains("arch")) cfg.arch = j.at("arch").get<ModelArch>();
  if (j.contains("features")) cfg.features = j.at("features").get<FeatureConfig>();
}

}  // namespace maskattack
