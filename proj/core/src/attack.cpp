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
#include "maskattack/attack.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <nlohmann/json.hpp>

#include "maskattack/error.hpp"
#include "maskattack/log.hpp"

namespace maskattack {
namespace {

void require_feasible(const LabelSequence& target, std::size_t length, const FeatureConfig& features) {
  const std::size_t frames = frame_count(length, features);
  if (frames == 0) throw Error(ErrorCode::kClipTooShort, "clip shorter than one frame");
  if (min_frames(target.symbols) > frames) {
    throw Error(ErrorCode::kInfeasibleTarget, "'" + target.text + "' needs " +
                                                  std::to_string(min_frames(target.symbols)) + " frames, clip has " +
                                                  std::to_string(frames));
  }
}

AudioClip add(const AudioClip& x, const std::vector<double>& delta) {
  AudioClip out = x;
  for (std::size_t i = 0; i < out.size(); ++i) out.samples[i] += delta[i];
  return out;
}

double l2_norm(const std::vector<double>& v) { return std::sqrt(energy(v)); }

void project(std::vector<double>& delta, double epsilon) {
  for (double& d : delta) d = std::clamp(d, -epsilon, epsilon);
}

// Forward pass at x + delta plus everything the loss needs from it.
struct Probe {
  ForwardTrace trace;
  std::string decoded;
};

// Evaluates the three-term objective; the mel of x_select is computed once.
class SmaObjective {
 public:
  SmaObjective(const AcousticModel& model, const AudioClip& x, const AudioClip& x_select,
               const LabelSequence& target, const AttackConfig& cfg)
      : model_(model), x_(x), target_(target), cfg_(cfg),
        reference_mel_(model.front_end().analyze(x_select).mel) {}

  Probe probe(const std::vector<double>& delta) const {
    Probe p{model_.forward(add(x_, delta)), {}};
    p.decoded = greedy_decode(p.trace.logits);
    return p;
  }

  TotalLoss evaluate(const Probe& probe, const std::vector<double>& delta) const {
    const MelFrontEnd& front = model_.front_end();
    const SpectralAnalysis& spectral = *probe.trace.spectral;
    const CtcLossGrad ctc = ctc_loss_and_grad(probe.trace.logits, target_);
    const bool mel_grad = cfg_.lambda1 != 0.0;
    const CosineLoss cosine =
        negative_cosine(spectral.mel, reference_mel_, front.config().power_floor, mel_grad);

    TotalLoss out;
    out.l_adv = ctc.loss;
    out.l_mel = cosine.value;
    out.l_p = l2_norm(delta);
    out.total = out.l_adv + cfg_.lambda1 * out.l_mel + cfg_.lambda2 * out.l_p;

    // Both the model input and the cosine term hang off the same mel matrix,
    // so the pullback through the STFT runs once.
    Matrix grad_mel = model_.backward_mel(probe.trace, ctc.grad);
    if (mel_grad) grad_mel += cfg_.lambda1 * cosine.grad_a;
    out.grad = front.mel_backward(spectral, grad_mel);
    if (cfg_.lambda2 != 0.0 && out.l_p > 0.0) {
      const double scale = cfg_.lambda2 / out.l_p;
      for (std::size_t i = 0; i < delta.size(); ++i) out.grad[i] += scale * delta[i];
    }
    return out;
  }

 private:
  const AcousticModel& model_;
  const AudioClip& x_;
  const LabelSequence& target_;
  const AttackConfig& cfg_;
  Matrix reference_mel_;
};

void record(AttackResult& result, const AttackConfig& cfg, int step, const AudioClip& normal,
            const std::vector<double>& delta, const std::string& decoded, const TraceRow& losses) {
  const double noise = energy(delta);
  const double snr = noise > 0.0 ? 10.0 * std::log10(energy(normal.samples) / noise)
                                 : std::numeric_limits<double>::infinity();
  if (cfg.record_trace) {
    TraceRow row = losses;
    row.step = step;
    row.decoded = decoded;
    row.snr_db = snr;
    result.trace.push_back(std::move(row));
  }
  if (decoded == result.y_select) {
    AttackSuccess s;
    s.step = step;
    s.snr_db = snr;
    if (cfg.keep_clips) s.clip = add(normal, delta);
    result.successes.push_back(std::move(s));
  }
}

}  // namespace

void validate(const AttackConfig& cfg) {
  auto fail = [](const std::string& what) { throw Error(ErrorCode::kInvalidArgument, what); };
  if (!(cfg.alpha > 0.0)) fail("alpha must be positive");
  if (cfg.steps < 1) fail("steps must be >= 1");
  if (!(cfg.epsilon > 0.0)) fail("epsilon must be positive");
  if (!(cfg.lambda1 >= 0.0) || !(cfg.lambda2 >= 0.0)) fail("loss weights must be non-negative");
  if (!(cfg.sigma_init >= 0.0)) fail("sigma_init must be non-negative");
  if (!(cfg.target_peak > 0.0)) fail("target_peak must be positive");
  if (!(cfg.carlini_c >= 0.0)) fail("carlini_c must be non-negative");
  if (!(cfg.superimpose_step > 0.0) || !(cfg.superimpose_max >= 0.0)) fail("bad superimpose sweep");
}

const AttackSuccess* AttackResult::best() const {
  const AttackSuccess* out = nullptr;
  for (const auto& s : successes) {
    if (!out || s.snr_db > out->snr_db) out = &s;
  }
  return out;
}

std::optional<double> AttackResult::mean_snr_db() const {
  if (successes.empty()) return std::nullopt;
  double sum = 0.0;
  for (const auto& s : successes) sum += s.snr_db;
  return sum / static_cast<double>(successes.size());
}

DualSource make_dual_source(const AudioClip& x_select, const AudioClip& x_mute, double target_peak) {
  if (x_select.sample_rate != x_mute.sample_rate) {
    throw Error(ErrorCode::kSampleRateMismatch, "selected and muted clips differ in sample rate");
  }
  auto [select, mute] = pad_to_common_length(peak_normalize(x_select, target_peak).clip,
                                             peak_normalize(x_mute, target_peak).clip);
  AudioClip mixed = superimpose(select, mute);
  return {std::move(select), std::move(mute), std::move(mixed)};
}

TotalLoss total_loss(const ModelCheckpoint& ckpt, const AudioClip& x, const AudioClip& delta,
                     const AudioClip& x_select, const LabelSequence& y_select, const AttackConfig& cfg) {
  if (x.size() != delta.size() || x.size() != x_select.size()) {
    throw Error(ErrorCode::kLengthMismatch, "x, delta and x_select must have equal length");
  }
  const AcousticModel model(ckpt);
  require_feasible(y_select, x.size(), ckpt.features);
  const SmaObjective objective(model, x, x_select, y_select, cfg);
  return objective.evaluate(objective.probe(delta.samples), delta.samples);
}

AudioClip clip_inf(const AudioClip& delta, double epsilon) {
  if (!(epsilon > 0.0)) throw Error(ErrorCode::kInvalidArgument, "epsilon must be positive");
  AudioClip out = delta;
  project(out.samples, epsilon);
  return out;
}

AttackResult sma_attack(const ModelCheckpoint& ckpt, const AudioClip& x_select, const AudioClip& x_mute,
                        const LabelSequence& y_select, const AttackConfig& cfg, std::string y_mute) {
  validate(cfg);
  const AcousticModel model(ckpt);
  DualSource source = make_dual_source(x_select, x_mute, cfg.target_peak);
  require_feasible(y_select, source.mixed.size(), ckpt.features);

  AttackResult result;
  result.method = "sma";
  result.y_select = y_select.text;
  result.y_mute = std::move(y_mute);
  result.normal = source.mixed;

  std::vector<double> delta =
      gaussian_noise(source.mixed.size(), cfg.sigma_init, cfg.seed, source.mixed.sample_rate).samples;
  const SmaObjective objective(model, result.normal, source.select, y_select, cfg);
  Probe current = objective.probe(delta);
  for (int step = 1; step <= cfg.steps; ++step) {
    const TotalLoss loss = objective.evaluate(current, delta);
    for (std::size_t i = 0; i < delta.size(); ++i) delta[i] -= cfg.alpha * loss.grad[i];
    project(delta, cfg.epsilon);
    current = objective.probe(delta);
    record(result, cfg, step, result.normal, delta, current.decoded,
           TraceRow{0, loss.l_adv, loss.l_mel, loss.l_p, loss.total, {}, 0.0});
  }
  result.final_delta = AudioClip{std::move(delta), source.mixed.sample_rate};
  log::debug("sma '" + result.y_select + "' / '" + result.y_mute + "': " +
             std::to_string(result.successes.size()) + " successes");
  return result;
}

AttackResult carlini_baseline(const ModelCheckpoint& ckpt, const AudioClip& x_select, const AudioClip& x_mute,
                              const LabelSequence& y_select, const AttackConfig& cfg, std::string y_mute) {
  validate(cfg);
  const AcousticModel model(ckpt);
  DualSource source = make_dual_source(x_select, x_mute, cfg.target_peak);
  require_feasible(y_select, source.mute.size(), ckpt.features);

  AttackResult result;
  result.method = "carlini";
  result.y_select = y_select.text;
  result.y_mute = std::move(y_mute);
  result.normal = source.mute;

  const MelFrontEnd& front = model.front_end();
  std::vector<double> delta(source.mute.size(), 0.0);
  ForwardTrace trace = model.forward(result.normal);
  for (int step = 1; step <= cfg.steps; ++step) {
    const CtcLossGrad ctc = ctc_loss_and_grad(trace.logits, y_select);
    const double penalty = energy(delta);
    std::vector<double> grad = front.mel_backward(*trace.spectral, model.backward_mel(trace, ctc.grad));
    for (std::size_t i = 0; i < delta.size(); ++i) {
      delta[i] -= cfg.alpha * (grad[i] + 2.0 * cfg.carlini_c * delta[i]);
    }
    project(delta, cfg.epsilon);
    trace = model.forward(add(result.normal, delta));
    record(result, cfg, step, result.normal, delta, greedy_decode(trace.logits),
           TraceRow{0, ctc.loss, 0.0, penalty, ctc.loss + cfg.carlini_c * penalty, {}, 0.0});
  }
  result.final_delta = AudioClip{std::move(delta), source.mute.sample_rate};
  return result;
}

AttackResult superimpose_baseline(const ModelCheckpoint& ckpt, const AudioClip& x_select,
                                  const AudioClip& x_mute, const LabelSequence& y_select, double step,
                                  double a_max, double target_peak, std::string y_mute) {
  if (!(step > 0.0) || !(a_max >= 0.0)) throw Error(ErrorCode::kInvalidArgument, "bad superimpose sweep");
  const AcousticModel model(ckpt);
  DualSource source = make_dual_source(x_select, x_mute, target_peak);

  AttackResult result;
  result.method = "superimpose";
  result.y_select = y_select.text;
  result.y_mute = std::move(y_mute);
  result.normal = source.mixed;

  const double normal_energy = energy(result.normal.samples);
  std::vector<double> delta(source.mixed.size(), 0.0);
  for (int k = 0;; ++k) {
    const double a = k * step;
    if (a > a_max + 1e-12) break;
    for (std::size_t i = 0; i < delta.size(); ++i) delta[i] = a * source.select.samples[i];
    const std::string decoded = model.transcribe(add(result.normal, delta));
    const double noise = energy(delta);
    TraceRow row;
    row.step = k;
    row.decoded = decoded;
    row.snr_db = noise > 0.0 ? 10.0 * std::log10(normal_energy / noise) : std::numeric_limits<double>::infinity();
    row.l_p = std::sqrt(noise);
    result.trace.push_back(row);
    if (decoded == result.y_select) {
      result.successes.push_back({k, add(result.normal, delta), row.snr_db});
      result.superimpose_scale = a;
      break;
    }
  }
  result.final_delta = AudioClip{std::move(delta), source.mixed.sample_rate};
  return result;
}

VerificationReport verify_result(const ModelCheckpoint& ckpt, const AttackResult& result, double epsilon) {
  const AcousticModel model(ckpt);
  VerificationReport report;
  for (const auto& s : result.successes) {
    if (s.clip.empty()) continue;
    ++report.checked;
    if (model.transcribe(s.clip) != result.y_select) ++report.decode_mismatches;
    const AudioClip delta = difference(s.clip, result.normal);
    double worst = 0.0;
    for (double d : delta.samples) worst = std::max(worst, std::abs(d));
    if (std::isfinite(epsilon) && worst > epsilon + 1e-9) ++report.bound_violations;
    const double noise = energy(delta.samples);
    if (noise > 0.0) {
      if (std::abs(snr_db(result.normal, delta) - s.snr_db) > 1e-9) ++report.snr_mismatches;
    } else if (std::isfinite(s.snr_db)) {
      ++report.snr_mismatches;
    }
  }
  return report;
}

void to_json(nlohmann::json& j, const AttackConfig& cfg) {
  j = nlohmann::json{{"alpha", cfg.alpha},
                     {"steps", cfg.steps},
                     {"epsilon", cfg.epsilon},
                     {"lambda1", cfg.lambda1},
                     {"lambda2", cfg.lambda2},
                     {"sigma_init", cfg.sigma_init},
                     {"seed", cfg.seed},
                     {"record_trace", cfg.record_trace},
                     {"target_peak", cfg.target_peak},
                     {"carlini_c", cfg.carlini_c},
                     {"superimpose_step", cfg.superimpose_step},
                     {"superimpose_max", cfg.superimpose_max}};
}

void from_json(const nlohmann::json& j, AttackConfig& cfg) {
  cfg = AttackConfig{};
  cfg.alpha = j.value("alpha", cfg.alpha);
  cfg.steps = j.value("steps", cfg.steps);
  cfg.epsilon = j.value("epsilon", cfg.epsilon);
  cfg.lambda1 = j.value("lambda1", cfg.lambda1);
  cfg.lambda2 = j.value("lambda2", cfg.lambda2);
  cfg.sigma_init = j.value("sigma_init", cfg.sigma_init);
  cfg.seed = j.value("seed", cfg.seed);
  cfg.record_trace = j.value("record_trace", cfg.record_trace);
  cfg.target_peak = j.value("target_peak", cfg.target_peak);
  cfg.carlini_c = j.value("carlini_c", cfg.carlini_c);
  cfg.superimpose_step = j.value("superimpose_step", cfg.superimpose_step);
  cfg.superimpose_max = j.value("superimpose_max", cfg.superimpose_max);
}

void to_json(nlohmann::json& j, const AttackResult& result) {
  nlohmann::json successes = nlohmann::json::array();
  for (const auto& s : result.successes) successes.push_back({{"step", s.step}, {"snr_db", s.snr_db}});
  const AttackSuccess* best = result.best();
  j = nlohmann::json{{"method", result.method},
                     {"y_select", result.y_select},
                     {"y_mute", result.y_mute},
                     {"success", result.succeeded()},
                     {"x_prime_count", result.successes.size()},
                     {"successes", successes},
                     {"best_snr_db", best ? nlohmann::json(best->snr_db) : nlohmann::json(nullptr)},
                     {"best_step", best ? nlohmann::json(best->step) : nlohmann::json(nullptr)},
                     {"mean_snr_db", result.mean_snr_db() ? nlohmann::json(*result.mean_snr_db())
                                                          : nlohmann::json(nullptr)}};
  if (result.superimpose_scale) j["superimpose_scale"] = *result.superimpose_scale;
}

}  // namespace maskattack
