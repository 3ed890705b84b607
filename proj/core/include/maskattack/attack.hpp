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
#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "maskattack/audio.hpp"
#include "maskattack/ctc.hpp"
#include "maskattack/model.hpp"

namespace maskattack {

struct AttackConfig {
  double alpha = 0.0005;   // step size of the projected gradient update
  int steps = 500;
  double epsilon = 0.05;   // L-infinity bound on the perturbation
  double lambda1 = 1.0;    // weight of the mel cosine term
  double lambda2 = 0.05;   // weight of the L2 norm term
  double sigma_init = 0.001;
  std::uint64_t seed = 0;
  bool record_trace = true;
  /// Keep every successful x' in memory. The grid turns this off after a
  /// trial's verification and transfer checks have consumed the clips.
  bool keep_clips = true;
  /// Peak both sources are normalized to before superposition.
  double target_peak = 0.5;
  double carlini_c = 0.1;
  double superimpose_step = 0.05;
  double superimpose_max = 3.0;

  bool operator==(const AttackConfig&) const = default;
};

void validate(const AttackConfig& cfg);

struct TraceRow {
  int step = 0;
  // Loss terms evaluated at the perturbation that produced this step's update.
  double l_adv = 0.0;
  double l_mel = 0.0;
  double l_p = 0.0;
  double total = 0.0;
  // Transcript and SNR of x + delta after the update.
  std::string decoded;
  double snr_db = 0.0;
};

struct AttackSuccess {
  int step = 0;
  AudioClip clip;  // x' (empty when clips are not kept)
  double snr_db = 0.0;
};

struct AttackResult {
  std::string method;
  std::vector<AttackSuccess> successes;
  std::vector<TraceRow> trace;
  AudioClip final_delta;
  /// The normal audio SNR is measured against: x_select + x_mute for SMA and
  /// Superimpose, the muted source alone for the Carlini-style baseline.
  AudioClip normal;
  std::string y_select;
  std::string y_mute;
  /// Scale a of the winning Superimpose step, if any.
  std::optional<double> superimpose_scale;

  bool succeeded() const noexcept { return !successes.empty(); }
  /// The success with the highest SNR (earliest step on ties).
  const AttackSuccess* best() const;
  std::optional<double> mean_snr_db() const;
};

/// Normalized, padded sources and their superposition x.
struct DualSource {
  AudioClip select;
  AudioClip mute;
  AudioClip mixed;
};
DualSource make_dual_source(const AudioClip& x_select, const AudioClip& x_mute, double target_peak);

struct TotalLoss {
  double total = 0.0;
  double l_adv = 0.0;
  double l_mel = 0.0;
  double l_p = 0.0;
  std::vector<double> grad;  // d total / d delta
};

/// L_adv + lambda1 L_mel + lambda2 L_p at x + delta, with its gradient.
/// L_adv is the CTC loss of the model on x + delta, L_mel the negative mel
/// cosine similarity to x_select, L_p = ||delta||_2 (zero gradient at 0).
TotalLoss total_loss(const ModelCheckpoint& ckpt, const AudioClip& x, const AudioClip& delta,
                     const AudioClip& x_select, const LabelSequence& y_select, const AttackConfig& cfg);

/// Element-wise clamp to [-epsilon, epsilon].
AudioClip clip_inf(const AudioClip& delta, double epsilon);

/// Dual-source initialization followed by N projected gradient steps; every
/// post-update x + delta that decodes exactly to y_select is collected.
AttackResult sma_attack(const ModelCheckpoint& ckpt, const AudioClip& x_select, const AudioClip& x_mute,
                        const LabelSequence& y_select, const AttackConfig& cfg, std::string y_mute = {});

/// Single-source baseline: x_mute (padded to the selected clip's length) is
/// the normal audio, delta starts at zero and minimizes
/// CTC + c ||delta||_2^2 under the same projection. The trace's l_p column
/// holds ||delta||_2^2.
AttackResult carlini_baseline(const ModelCheckpoint& ckpt, const AudioClip& x_select, const AudioClip& x_mute,
                              const LabelSequence& y_select, const AttackConfig& cfg, std::string y_mute = {});

/// Sweeps delta = a * x_select for a = 0, step, 2 step, ... <= a_max and stops
/// at the first a whose x + delta decodes to y_select. Forward passes only.
AttackResult superimpose_baseline(const ModelCheckpoint& ckpt, const AudioClip& x_select,
                                  const AudioClip& x_mute, const LabelSequence& y_select, double step,
                                  double a_max, double target_peak = 0.5, std::string y_mute = {});

struct VerificationReport {
  int checked = 0;
  int decode_mismatches = 0;
  int bound_violations = 0;
  int snr_mismatches = 0;

  int violations() const noexcept { return decode_mismatches + bound_violations + snr_mismatches; }
};

/// Re-decodes every stored x' with a fresh model instance and checks
/// max|x' - normal| <= epsilon + 1e-9 and the stored SNR (within 1e-9 dB).
/// Pass an infinite epsilon to skip the bound check.
VerificationReport verify_result(const ModelCheckpoint& ckpt, const AttackResult& result, double epsilon);

void to_json(nlohmann::json& j, const AttackConfig& cfg);
void from_json(const nlohmann::json& j, AttackConfig& cfg);
void to_json(nlohmann::json& j, const AttackResult& result);

}  // namespace maskattack
