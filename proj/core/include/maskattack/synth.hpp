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
#include <map>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "maskattack/audio.hpp"

namespace maskattack {

/// The 27-character alphabet shared by the synthesizer and the recognizer.
inline constexpr std::string_view kAlphabet = "abcdefghijklmnopqrstuvwxyz ";

/// Character-to-tone-pair synthesis parameters.
struct SynthProfile {
  std::map<char, std::pair<double, double>> char_freq_table;
  double segment_ms = 80.0;
  double ramp_ms = 8.0;
  /// Peak of a letter segment (the two sinusoids share it equally).
  double amplitude = 0.8;
  /// Peak of the hum that stands in for a space.
  double hum_amplitude = 0.1;
  /// Half-width of the multiplicative frequency jitter U(1-j, 1+j); 0 disables it.
  double jitter = 0.0;

  bool operator==(const SynthProfile&) const = default;
};

/// Letters get a low tone at 300 + 60*i Hz (alphabet order) and a high tone at
/// 2000 + 60*((11*i) mod 26) Hz; space is a 150 Hz hum. Jitter defaults to 0.02.
SynthProfile default_profile();

/// Throws kInvalidArgument when the table misses a character, two characters
/// sit closer than 30 Hz, or a frequency reaches Nyquist.
void validate(const SynthProfile& profile, int sample_rate);

/// Smallest distance between corresponding tones of two distinct characters.
double min_frequency_separation(const SynthProfile& profile);

std::size_t segment_samples(const SynthProfile& profile, int sample_rate);

/// Concatenated per-character tone segments with linear attack/release ramps.
/// Jitter, when enabled, draws one factor per segment from Rng(seed).
AudioClip render_text(std::string_view text, const SynthProfile& profile,
                      int sample_rate = kDefaultSampleRate, std::uint64_t seed = 0);

/// The ten voice commands of the evaluation corpus.
const std::vector<std::string>& command_set();

struct LabeledClip {
  AudioClip clip;
  std::string transcript;
  bool clean = true;
};

/// One clean (jitter-free) rendering per command followed by n_augmented
/// jittered renderings per command, each with its own derived seed.
std::vector<LabeledClip> build_dataset(const SynthProfile& profile, int n_augmented,
                                       std::uint64_t seed,
                                       int sample_rate = kDefaultSampleRate);

/// Jitter-free rendering of a single command, as used by the attack grid.
AudioClip render_clean(std::string_view text, const SynthProfile& profile,
                       int sample_rate = kDefaultSampleRate);

void to_json(nlohmann::json& j, const SynthProfile& profile);
void from_json(const nlohmann::json& j, SynthProfile& profile);

}  // namespace maskattack
