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
#include "maskattack/synth.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include <nlohmann/json.hpp>

#include "maskattack/error.hpp"
#include "maskattack/random.hpp"

namespace maskattack {

SynthProfile default_profile() {
  SynthProfile p;
  for (int i = 0; i < 26; ++i) {
    const double low = 300.0 + 60.0 * i;
    const double high = 2000.0 + 60.0 * ((11 * i) % 26);
    p.char_freq_table[static_cast<char>('a' + i)] = {low, high};
  }
  p.char_freq_table[' '] = {150.0, 150.0};
  p.jitter = 0.02;
  return p;
}

double min_frequency_separation(const SynthProfile& profile) {
  double best = std::numeric_limits<double>::infinity();
  for (auto a = profile.char_freq_table.begin(); a != profile.char_freq_table.end(); ++a) {
    for (auto b = std::next(a); b != profile.char_freq_table.end(); ++b) {
      const double d = std::min(std::abs(a->second.first - b->second.first),
                                std::abs(a->second.second - b->second.second));
      best = std::min(best, d);
    }
  }
  return best;
}

void validate(const SynthProfile& profile, int sample_rate) {
  for (char c : kAlphabet) {
    if (!profile.char_freq_table.contains(c)) {
      throw Error(ErrorCode::kInvalidArgument, std::string("no tone pair for '") + c + "'");
    }
  }
  if (min_frequency_separation(profile) < 30.0) {
    throw Error(ErrorCode::kInvalidArgument, "tone pairs closer than 30 Hz");
  }
  const double nyquist = sample_rate / 2.0;
  for (const auto& [c, f] : profile.char_freq_table) {
    if (f.first <= 0.0 || f.second <= 0.0 || f.first >= nyquist || f.second >= nyquist) {
      throw Error(ErrorCode::kInvalidArgument, std::string("tone for '") + c + "' outside (0, Nyquist)");
    }
  }
  if (!(profile.segment_ms > 0.0) || profile.ramp_ms < 0.0 || 2.0 * profile.ramp_ms > profile.segment_ms) {
    throw Error(ErrorCode::kInvalidArgument, "segment/ramp durations inconsistent");
  }
  if (profile.jitter < 0.0 || profile.jitter >= 1.0) {
    throw Error(ErrorCode::kInvalidArgument, "jitter must lie in [0, 1)");
  }
}

std::size_t segment_samples(const SynthProfile& profile, int sample_rate) {
  return static_cast<std::size_t>(std::llround(profile.segment_ms * sample_rate / 1000.0));
}

AudioClip render_text(std::string_view text, const SynthProfile& profile, int sample_rate,
                      std::uint64_t seed) {
  if (text.empty()) throw Error(ErrorCode::kInvalidArgument, "empty text");
  for (char c : text) {
    if (!profile.char_freq_table.contains(c)) {
      throw Error(ErrorCode::kUnknownCharacter, std::string("'") + c + "' is not in the alphabet");
    }
  }
  const std::size_t seg = segment_samples(profile, sample_rate);
  const auto ramp = static_cast<std::size_t>(std::llround(profile.ramp_ms * sample_rate / 1000.0));
  Rng rng(seed);

  AudioClip out;
  out.sample_rate = sample_rate;
  out.samples.reserve(seg * text.size());
  const double two_pi = 2.0 * std::numbers::pi;
  for (char c : text) {
    auto [f1, f2] = profile.char_freq_table.at(c);
    if (profile.jitter > 0.0) {
      const double factor = rng.uniform(1.0 - profile.jitter, 1.0 + profile.jitter);
      f1 *= factor;
      f2 *= factor;
    }
    const bool hum = c == ' ';
    for (std::size_t n = 0; n < seg; ++n) {
      double env = 1.0;
      if (ramp > 0) {
        if (n < ramp) env = static_cast<double>(n) / ramp;
        else if (n >= seg - ramp) env = static_cast<double>(seg - 1 - n) / ramp;
      }
      const double t = static_cast<double>(n) / sample_rate;
      double v;
      if (hum) {
        v = profile.hum_amplitude * std::sin(two_pi * f1 * t);
      } else {
        v = 0.5 * profile.amplitude * (std::sin(two_pi * f1 * t) + std::sin(two_pi * f2 * t));
      }
      out.samples.push_back(env * v);
    }
  }
  return out;
}

const std::vector<std::string>& command_set() {
  static const std::vector<std::string> commands = {
      "call my wife",   "make it warmer",   "navigate to my home", "open the door",
      "open the website", "play music",     "send a text",         "take a picture",
      "turn off the light", "turn on airplane mode",
  };
  return commands;
}

AudioClip render_clean(std::string_view text, const SynthProfile& profile, int sample_rate) {
  SynthProfile clean = profile;
  clean.jitter = 0.0;
  return render_text(text, clean, sample_rate, 0);
}

std::vector<LabeledClip> build_dataset(const SynthProfile& profile, int n_augmented,
                                       std::uint64_t seed, int sample_rate) {
  if (n_augmented < 0) throw Error(ErrorCode::kInvalidArgument, "n_augmented must be >= 0");
  validate(profile, sample_rate);
  const auto& commands = command_set();
  std::vector<LabeledClip> out;
  out.reserve(commands.size() * (1 + n_augmented));
  for (const auto& cmd : commands) out.push_back({render_clean(cmd, profile, sample_rate), cmd, true});
  for (std::size_t c = 0; c < commands.size(); ++c) {
    for (int k = 0; k < n_augmented; ++k) {
      const std::uint64_t s = derive_seed(seed, c, static_cast<std::uint64_t>(k));
      out.push_back({render_text(commands[c], profile, sample_rate, s), commands[c], false});
    }
  }
  return out;
}

void to_json(nlohmann::json& j, const SynthProfile& profile) {
  nlohmann::json table = nlohmann::json::object();
  for (const auto& [c, f] : profile.char_freq_table) table[std::string(1, c)] = {f.first, f.second};
  j = nlohmann::json{{"char_freq_table", table},   {"segment_ms", profile.segment_ms},
                     {"ramp_ms", profile.ramp_ms}, {"amplitude", profile.amplitude},
                     {"hum_amplitude", profile.hum_amplitude}, {"jitter", profile.jitter}};
}

void from_json(const nlohmann::json& j, SynthProfile& profile) {
  profile = default_profile();
  if (j.contains("char_freq_table")) {
    profile.char_freq_table.clear();
    for (const auto& [key, value] : j.at("char_freq_table").items()) {
      if (key.size() != 1) throw Error(ErrorCode::kInvalidArgument, "table keys must be single characters");
      profile.char_freq_table[key[0]] = {value.at(0).get<double>(), value.at(1).get<double>()};
    }
  }
  profile.segment_ms = j.value("segment_ms", profile.segment_ms);
  profile.ramp_ms = j.value("ramp_ms", profile.ramp_ms);
  profile.amplitude = j.value("amplitude", profile.amplitude);
  profile.hum_amplitude = j.value("hum_amplitude", profile.hum_amplitude);
  profile.jitter = j.value("jitter", profile.jitter);
}

}  // namespace maskattack
