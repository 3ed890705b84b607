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

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <utility>
#include <vector>

namespace maskattack {

inline constexpr int kDefaultSampleRate = 8000;

/// Mono waveform with real-valued samples in nominal range [-1, 1].
struct AudioClip {
  std::vector<double> samples;
  int sample_rate = kDefaultSampleRate;

  std::size_t size() const noexcept { return samples.size(); }
  bool empty() const noexcept { return samples.empty(); }
  std::span<const double> view() const noexcept { return samples; }

  bool operator==(const AudioClip&) const = default;
};

/// Throws kInvalidArgument if the rate is not positive or a sample is not finite.
void validate(const AudioClip& clip);

/// Reads a RIFF/WAVE file holding mono 16-bit PCM. Unknown chunks are skipped.
AudioClip load_wav(const std::filesystem::path& path);

/// Writes a canonical 44-byte-header mono 16-bit PCM file. Samples outside
/// [-1, 1] are clamped; the number of clamped samples is returned.
std::size_t save_wav(const AudioClip& clip, const std::filesystem::path& path);

/// Converts a real amplitude to the 16-bit code written by save_wav.
std::int16_t quantize_sample(double amplitude, bool* clamped = nullptr);

/// Round trip through 16-bit PCM without touching the filesystem.
AudioClip quantize(const AudioClip& clip);

struct NormalizeResult {
  AudioClip clip;
  bool silent = false;
};

NormalizeResult peak_normalize(const AudioClip& clip, double target_peak);

double peak(const AudioClip& clip);

/// Zero-pads the shorter clip at the tail.
std::pair<AudioClip, AudioClip> pad_to_common_length(const AudioClip& a, const AudioClip& b);

AudioClip superimpose(const AudioClip& a, const AudioClip& b);

/// a - b, element-wise.
AudioClip difference(const AudioClip& a, const AudioClip& b);

AudioClip scaled(const AudioClip& clip, double factor);

/// i.i.d. N(0, sigma^2) samples drawn from Rng(seed).
AudioClip gaussian_noise(std::size_t length, double sigma, std::uint64_t seed,
                         int sample_rate = kDefaultSampleRate);

double energy(std::span<const double> samples);

/// 10 log10(||x||^2 / ||delta||^2).
double snr_db(const AudioClip& x, const AudioClip& delta);

}  // namespace maskattack
