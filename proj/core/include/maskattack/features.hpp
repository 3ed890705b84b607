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

#include <complex>
#include <cstddef>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "maskattack/audio.hpp"
#include "maskattack/fft.hpp"
#include "maskattack/types.hpp"

namespace maskattack {

/// Front-end parameters. The window is always a periodic Hann of frame_len.
struct FeatureConfig {
  int sample_rate = kDefaultSampleRate;
  int frame_len = 256;
  int hop = 128;
  int fft_size = 256;
  int n_mels = 32;
  double mel_low_hz = 50.0;
  double mel_high_hz = 3800.0;
  /// Added to mel power before the log, and the lower bound on cosine norms.
  double power_floor = 1e-10;

  bool operator==(const FeatureConfig&) const = default;
};

void validate(const FeatureConfig& cfg);

/// floor((length - frame_len) / hop) + 1, or 0 when the clip is too short.
std::size_t frame_count(std::size_t length, const FeatureConfig& cfg);

double hz_to_mel(double hz);
double mel_to_hz(double mel);

struct MelSpectrogram {
  Matrix values;  // frames x n_mels
  FeatureConfig config;
};

/// Spectral intermediates of one clip, kept so gradients can be pulled back
/// to the waveform without recomputing the STFT.
struct SpectralAnalysis {
  std::size_t length = 0;
  std::size_t frames = 0;
  std::vector<std::complex<double>> spectrum;  // frames x bins, row-major
  Matrix power;                                // frames x bins
  Matrix mel;                                  // frames x n_mels
};

/// Precomputed window, FFT plan and mel filterbank for one FeatureConfig.
/// Immutable after construction and safe to share between threads.
class MelFrontEnd {
 public:
  explicit MelFrontEnd(const FeatureConfig& cfg);

  const FeatureConfig& config() const noexcept { return cfg_; }
  std::size_t bins() const noexcept { return static_cast<std::size_t>(cfg_.fft_size / 2 + 1); }
  const std::vector<double>& window() const noexcept { return window_; }
  /// n_mels x bins, every row sums to one.
  const Matrix& filterbank() const noexcept { return filterbank_; }

  SpectralAnalysis analyze(const AudioClip& clip) const;

  /// d(scalar)/d(samples) given d(scalar)/d(power).
  std::vector<double> power_backward(const SpectralAnalysis& analysis, const Matrix& grad_power) const;
  /// d(scalar)/d(samples) given d(scalar)/d(mel).
  std::vector<double> mel_backward(const SpectralAnalysis& analysis, const Matrix& grad_mel) const;

  /// log(mel + power_floor).
  Matrix logmel(const Matrix& mel) const;
  /// d(scalar)/d(mel) given d(scalar)/d(logmel).
  Matrix logmel_backward(const Matrix& mel, const Matrix& grad_logmel) const;

 private:
  FeatureConfig cfg_;
  FftPlan fft_;
  std::vector<double> window_;
  Matrix filterbank_;
};

/// Negative cosine similarity of two equally shaped matrices viewed as flat
/// vectors, with each norm floored at `floor`.
struct CosineLoss {
  double value = 0.0;
  Matrix grad_a;  // empty unless requested
};
CosineLoss negative_cosine(const Matrix& a, const Matrix& b, double floor, bool with_grad);

Matrix stft_power(const AudioClip& clip, const FeatureConfig& cfg);
MelSpectrogram mel_spectrogram(const AudioClip& clip, const FeatureConfig& cfg);

/// -cos(MEL(x_adv), MEL(x_ref)) over flattened mel matrices; in [-1, 1].
double mel_cosine_loss(const AudioClip& x_adv, const AudioClip& x_ref, const FeatureConfig& cfg);
std::vector<double> mel_cosine_loss_backward(const AudioClip& x_adv, const AudioClip& x_ref,
                                             const FeatureConfig& cfg);

Matrix logmel_features(const AudioClip& clip, const FeatureConfig& cfg);
std::vector<double> logmel_features_backward(const AudioClip& clip, const FeatureConfig& cfg,
                                             const Matrix& grad_features);

void to_json(nlohmann::json& j, const FeatureConfig& cfg);
void from_json(const nlohmann::json& j, FeatureConfig& cfg);

}  // namespace maskattack
