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
#include "maskattack/features.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include <nlohmann/json.hpp>

#include "maskattack/error.hpp"

namespace maskattack {

void validate(const FeatureConfig& cfg) {
  auto fail = [](const std::string& what) { throw Error(ErrorCode::kInvalidArgument, what); };
  if (cfg.sample_rate <= 0) fail("sample_rate must be positive");
  if (cfg.frame_len <= 0 || cfg.hop <= 0 || cfg.n_mels <= 0) fail("frame_len, hop and n_mels must be positive");
  if (cfg.frame_len > cfg.fft_size) fail("frame_len exceeds fft_size");
  if (cfg.hop > cfg.frame_len) fail("hop exceeds frame_len");
  if (!is_power_of_two(static_cast<std::size_t>(cfg.fft_size))) fail("fft_size must be a power of two");
  if (!(cfg.mel_low_hz >= 0.0) || !(cfg.mel_high_hz > cfg.mel_low_hz)) fail("bad mel range");
  if (cfg.mel_high_hz > cfg.sample_rate / 2.0) fail("mel_high_hz above Nyquist");
  if (!(cfg.power_floor > 0.0)) fail("power_floor must be positive");
}

std::size_t frame_count(std::size_t length, const FeatureConfig& cfg) {
  const auto frame = static_cast<std::size_t>(cfg.frame_len);
  if (length < frame) return 0;
  return (length - frame) / static_cast<std::size_t>(cfg.hop) + 1;
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

MelFrontEnd::MelFrontEnd(const FeatureConfig& cfg) : cfg_(cfg), fft_((validate(cfg), cfg.fft_size)) {
  window_.resize(static_cast<std::size_t>(cfg.frame_len));
  for (std::size_t n = 0; n < window_.size(); ++n) {
    window_[n] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(n) / cfg.frame_len);
  }

  const std::size_t n_bins = bins();
  const int n_mels = cfg.n_mels;
  std::vector<double> edges(static_cast<std::size_t>(n_mels) + 2);
  const double lo = hz_to_mel(cfg.mel_low_hz);
  const double hi = hz_to_mel(cfg.mel_high_hz);
  for (std::size_t i = 0; i < edges.size(); ++i) {
    edges[i] = mel_to_hz(lo + (hi - lo) * static_cast<double>(i) / (n_mels + 1));
  }
  filterbank_ = Matrix::Zero(n_mels, static_cast<Eigen::Index>(n_bins));
  for (int m = 0; m < n_mels; ++m) {
    const double left = edges[m];
    const double center = edges[m + 1];
    const double right = edges[m + 2];
    for (std::size_t k = 0; k < n_bins; ++k) {
      const double f = static_cast<double>(k) * cfg.sample_rate / cfg.fft_size;
      double w = 0.0;
      if (f > left && f <= center) w = (f - left) / (center - left);
      else if (f > center && f < right) w = (right - f) / (right - center);
      filterbank_(m, static_cast<Eigen::Index>(k)) = w;
    }
    const double area = filterbank_.row(m).sum();
    if (area <= 0.0) {
      throw Error(ErrorCode::kInvalidArgument,
                  "mel filter " + std::to_string(m) + " covers no FFT bin; lower n_mels or raise fft_size");
    }
    filterbank_.row(m) /= area;
  }
}

SpectralAnalysis MelFrontEnd::analyze(const AudioClip& clip) const {
  if (clip.sample_rate != cfg_.sample_rate) {
    throw Error(ErrorCode::kSampleRateMismatch, "clip at " + std::to_string(clip.sample_rate) +
                                                    " Hz, front end at " + std::to_string(cfg_.sample_rate) + " Hz");
  }
  const std::size_t frames = frame_count(clip.size(), cfg_);
  if (frames == 0) {
    throw Error(ErrorCode::kClipTooShort, std::to_string(clip.size()) + " samples < frame_len " +
                                              std::to_string(cfg_.frame_len));
  }
  const std::size_t n_fft = static_cast<std::size_t>(cfg_.fft_size);
  const std::size_t n_bins = bins();
  const std::size_t frame_len = window_.size();

  SpectralAnalysis out;
  out.length = clip.size();
  out.frames = frames;
  out.spectrum.resize(frames * n_bins);
  out.power.resize(static_cast<Eigen::Index>(frames), static_cast<Eigen::Index>(n_bins));

  std::vector<std::complex<double>> buffer(n_fft);
  for (std::size_t t = 0; t < frames; ++t) {
    const double* src = clip.samples.data() + t * static_cast<std::size_t>(cfg_.hop);
    for (std::size_t n = 0; n < frame_len; ++n) buffer[n] = {src[n] * window_[n], 0.0};
    std::fill(buffer.begin() + static_cast<std::ptrdiff_t>(frame_len), buffer.end(), std::complex<double>{});
    fft_.forward(buffer);
    for (std::size_t k = 0; k < n_bins; ++k) {
      out.spectrum[t * n_bins + k] = buffer[k];
      out.power(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(k)) = std::norm(buffer[k]);
    }
  }
  out.mel = out.power * filterbank_.transpose();
  return out;
}

std::vector<double> MelFrontEnd::power_backward(const SpectralAnalysis& analysis,
                                                const Matrix& grad_power) const {
  const std::size_t n_fft = static_cast<std::size_t>(cfg_.fft_size);
  const std::size_t n_bins = bins();
  if (grad_power.rows() != static_cast<Eigen::Index>(analysis.frames) ||
      grad_power.cols() != static_cast<Eigen::Index>(n_bins)) {
    throw Error(ErrorCode::kShapeMismatch, "power gradient shape does not match analysis");
  }
  std::vector<double> grad(analysis.length, 0.0);
  std::vector<std::complex<double>> buffer(n_fft);
  // dP_k/ds_n = 2 Re(conj(X_k) e^{-2 pi i k n / N}), so the pullback of G is
  // 2 Re(FFT(G_k conj(X_k))) restricted to the half spectrum.
  for (std::size_t t = 0; t < analysis.frames; ++t) {
    for (std::size_t k = 0; k < n_bins; ++k) {
      buffer[k] = grad_power(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(k)) *
                  std::conj(analysis.spectrum[t * n_bins + k]);
    }
    std::fill(buffer.begin() + static_cast<std::ptrdiff_t>(n_bins), buffer.end(), std::complex<double>{});
    fft_.forward(buffer);
    double* dst = grad.data() + t * static_cast<std::size_t>(cfg_.hop);
    for (std::size_t n = 0; n < window_.size(); ++n) dst[n] += 2.0 * buffer[n].real() * window_[n];
  }
  return grad;
}

std::vector<double> MelFrontEnd::mel_backward(const SpectralAnalysis& analysis, const Matrix& grad_mel) const {
  if (grad_mel.rows() != static_cast<Eigen::Index>(analysis.frames) || grad_mel.cols() != cfg_.n_mels) {
    throw Error(ErrorCode::kShapeMismatch, "mel gradient shape does not match analysis");
  }
  const Matrix grad_power = grad_mel * filterbank_;
  return power_backward(analysis, grad_power);
}

Matrix MelFrontEnd::logmel(const Matrix& mel) const {
  return (mel.array() + cfg_.power_floor).log().matrix();
}

Matrix MelFrontEnd::logmel_backward(const Matrix& mel, const Matrix& grad_logmel) const {
  if (grad_logmel.rows() != mel.rows() || grad_logmel.cols() != mel.cols()) {
    throw Error(ErrorCode::kShapeMismatch, "feature gradient shape does not match features");
  }
  return (grad_logmel.array() / (mel.array() + cfg_.power_floor)).matrix();
}

CosineLoss negative_cosine(const Matrix& a, const Matrix& b, double floor, bool with_grad) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw Error(ErrorCode::kShapeMismatch, "cosine operands differ in shape");
  }
  const double dot = (a.array() * b.array()).sum();
  const double norm_a_raw = a.norm();
  const double norm_a = std::max(norm_a_raw, floor);
  const double norm_b = std::max(b.norm(), floor);
  CosineLoss out;
  out.value = -dot / (norm_a * norm_b);
  if (with_grad) {
    out.grad_a = -b / (norm_a * norm_b);
    // Below the floor the norm is a constant and contributes no gradient.
    if (norm_a_raw > floor) out.grad_a += (dot / (norm_a * norm_a * norm_a * norm_b)) * a;
  }
  return out;
}

Matrix stft_power(const AudioClip& clip, const FeatureConfig& cfg) {
  return MelFrontEnd(cfg).analyze(clip).power;
}

MelSpectrogram mel_spectrogram(const AudioClip& clip, const FeatureConfig& cfg) {
  return {MelFrontEnd(cfg).analyze(clip).mel, cfg};
}

namespace {

void require_equal_length(const AudioClip& a, const AudioClip& b) {
  if (a.size() != b.size()) {
    throw Error(ErrorCode::kLengthMismatch, "mel cosine loss needs equal-length clips");
  }
}

}  // namespace

double mel_cosine_loss(const AudioClip& x_adv, const AudioClip& x_ref, const FeatureConfig& cfg) {
  require_equal_length(x_adv, x_ref);
  const MelFrontEnd front(cfg);
  return negative_cosine(front.analyze(x_adv).mel, front.analyze(x_ref).mel, cfg.power_floor, false).value;
}

std::vector<double> mel_cosine_loss_backward(const AudioClip& x_adv, const AudioClip& x_ref,
                                             const FeatureConfig& cfg) {
  require_equal_length(x_adv, x_ref);
  const MelFrontEnd front(cfg);
  const SpectralAnalysis adv = front.analyze(x_adv);
  const CosineLoss loss = negative_cosine(adv.mel, front.analyze(x_ref).mel, cfg.power_floor, true);
  return front.mel_backward(adv, loss.grad_a);
}

Matrix logmel_features(const AudioClip& clip, const FeatureConfig& cfg) {
  const MelFrontEnd front(cfg);
  return front.logmel(front.analyze(clip).mel);
}

std::vector<double> logmel_features_backward(const AudioClip& clip, const FeatureConfig& cfg,
                                             const Matrix& grad_features) {
  const MelFrontEnd front(cfg);
  const SpectralAnalysis analysis = front.analyze(clip);
  return front.mel_backward(analysis, front.logmel_backward(analysis.mel, grad_features));
}

void to_json(nlohmann::json& j, const FeatureConfig& cfg) {
  j = nlohmann::json{{"sample_rate", cfg.sample_rate}, {"frame_len", cfg.frame_len},
                     {"hop", cfg.hop},                 {"fft_size", cfg.fft_size},
                     {"n_mels", cfg.n_mels},           {"mel_low_hz", cfg.mel_low_hz},
                     {"mel_high_hz", cfg.mel_high_hz}, {"power_floor", cfg.power_floor},
                     {"window", "hann"}};
}

void from_json(const nlohmann::json& j, FeatureConfig& cfg) {
  cfg = FeatureConfig{};
  cfg.sample_rate = j.value("sample_rate", cfg.sample_rate);
  cfg.frame_len = j.value("frame_len", cfg.frame_len);
  cfg.hop = j.value("hop", cfg.hop);
  cfg.fft_size = j.value("fft_size", cfg.fft_size);
  cfg.n_mels = j.value("n_mels", cfg.n_mels);
  cfg.mel_low_hz = j.value("mel_low_hz", cfg.mel_low_hz);
  cfg.mel_high_hz = j.value("mel_high_hz", cfg.mel_high_hz);
  cfg.power_floor = j.value("power_floor", cfg.power_floor);
  if (j.value("window", std::string("hann")) != "hann") {
    throw Error(ErrorCode::kInvalidArgument, "only the Hann window is supported");
  }
}

}  // namespace maskattack
