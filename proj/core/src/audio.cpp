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
#include "maskattack/audio.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>

#include "maskattack/error.hpp"
#include "maskattack/random.hpp"

namespace maskattack {
namespace {

std::uint32_t read_u32(const unsigned char* p) {
  return std::uint32_t{p[0]} | (std::uint32_t{p[1]} << 8) | (std::uint32_t{p[2]} << 16) |
         (std::uint32_t{p[3]} << 24);
}

std::uint16_t read_u16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u16(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
}

void require_same_rate(const AudioClip& a, const AudioClip& b) {
  if (a.sample_rate != b.sample_rate) {
    throw Error(ErrorCode::kSampleRateMismatch,
                std::to_string(a.sample_rate) + " Hz vs " + std::to_string(b.sample_rate) + " Hz");
  }
}

void require_same_length(const AudioClip& a, const AudioClip& b) {
  if (a.size() != b.size()) {
    throw Error(ErrorCode::kLengthMismatch,
                std::to_string(a.size()) + " vs " + std::to_string(b.size()) + " samples");
  }
}

}  // namespace

void validate(const AudioClip& clip) {
  if (clip.sample_rate <= 0) throw Error(ErrorCode::kInvalidArgument, "sample rate must be positive");
  for (double s : clip.samples) {
    if (!std::isfinite(s)) throw Error(ErrorCode::kInvalidArgument, "non-finite sample");
  }
}

AudioClip load_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIoError, "cannot open " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const auto* data = reinterpret_cast<const unsigned char*>(bytes.data());
  const std::size_t n = bytes.size();

  if (n < 12 || std::memcmp(data, "RIFF", 4) != 0 || std::memcmp(data + 8, "WAVE", 4) != 0) {
    throw Error(ErrorCode::kMalformedWav, path.string() + ": missing RIFF/WAVE signature");
  }

  bool have_fmt = false;
  int sample_rate = 0;
  std::size_t pos = 12;
  while (pos + 8 <= n) {
    const unsigned char* chunk = data + pos;
    const std::uint32_t chunk_size = read_u32(chunk + 4);
    const std::size_t body = pos + 8;
    if (chunk_size > n - body) {
      throw Error(ErrorCode::kMalformedWav, path.string() + ": chunk runs past end of file");
    }
    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      if (chunk_size < 16) throw Error(ErrorCode::kMalformedWav, path.string() + ": short fmt chunk");
      const std::uint16_t format = read_u16(data + body);
      const std::uint16_t channels = read_u16(data + body + 2);
      const std::uint32_t rate = read_u32(data + body + 4);
      const std::uint16_t bits = read_u16(data + body + 14);
      if (format != 1) throw Error(ErrorCode::kUnsupportedFormat, path.string() + ": not PCM");
      if (channels != 1) {
        throw Error(ErrorCode::kUnsupportedFormat,
                    path.string() + ": " + std::to_string(channels) + " channels, expected mono");
      }
      if (bits != 16) {
        throw Error(ErrorCode::kUnsupportedFormat,
                    path.string() + ": " + std::to_string(bits) + "-bit samples, expected 16");
      }
      if (rate == 0) throw Error(ErrorCode::kMalformedWav, path.string() + ": zero sample rate");
      sample_rate = static_cast<int>(rate);
      have_fmt = true;
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      if (!have_fmt) throw Error(ErrorCode::kMalformedWav, path.string() + ": data before fmt");
      if (chunk_size % 2 != 0) throw Error(ErrorCode::kMalformedWav, path.string() + ": odd data size");
      AudioClip clip;
      clip.sample_rate = sample_rate;
      clip.samples.resize(chunk_size / 2);
      for (std::size_t i = 0; i < clip.samples.size(); ++i) {
        const auto code = static_cast<std::int16_t>(read_u16(data + body + 2 * i));
        clip.samples[i] = code / 32768.0;
      }
      return clip;
    }
    // Chunks are word aligned.
    pos = body + chunk_size + (chunk_size & 1U);
  }
  throw Error(ErrorCode::kMalformedWav, path.string() + ": no data chunk");
}

std::int16_t quantize_sample(double amplitude, bool* clamped) {
  const double scaled = std::nearbyint(amplitude * 32768.0);
  if (clamped) *clamped = amplitude > 1.0 || amplitude < -1.0;
  return static_cast<std::int16_t>(std::clamp(scaled, -32768.0, 32767.0));
}

AudioClip quantize(const AudioClip& clip) {
  AudioClip out = clip;
  for (double& s : out.samples) s = quantize_sample(s) / 32768.0;
  return out;
}

std::size_t save_wav(const AudioClip& clip, const std::filesystem::path& path) {
  validate(clip);
  const auto data_bytes = static_cast<std::uint32_t>(clip.size() * 2);
  std::string out;
  out.reserve(44 + data_bytes);
  out += "RIFF";
  put_u32(out, 36 + data_bytes);
  out += "WAVEfmt ";
  put_u32(out, 16);
  put_u16(out, 1);  // PCM
  put_u16(out, 1);  // mono
  put_u32(out, static_cast<std::uint32_t>(clip.sample_rate));
  put_u32(out, static_cast<std::uint32_t>(clip.sample_rate) * 2);
  put_u16(out, 2);
  put_u16(out, 16);
  out += "data";
  put_u32(out, data_bytes);

  std::size_t clamped_count = 0;
  for (double s : clip.samples) {
    bool clamped = false;
    put_u16(out, static_cast<std::uint16_t>(quantize_sample(s, &clamped)));
    clamped_count += clamped ? 1 : 0;
  }

  std::ofstream file(path, std::ios::binary | std::ios::trunc);
  if (!file) throw Error(ErrorCode::kIoError, "cannot open " + path.string() + " for writing");
  file.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!file) throw Error(ErrorCode::kIoError, "write failed for " + path.string());
  return clamped_count;
}

double peak(const AudioClip& clip) {
  double m = 0.0;
  for (double s : clip.samples) m = std::max(m, std::abs(s));
  return m;
}

NormalizeResult peak_normalize(const AudioClip& clip, double target_peak) {
  if (!(target_peak > 0.0)) throw Error(ErrorCode::kInvalidArgument, "target_peak must be positive");
  const double current = peak(clip);
  if (current == 0.0) return {clip, true};
  if (current == target_peak) return {clip, false};
  const double gain = target_peak / current;
  AudioClip out = clip;
  for (double& s : out.samples) s *= gain;
  // Rounding in the multiply can leave the peak one ulp off; pin it.
  for (double& s : out.samples) {
    if (std::abs(s) > target_peak) s = std::copysign(target_peak, s);
  }
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (std::abs(clip.samples[i]) == current) out.samples[i] = std::copysign(target_peak, clip.samples[i]);
  }
  return {std::move(out), false};
}

std::pair<AudioClip, AudioClip> pad_to_common_length(const AudioClip& a, const AudioClip& b) {
  require_same_rate(a, b);
  const std::size_t n = std::max(a.size(), b.size());
  AudioClip pa = a;
  AudioClip pb = b;
  pa.samples.resize(n, 0.0);
  pb.samples.resize(n, 0.0);
  return {std::move(pa), std::move(pb)};
}

AudioClip superimpose(const AudioClip& a, const AudioClip& b) {
  require_same_rate(a, b);
  require_same_length(a, b);
  AudioClip out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out.samples[i] += b.samples[i];
  return out;
}

AudioClip difference(const AudioClip& a, const AudioClip& b) {
  require_same_rate(a, b);
  require_same_length(a, b);
  AudioClip out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out.samples[i] -= b.samples[i];
  return out;
}

AudioClip scaled(const AudioClip& clip, double factor) {
  AudioClip out = clip;
  for (double& s : out.samples) s *= factor;
  return out;
}

AudioClip gaussian_noise(std::size_t length, double sigma, std::uint64_t seed, int sample_rate) {
  if (!(sigma >= 0.0)) throw Error(ErrorCode::kInvalidArgument, "sigma must be non-negative");
  AudioClip out;
  out.sample_rate = sample_rate;
  out.samples.resize(length, 0.0);
  if (sigma == 0.0) return out;
  Rng rng(seed);
  for (double& s : out.samples) s = sigma * rng.normal();
  return out;
}

double energy(std::span<const double> samples) {
  double e = 0.0;
  for (double s : samples) e += s * s;
  return e;
}

double snr_db(const AudioClip& x, const AudioClip& delta) {
  require_same_length(x, delta);
  const double noise = energy(delta.samples);
  if (noise == 0.0) throw Error(ErrorCode::kZeroPerturbation, "perturbation has zero energy");
  return 10.0 * std::log10(energy(x.samples) / noise);
}

}  // namespace maskattack
