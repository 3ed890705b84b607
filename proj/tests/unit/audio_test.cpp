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
#include <cstdint>
#include <fstream>
#include <vector>

#include <doctest.h>

#include "maskattack/audio.hpp"
#include "maskattack/error.hpp"
#include "maskattack/random.hpp"
#include "oracles.hpp"

using namespace maskattack;
namespace mt = maskattack::testing;

namespace {

void write_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

void put_u32(std::vector<std::uint8_t>& b, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) b.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_u16(std::vector<std::uint8_t>& b, std::uint16_t v) {
  b.push_back(static_cast<std::uint8_t>(v));
  b.push_back(static_cast<std::uint8_t>(v >> 8));
}

void put_tag(std::vector<std::uint8_t>& b, const char* tag) { b.insert(b.end(), tag, tag + 4); }

// Hand-built WAV with an optional extra chunk between fmt and data.
std::vector<std::uint8_t> make_wav(std::uint16_t channels, std::uint16_t bits, const std::vector<std::int16_t>& pcm,
                                   bool extra_chunk = false) {
  std::vector<std::uint8_t> body;
  put_tag(body, "WAVE");
  put_tag(body, "fmt ");
  put_u32(body, 16);
  put_u16(body, 1);
  put_u16(body, channels);
  put_u32(body, 8000);
  put_u32(body, 8000u * channels * bits / 8);
  put_u16(body, static_cast<std::uint16_t>(channels * bits / 8));
  put_u16(body, bits);
  if (extra_chunk) {
    put_tag(body, "LIST");
    put_u32(body, 3);
    body.insert(body.end(), {'a', 'b', 'c', 0});  // odd size plus pad byte
  }
  put_tag(body, "data");
  put_u32(body, static_cast<std::uint32_t>(pcm.size() * 2));
  for (std::int16_t s : pcm) put_u16(body, static_cast<std::uint16_t>(s));
  std::vector<std::uint8_t> file;
  put_tag(file, "RIFF");
  put_u32(file, static_cast<std::uint32_t>(body.size()));
  file.insert(file.end(), body.begin(), body.end());
  return file;
}

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an exception");
  return ErrorCode::kInvalidArgument;
}

}  // namespace

TEST_SUITE("audio") {
  TEST_CASE("load_wav scales 16-bit codes by 1/32768") {
    const auto dir = mt::fresh_dir("audio_scale");
    write_bytes(dir / "a.wav", make_wav(1, 16, {16384, 0, -32768, 32767}));
    const AudioClip clip = load_wav(dir / "a.wav");
    CHECK(clip.sample_rate == 8000);
    REQUIRE(clip.size() == 4);
    CHECK(clip.samples[0] == 0.5);
    CHECK(clip.samples[1] == 0.0);
    CHECK(clip.samples[2] == -1.0);
    CHECK(clip.samples[3] == 32767.0 / 32768.0);
  }

  TEST_CASE("load_wav skips unknown chunks") {
    const auto dir = mt::fresh_dir("audio_chunks");
    write_bytes(dir / "a.wav", make_wav(1, 16, {100, -100}, true));
    const AudioClip clip = load_wav(dir / "a.wav");
    REQUIRE(clip.size() == 2);
    CHECK(clip.samples[0] == 100.0 / 32768.0);
  }

  TEST_CASE("load_wav rejects bad input") {
    const auto dir = mt::fresh_dir("audio_bad");
    write_bytes(dir / "stereo.wav", make_wav(2, 16, {1, 2, 3, 4}));
    CHECK(code_of([&] { load_wav(dir / "stereo.wav"); }) == ErrorCode::kUnsupportedFormat);
    write_bytes(dir / "8bit.wav", make_wav(1, 8, {1, 2}));
    CHECK(code_of([&] { load_wav(dir / "8bit.wav"); }) == ErrorCode::kUnsupportedFormat);
    write_bytes(dir / "junk.wav", {'R', 'I', 'F', 'X', 0, 0, 0, 0});
    CHECK(code_of([&] { load_wav(dir / "junk.wav"); }) == ErrorCode::kMalformedWav);
    auto truncated = make_wav(1, 16, {1, 2, 3, 4});
    truncated.resize(truncated.size() - 3);
    write_bytes(dir / "short.wav", truncated);
    CHECK(code_of([&] { load_wav(dir / "short.wav"); }) == ErrorCode::kMalformedWav);
    CHECK(code_of([&] { load_wav(dir / "missing.wav"); }) == ErrorCode::kIoError);
  }

  TEST_CASE("save_wav writes a canonical header and two bytes per sample") {
    const auto dir = mt::fresh_dir("audio_save");
    AudioClip clip;
    clip.samples.assign(8000, 0.25);
    CHECK(save_wav(clip, dir / "a.wav") == 0);
    CHECK(std::filesystem::file_size(dir / "a.wav") == 44 + 16000);
    std::ifstream in(dir / "a.wav", std::ios::binary);
    std::vector<unsigned char> header(44);
    in.read(reinterpret_cast<char*>(header.data()), 44);
    const std::uint32_t data_len = header[40] | header[41] << 8 | header[42] << 16 | header[43] << 24;
    CHECK(data_len == 16000);
    CHECK(std::string(header.begin() + 36, header.begin() + 40) == "data");
  }

  TEST_CASE("save_wav clamps out-of-range samples and counts them") {
    const auto dir = mt::fresh_dir("audio_clamp");
    AudioClip clip{{1.5, -2.0, 0.5}, 8000};
    CHECK(save_wav(clip, dir / "a.wav") == 2);
    const AudioClip back = load_wav(dir / "a.wav");
    CHECK(back.samples[0] == 32767.0 / 32768.0);
    CHECK(back.samples[1] == -1.0);
    CHECK(back.samples[2] == 0.5);
    bool clamped = false;
    CHECK(quantize_sample(1.5, &clamped) == 32767);
    CHECK(clamped);
  }

  TEST_CASE("save then load is identity up to 1/32768 for 100 random clips") {
    const auto dir = mt::fresh_dir("audio_roundtrip");
    Rng rng(3);
    for (int i = 0; i < 100; ++i) {
      const AudioClip clip = mt::random_clip(1 + rng.below(2000), 1000 + i, 0.99);
      save_wav(clip, dir / "r.wav");
      const AudioClip back = load_wav(dir / "r.wav");
      REQUIRE(back.size() == clip.size());
      double worst = 0.0;
      for (std::size_t k = 0; k < clip.size(); ++k) worst = std::max(worst, std::abs(back.samples[k] - clip.samples[k]));
      CHECK(worst <= 1.0 / 32768.0);
      CHECK(back == quantize(clip));
    }
  }

  TEST_CASE("save_wav to an unwritable path is an IoError") {
    AudioClip clip{{0.0}, 8000};
    CHECK(code_of([&] { save_wav(clip, "/nonexistent_dir_xyz/a.wav"); }) == ErrorCode::kIoError);
  }

  TEST_CASE("peak_normalize") {
    const auto r = peak_normalize(AudioClip{{0.2, -0.4}, 8000}, 0.5);
    CHECK_FALSE(r.silent);
    CHECK(r.clip.samples[0] == doctest::Approx(0.25).epsilon(1e-15));
    CHECK(r.clip.samples[1] == -0.5);

    const AudioClip at_target{{0.5, -0.1, 0.3}, 8000};
    CHECK(peak_normalize(at_target, 0.5).clip == at_target);

    const AudioClip silent{{0.0, 0.0}, 8000};
    const auto s = peak_normalize(silent, 0.5);
    CHECK(s.silent);
    CHECK(s.clip == silent);
  }

  TEST_CASE("peak_normalize hits the target exactly and is idempotent") {
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
      const AudioClip clip = mt::random_clip(301, seed, 0.01 + 0.05 * static_cast<double>(seed));
      const AudioClip once = peak_normalize(clip, 0.5).clip;
      CHECK(peak(once) == 0.5);
      CHECK(peak_normalize(once, 0.5).clip == once);
    }
  }

  TEST_CASE("pad_to_common_length pads the tail") {
    const auto [a, b] = pad_to_common_length(mt::random_clip(100, 1), mt::random_clip(80, 2));
    CHECK(a.size() == 100);
    REQUIRE(b.size() == 100);
    for (std::size_t i = 80; i < 100; ++i) CHECK(b.samples[i] == 0.0);
    CHECK(std::vector<double>(b.samples.begin(), b.samples.begin() + 80) == mt::random_clip(80, 2).samples);

    const AudioClip c = mt::random_clip(50, 3);
    const auto [c1, c2] = pad_to_common_length(c, c);
    CHECK(c1 == c);
    CHECK(c2 == c);

    AudioClip fast = mt::random_clip(10, 4);
    fast.sample_rate = 16000;
    CHECK(code_of([&] { pad_to_common_length(c, fast); }) == ErrorCode::kSampleRateMismatch);
  }

  TEST_CASE("superimpose") {
    const AudioClip sum = superimpose(AudioClip{{0.1, 0.2}, 8000}, AudioClip{{0.3, -0.2}, 8000});
    CHECK(sum.samples[0] == doctest::Approx(0.4));
    CHECK(sum.samples[1] == 0.0);

    const AudioClip a = mt::random_clip(64, 5);
    const AudioClip b = mt::random_clip(64, 6);
    const AudioClip c = mt::random_clip(64, 7);
    CHECK(superimpose(a, AudioClip{std::vector<double>(64, 0.0), 8000}) == a);
    CHECK(superimpose(a, b) == superimpose(b, a));
    CHECK(code_of([&] { superimpose(a, mt::random_clip(63, 8)); }) == ErrorCode::kLengthMismatch);
    AudioClip fast = b;
    fast.sample_rate = 16000;
    CHECK(code_of([&] { superimpose(a, fast); }) == ErrorCode::kSampleRateMismatch);
  }

  TEST_CASE("superimpose is associative on values where float addition is exact") {
    // Multiples of 2^-10 in [-1, 1] add without rounding.
    Rng rng(9);
    auto dyadic = [&] {
      AudioClip clip;
      for (int i = 0; i < 128; ++i) clip.samples.push_back(static_cast<double>(rng.below(2049)) / 1024.0 - 1.0);
      return clip;
    };
    const AudioClip a = dyadic(), b = dyadic(), c = dyadic();
    CHECK(superimpose(superimpose(a, b), c) == superimpose(a, superimpose(b, c)));
  }

  TEST_CASE("gaussian_noise") {
    const AudioClip zero = gaussian_noise(100, 0.0, 1);
    for (double s : zero.samples) CHECK(s == 0.0);
    CHECK(gaussian_noise(500, 0.01, 42) == gaussian_noise(500, 0.01, 42));
    CHECK(gaussian_noise(500, 0.01, 42) != gaussian_noise(500, 0.01, 43));

    const AudioClip n = gaussian_noise(100000, 0.001, 7);
    double mean = 0.0;
    for (double s : n.samples) mean += s;
    mean /= static_cast<double>(n.size());
    double var = 0.0;
    for (double s : n.samples) var += (s - mean) * (s - mean);
    const double sd = std::sqrt(var / static_cast<double>(n.size() - 1));
    CHECK(sd >= 0.00097);
    CHECK(sd <= 0.00103);
  }

  TEST_CASE("snr_db") {
    const AudioClip x = mt::random_clip(400, 10);
    CHECK(std::abs(snr_db(x, x)) <= 1e-9);

    AudioClip ten{std::vector<double>(100, 1.0), 8000};  // energy 100
    AudioClip one{std::vector<double>(100, 0.1), 8000};  // energy 1
    CHECK(snr_db(ten, one) == doctest::Approx(20.0).epsilon(1e-12));

    const AudioClip d = mt::random_clip(400, 11, 0.01);
    CHECK(std::abs(snr_db(x, scaled(d, 0.1)) - snr_db(x, d) - 20.0) <= 1e-9);
    for (double a : {0.003, 0.5, 2.0, 77.0}) {
      CHECK(std::abs(snr_db(x, scaled(d, a)) - (snr_db(x, d) - 20.0 * std::log10(a))) <= 1e-9);
    }

    const AudioClip silent{std::vector<double>(400, 0.0), 8000};
    CHECK(code_of([&] { snr_db(x, silent); }) == ErrorCode::kZeroPerturbation);
    CHECK(code_of([&] { snr_db(x, mt::random_clip(399, 1)); }) == ErrorCode::kLengthMismatch);
  }

  TEST_CASE("validate rejects non-finite samples and bad rates") {
    CHECK(code_of([] { validate(AudioClip{{0.0, NAN}, 8000}); }) == ErrorCode::kInvalidArgument);
    CHECK(code_of([] { validate(AudioClip{{0.0}, 0}); }) == ErrorCode::kInvalidArgument);
    CHECK_NOTHROW(validate(AudioClip{{0.0}, 8000}));
  }
}

TEST_SUITE("random") {
  TEST_CASE("streams are fixed by the seed") {
    Rng a(123), b(123);
    for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
    // First output of mt19937_64 with seed 5489 is fixed by the standard.
    CHECK(Rng(5489).next_u64() == 14514284786278117030ULL);
  }

  TEST_CASE("uniform, below and normal stay in range") {
    Rng rng(1);
    for (int i = 0; i < 10000; ++i) {
      const double u = rng.uniform();
      CHECK((u >= 0.0 && u < 1.0));
      CHECK(rng.below(7) < 7);
      CHECK(std::isfinite(rng.normal()));
    }
  }

  TEST_CASE("derive_seed separates streams") {
    CHECK(derive_seed(1, 2, 3) == derive_seed(1, 2, 3));
    CHECK(derive_seed(1, 2, 3) != derive_seed(1, 3, 2));
    CHECK(derive_seed(1, 2) != derive_seed(2, 2));
  }
}
