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
#include <set>

#include <doctest.h>
#include <nlohmann/json.hpp>

#include "maskattack/error.hpp"
#include "maskattack/features.hpp"
#include "maskattack/synth.hpp"

using namespace maskattack;

namespace {

// Index of the strongest bin in [lo, hi) of a power spectrum row sum.
std::size_t peak_bin(const Matrix& power, std::size_t lo, std::size_t hi) {
  const Eigen::RowVectorXd total = power.colwise().sum();
  std::size_t best = lo;
  for (std::size_t k = lo; k < hi; ++k) {
    if (total(static_cast<Eigen::Index>(k)) > total(static_cast<Eigen::Index>(best))) best = k;
  }
  return best;
}

}  // namespace

TEST_SUITE("synth") {
  TEST_CASE("render_text duration and determinism") {
    const SynthProfile p = default_profile();
    CHECK(render_text("a", p, 8000).size() == 640);
    CHECK(render_text("open the door", p, 8000).size() == 13 * 640);
    CHECK(render_text("hello", p, 8000, 4) == render_text("hello", p, 8000, 4));
    CHECK(segment_samples(p, 8000) == 640);
  }

  TEST_CASE("jitter draws depend on the seed; clean rendering ignores it") {
    const SynthProfile p = default_profile();
    CHECK(render_text("abc", p, 8000, 1) != render_text("abc", p, 8000, 2));
    SynthProfile still = p;
    still.jitter = 0.0;
    CHECK(render_text("abc", still, 8000, 1) == render_text("abc", still, 8000, 2));
    CHECK(render_clean("abc", p) == render_text("abc", still, 8000, 0));
  }

  TEST_CASE("unknown characters are rejected") {
    CHECK_THROWS_AS(render_text("Hi!", default_profile(), 8000), Error);
    CHECK_THROWS_AS(render_text("", default_profile(), 8000), Error);
  }

  TEST_CASE("dominant bins of 'a' match its tone pair within one bin") {
    const SynthProfile p = default_profile();
    const FeatureConfig cfg;
    const Matrix power = stft_power(render_clean("a", p), cfg);
    const double bin_hz = 8000.0 / cfg.fft_size;
    const auto [low, high] = p.char_freq_table.at('a');
    const std::size_t split = static_cast<std::size_t>(1200.0 / bin_hz);
    const double low_peak = static_cast<double>(peak_bin(power, 1, split)) * bin_hz;
    const double high_peak = static_cast<double>(peak_bin(power, split, cfg.fft_size / 2 + 1)) * bin_hz;
    CHECK(std::abs(low_peak - low) <= bin_hz);
    CHECK(std::abs(high_peak - high) <= bin_hz);
  }

  TEST_CASE("distinct characters have dissimilar spectra") {
    const SynthProfile p = default_profile();
    const FeatureConfig cfg;
    std::vector<Eigen::RowVectorXd> spectra;
    for (char c : kAlphabet) {
      spectra.push_back(stft_power(render_clean(std::string(1, c), p), cfg).colwise().sum());
    }
    double worst = 0.0;
    for (std::size_t i = 0; i < spectra.size(); ++i) {
      for (std::size_t j = i + 1; j < spectra.size(); ++j) {
        const double cos = spectra[i].dot(spectra[j]) / (spectra[i].norm() * spectra[j].norm());
        worst = std::max(worst, cos);
      }
    }
    CHECK(worst < 0.9);
  }

  TEST_CASE("default profile satisfies its invariants") {
    const SynthProfile p = default_profile();
    CHECK_NOTHROW(validate(p, 8000));
    CHECK(p.char_freq_table.size() == kAlphabet.size());
    CHECK(min_frequency_separation(p) >= 30.0);
    CHECK(p.jitter == 0.02);
    CHECK(p.segment_ms == 80.0);
    CHECK(p.ramp_ms == 8.0);
    CHECK(p.char_freq_table.at('a').first == 300.0);
    CHECK(p.char_freq_table.at('b').first == 360.0);
    CHECK(p.char_freq_table.at(' ').first == 150.0);
  }

  TEST_CASE("validate catches broken profiles") {
    SynthProfile missing = default_profile();
    missing.char_freq_table.erase('q');
    CHECK_THROWS_AS(validate(missing, 8000), Error);

    SynthProfile crowded = default_profile();
    crowded.char_freq_table['b'] = {crowded.char_freq_table['a'].first + 10.0, crowded.char_freq_table['b'].second};
    CHECK_THROWS_AS(validate(crowded, 8000), Error);

    SynthProfile aliased = default_profile();
    aliased.char_freq_table['z'].second = 4000.0;
    CHECK_THROWS_AS(validate(aliased, 8000), Error);
  }

  TEST_CASE("command_set") {
    const auto& cmds = command_set();
    REQUIRE(cmds.size() == 10);
    CHECK(cmds.front() == "call my wife");
    CHECK(cmds.back() == "turn on airplane mode");
    CHECK(std::set<std::string>(cmds.begin(), cmds.end()).size() == 10);
    for (const auto& c : cmds) {
      for (char ch : c) CHECK(kAlphabet.find(ch) != std::string_view::npos);
    }
  }

  TEST_CASE("build_dataset sizes, order and determinism") {
    const SynthProfile p = default_profile();
    const auto none = build_dataset(p, 0, 1);
    CHECK(none.size() == 10);
    const auto five = build_dataset(p, 5, 1);
    REQUIRE(five.size() == 60);
    for (std::size_t i = 0; i < 10; ++i) {
      CHECK(five[i].clean);
      CHECK(five[i].transcript == command_set()[i]);
      CHECK(five[i].clip == render_clean(command_set()[i], p));
    }
    std::set<std::vector<double>> distinct;
    for (std::size_t i = 10; i < 60; ++i) {
      CHECK_FALSE(five[i].clean);
      distinct.insert(five[i].clip.samples);
    }
    CHECK(distinct.size() == 50);
    const auto again = build_dataset(p, 5, 1);
    for (std::size_t i = 0; i < 60; ++i) CHECK(again[i].clip == five[i].clip);
    CHECK_THROWS_AS(build_dataset(p, -1, 1), Error);
  }

  TEST_CASE("profile JSON round trip") {
    SynthProfile p = default_profile();
    p.segment_ms = 70.0;
    p.jitter = 0.01;
    const nlohmann::json j = p;
    CHECK(j.get<SynthProfile>() == p);
  }
}
