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
#include <limits>

#include <doctest.h>
#include <nlohmann/json.hpp>

#include "maskattack/attack.hpp"
#include "maskattack/error.hpp"
#include "oracles.hpp"

using namespace maskattack;
namespace mt = maskattack::testing;

namespace {

double max_abs_diff(const AudioClip& a, const AudioClip& b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a.samples[i] - b.samples[i]));
  return worst;
}

AttackConfig short_config(int steps = 25) {
  AttackConfig cfg;
  cfg.steps = steps;
  cfg.seed = 3;
  return cfg;
}

}  // namespace

TEST_SUITE("attack") {
  TEST_CASE("defaults") {
    const AttackConfig cfg;
    CHECK(cfg.alpha == 0.0005);
    CHECK(cfg.steps == 500);
    CHECK(cfg.superimpose_max == 3.0);
    CHECK(cfg.carlini_c == 0.1);
    CHECK(cfg.target_peak == 0.5);
    CHECK_NOTHROW(validate(cfg));
    AttackConfig bad = cfg;
    bad.steps = 0;
    CHECK_THROWS_AS(validate(bad), Error);
    bad = cfg;
    bad.epsilon = 0.0;
    CHECK_THROWS_AS(validate(bad), Error);
    bad = cfg;
    bad.lambda2 = -1.0;
    CHECK_THROWS_AS(validate(bad), Error);
    const nlohmann::json j = cfg;
    CHECK(j.get<AttackConfig>() == cfg);
  }

  TEST_CASE("clip_inf") {
    const AudioClip c = clip_inf(AudioClip{{0.2, -0.3, 0.05}, 8000}, 0.1);
    CHECK(c.samples == std::vector<double>{0.1, -0.1, 0.05});
    const AudioClip small = mt::random_clip(50, 1, 0.01);
    CHECK(clip_inf(small, 0.02) == small);
    const AudioClip big = mt::random_clip(50, 2, 1.0);
    CHECK(clip_inf(clip_inf(big, 0.3), 0.3) == clip_inf(big, 0.3));
  }

  TEST_CASE("dual source normalizes, pads and sums") {
    const AudioClip a = mt::random_clip(700, 3, 0.9);
    const AudioClip b = mt::random_clip(500, 4, 0.1);
    const DualSource s = make_dual_source(a, b, 0.5);
    CHECK(peak(s.select) == 0.5);
    CHECK(peak(s.mute) == 0.5);
    CHECK(s.mixed.size() == 700);
    CHECK(s.mixed == superimpose(s.select, s.mute));
  }

  TEST_CASE("total_loss degenerate weights and the zero perturbation") {
    const ModelCheckpoint ckpt = mt::random_model(5);
    const AudioClip x = mt::random_clip(1500, 6);
    const AudioClip xs = mt::random_clip(1500, 7);
    const LabelSequence y = encode_text("ab");
    AttackConfig cfg;
    cfg.lambda1 = 0.0;
    cfg.lambda2 = 0.0;
    const AudioClip delta = mt::random_clip(1500, 8, 0.01);
    const TotalLoss plain = total_loss(ckpt, x, delta, xs, y, cfg);
    CHECK(plain.total == plain.l_adv);

    cfg = AttackConfig{};
    const AudioClip zero{std::vector<double>(1500, 0.0), 8000};
    const TotalLoss at_zero = total_loss(ckpt, x, zero, xs, y, cfg);
    CHECK(at_zero.l_p == 0.0);
    AttackConfig no_norm = cfg;
    no_norm.lambda2 = 0.0;
    CHECK(total_loss(ckpt, x, zero, xs, y, no_norm).grad == at_zero.grad);
    CHECK(at_zero.total == doctest::Approx(at_zero.l_adv + cfg.lambda1 * at_zero.l_mel).epsilon(1e-12));
  }

  TEST_CASE("total_loss gradient matches central differences") {
    const ModelCheckpoint ckpt = mt::random_model(9);
    const AudioClip x = mt::random_clip(1400, 10);
    const AudioClip xs = mt::random_clip(1400, 11);
    const LabelSequence y = encode_text("abc");
    const AttackConfig cfg;
    AudioClip delta = mt::random_clip(1400, 12, 0.01);
    const TotalLoss l = total_loss(ckpt, x, delta, xs, y, cfg);
    auto loss = [&](const std::vector<double>& d) { return total_loss(ckpt, x, AudioClip{d, 8000}, xs, y, cfg).total; };
    double worst = 0.0;
    for (std::size_t i : mt::sample_indices(delta.size(), 10, 13)) {
      worst = std::max(worst, mt::rel_err(l.grad[i], mt::central_difference(loss, delta.samples, i, 1e-6)));
    }
    CHECK(worst <= 1e-4);
  }

  TEST_CASE("sma_attack invariants on a briefly trained model") {
    const ModelCheckpoint& ckpt = mt::quick_model();
    const SynthProfile p = default_profile();
    const AudioClip xs = render_clean("open the door", p);
    const AudioClip xm = render_clean("play music", p);
    const AttackConfig cfg = short_config(40);
    const AttackResult r = sma_attack(ckpt, xs, xm, encode_text("open the door"), cfg, "play music");

    CHECK(r.method == "sma");
    CHECK(r.y_select == "open the door");
    CHECK(r.y_mute == "play music");
    REQUIRE(r.trace.size() == 40);
    CHECK(max_abs_diff(r.final_delta, AudioClip{std::vector<double>(r.final_delta.size(), 0.0), 8000}) <=
          cfg.epsilon);
    for (const auto& row : r.trace) {
      const double sum = row.l_adv + cfg.lambda1 * row.l_mel + cfg.lambda2 * row.l_p;
      CHECK(mt::rel_err(row.total, sum, 1e-12) <= 1e-6);
    }
    const AcousticModel model(ckpt);
    for (const auto& s : r.successes) {
      CHECK(model.transcribe(s.clip) == r.y_select);
      CHECK(max_abs_diff(s.clip, r.normal) <= cfg.epsilon + 1e-9);
      CHECK(std::abs(snr_db(r.normal, difference(s.clip, r.normal)) - s.snr_db) <= 1e-9);
      CHECK(r.trace[static_cast<std::size_t>(s.step - 1)].decoded == r.y_select);
    }
    for (const auto& row : r.trace) {
      const bool recorded = std::any_of(r.successes.begin(), r.successes.end(),
                                        [&](const AttackSuccess& s) { return s.step == row.step; });
      CHECK(recorded == (row.decoded == r.y_select));
    }
    const VerificationReport v = verify_result(ckpt, r, cfg.epsilon);
    CHECK(v.checked == static_cast<int>(r.successes.size()));
    CHECK(v.violations() == 0);

    const AttackResult again = sma_attack(ckpt, xs, xm, encode_text("open the door"), cfg, "play music");
    CHECK(again.final_delta == r.final_delta);
    REQUIRE(again.successes.size() == r.successes.size());
    for (std::size_t i = 0; i < r.trace.size(); ++i) {
      CHECK(again.trace[i].total == r.trace[i].total);
      CHECK(again.trace[i].decoded == r.trace[i].decoded);
    }
  }

  TEST_CASE("the projection holds at every step even with a huge step size") {
    AttackConfig cfg = short_config(5);
    cfg.alpha = 10.0;
    cfg.epsilon = 0.003;
    const SynthProfile p = default_profile();
    const AttackResult r = sma_attack(mt::quick_model(), render_clean("send a text", p), render_clean("play music", p),
                                      encode_text("send a text"), cfg);
    for (double d : r.final_delta.samples) CHECK(std::abs(d) <= cfg.epsilon);
    CHECK(verify_result(mt::quick_model(), r, cfg.epsilon).violations() == 0);
  }

  TEST_CASE("verification flags tampered results") {
    const SynthProfile p = default_profile();
    AttackResult r = sma_attack(mt::quick_model(), render_clean("open the door", p), render_clean("play music", p),
                                encode_text("open the door"), short_config(3));
    AttackSuccess fake;
    fake.step = 99;
    fake.clip = r.normal;
    for (double& s : fake.clip.samples) s += 0.2;
    fake.snr_db = 1.0;
    r.successes.push_back(fake);
    const VerificationReport v = verify_result(mt::quick_model(), r, 0.05);
    CHECK(v.bound_violations >= 1);
    CHECK(v.snr_mismatches >= 1);
  }

  TEST_CASE("targets longer than the frame budget are infeasible") {
    const SynthProfile p = default_profile();
    const LabelSequence long_target = encode_text("this target cannot fit in two characters of audio");
    try {
      sma_attack(mt::quick_model(), render_clean("ab", p), render_clean("cd", p), long_target, short_config());
      FAIL("expected InfeasibleTarget");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::kInfeasibleTarget);
    }
    CHECK_THROWS_AS(carlini_baseline(mt::quick_model(), render_clean("ab", p), render_clean("cd", p), long_target,
                                     short_config()),
                    Error);
  }

  TEST_CASE("carlini baseline stays in bounds and measures SNR against the muted source") {
    const SynthProfile p = default_profile();
    AttackConfig cfg = short_config(30);
    const AttackResult r = carlini_baseline(mt::quick_model(), render_clean("take a picture", p),
                                            render_clean("call my wife", p), encode_text("take a picture"), cfg);
    CHECK(r.method == "carlini");
    CHECK(r.normal.size() == render_clean("take a picture", p).size());
    CHECK(peak(r.normal) == 0.5);
    for (double d : r.final_delta.samples) CHECK(std::abs(d) <= cfg.epsilon);
    CHECK(verify_result(mt::quick_model(), r, cfg.epsilon).violations() == 0);

    cfg.carlini_c = 0.0;
    const AttackResult pure = carlini_baseline(mt::quick_model(), render_clean("take a picture", p),
                                               render_clean("call my wife", p), encode_text("take a picture"), cfg);
    for (const auto& row : pure.trace) CHECK(row.total == row.l_adv);
    // The first step starts from delta = 0.
    CHECK(pure.trace.front().l_p == 0.0);
  }

  TEST_CASE("superimpose sweep stops at the smallest succeeding scale") {
    const SynthProfile p = default_profile();
    const AttackResult r = superimpose_baseline(mt::quick_model(), render_clean("play music", p),
                                                render_clean("open the website", p), encode_text("play music"), 0.05,
                                                3.0);
    CHECK(r.method == "superimpose");
    REQUIRE_FALSE(r.trace.empty());
    CHECK(r.trace.front().step == 0);
    CHECK(std::isinf(r.trace.front().snr_db));
    for (std::size_t i = 0; i + 1 < r.trace.size(); ++i) CHECK(r.trace[i].decoded != "play music");
    if (r.succeeded()) {
      REQUIRE(r.superimpose_scale.has_value());
      CHECK(*r.superimpose_scale == doctest::Approx(0.05 * r.trace.back().step));
      CHECK(r.trace.back().decoded == "play music");
      CHECK(r.successes.size() == 1);
    } else {
      CHECK(r.trace.size() == 61);
    }
    CHECK(verify_result(mt::quick_model(), r, std::numeric_limits<double>::infinity()).violations() == 0);
  }

  TEST_CASE("result JSON summary") {
    const SynthProfile p = default_profile();
    const AttackResult r = sma_attack(mt::quick_model(), render_clean("open the door", p),
                                      render_clean("play music", p), encode_text("open the door"), short_config(5));
    const nlohmann::json j = r;
    CHECK(j.at("method") == "sma");
    CHECK(j.at("x_prime_count") == r.successes.size());
    CHECK(j.at("success") == r.succeeded());
  }
}
