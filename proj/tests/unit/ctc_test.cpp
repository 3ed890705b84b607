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

#include <doctest.h>

#include "maskattack/ctc.hpp"
#include "maskattack/error.hpp"
#include "maskattack/random.hpp"
#include "oracles.hpp"

using namespace maskattack;
namespace mt = maskattack::testing;

namespace {

LabelSequence labels(std::vector<int> symbols) { return LabelSequence{std::move(symbols), {}}; }

// Logits whose argmax per frame is the given symbol.
Matrix one_hot_logits(const std::vector<int>& frames, int classes = kNumClasses) {
  Matrix m = Matrix::Zero(static_cast<Eigen::Index>(frames.size()), classes);
  for (std::size_t t = 0; t < frames.size(); ++t) m(static_cast<Eigen::Index>(t), frames[t]) = 5.0;
  return m;
}

// Random feasible instance over classes {blank, 1..v}.
std::pair<Matrix, LabelSequence> random_instance(Rng& rng, int max_t, int max_v, int max_len) {
  for (;;) {
    const int v = 1 + static_cast<int>(rng.below(max_v));
    const int t = 1 + static_cast<int>(rng.below(max_t));
    const int len = 1 + static_cast<int>(rng.below(max_len));
    std::vector<int> sym;
    for (int i = 0; i < len; ++i) sym.push_back(1 + static_cast<int>(rng.below(v)));
    if (min_frames(sym) > static_cast<std::size_t>(t)) continue;
    Matrix logits(t, v + 1);
    for (int r = 0; r < t; ++r) {
      for (int c = 0; c <= v; ++c) logits(r, c) = 2.0 * rng.normal();
    }
    return {logits, labels(sym)};
  }
}

}  // namespace

TEST_SUITE("ctc") {
  TEST_CASE("vocabulary mapping") {
    CHECK(char_to_symbol('a') == 1);
    CHECK(char_to_symbol('z') == 26);
    CHECK(char_to_symbol(' ') == 27);
    CHECK(symbol_to_char(3) == 'c');
    const LabelSequence l = encode_text("ab a");
    CHECK(l.symbols == std::vector<int>{1, 2, 27, 1});
    CHECK(l.text == "ab a");
    CHECK_THROWS_AS(encode_text("A"), Error);
    CHECK_THROWS_AS(encode_text(""), Error);
    CHECK(min_frames(std::vector<int>{1, 1, 2, 2, 2}) == 8);
  }

  TEST_CASE("single frame closed forms") {
    Matrix logits(1, 3);
    logits << 0.3, 1.2, -0.7;
    const Matrix lsm = log_softmax_rows(logits);
    CHECK(ctc_loss(logits, labels({1})) == doctest::Approx(-lsm(0, 1)).epsilon(1e-14));
    const Matrix grad = ctc_loss_backward(logits, labels({1}));
    for (int c = 0; c < 3; ++c) CHECK(grad(0, c) == doctest::Approx(std::exp(lsm(0, c)) - (c == 1)).epsilon(1e-14));
  }

  TEST_CASE("two uniform frames over three symbols give ln 3") {
    const Matrix logits = Matrix::Zero(2, 3);
    CHECK(ctc_loss(logits, labels({1})) == doctest::Approx(std::log(3.0)).epsilon(1e-14));
    CHECK(brute_force_nll(logits, labels({1})) == doctest::Approx(std::log(3.0)).epsilon(1e-14));
  }

  TEST_CASE("forced alignment when T equals the target length") {
    Rng rng(4);
    Matrix logits(3, 5);
    for (Eigen::Index i = 0; i < logits.size(); ++i) logits(i) = rng.normal();
    const Matrix lsm = log_softmax_rows(logits);
    const double expected = -(lsm(0, 2) + lsm(1, 4) + lsm(2, 1));
    CHECK(ctc_loss(logits, labels({2, 4, 1})) == doctest::Approx(expected).epsilon(1e-12));
    CHECK(brute_force_nll(logits, labels({2, 4, 1})) == doctest::Approx(expected).epsilon(1e-12));
  }

  TEST_CASE("infeasible targets are rejected") {
    const Matrix logits = Matrix::Zero(2, 5);
    CHECK_THROWS_AS(ctc_loss(logits, labels({1, 1})), Error);
    CHECK_THROWS_AS(ctc_loss_backward(logits, labels({1, 2, 3})), Error);
    try {
      ctc_loss(logits, labels({1, 1}));
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::kInfeasibleTarget);
    }
  }

  TEST_CASE("brute force refuses oversized enumerations") {
    const Matrix logits = Matrix::Zero(8, 10);
    try {
      brute_force_nll(logits, labels({1}));
      FAIL("expected TooLargeToEnumerate");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::kTooLargeToEnumerate);
    }
  }

  TEST_CASE("forward recursion agrees with enumeration on random instances") {
    Rng rng(2024);
    for (int i = 0; i < 200; ++i) {
      const auto [logits, target] = random_instance(rng, 6, 4, 3);
      CHECK(std::abs(ctc_loss(logits, target) - brute_force_nll(logits, target)) <= 1e-9);
    }
  }

  TEST_CASE("loss and gradient agree between entry points") {
    Rng rng(5);
    const auto [logits, target] = random_instance(rng, 6, 4, 3);
    const CtcLossGrad both = ctc_loss_and_grad(logits, target);
    CHECK(both.loss == doctest::Approx(ctc_loss(logits, target)).epsilon(1e-13));
    CHECK(both.grad.isApprox(ctc_loss_backward(logits, target), 1e-13));
  }

  TEST_CASE("gradient rows sum to zero and the loss is non-negative") {
    Rng rng(6);
    for (int i = 0; i < 50; ++i) {
      const auto [logits, target] = random_instance(rng, 12, 6, 4);
      const Matrix g = ctc_loss_backward(logits, target);
      for (Eigen::Index r = 0; r < g.rows(); ++r) CHECK(std::abs(g.row(r).sum()) <= 1e-9);
      CHECK(ctc_loss(logits, target) >= -1e-12);
    }
  }

  TEST_CASE("shift invariance per frame") {
    Rng rng(7);
    for (int i = 0; i < 20; ++i) {
      auto [logits, target] = random_instance(rng, 6, 4, 3);
      const double before = ctc_loss(logits, target);
      logits.row(rng.below(static_cast<std::uint64_t>(logits.rows()))).array() += rng.uniform(-50.0, 50.0);
      CHECK(std::abs(ctc_loss(logits, target) - before) <= 1e-9);
    }
  }

  TEST_CASE("gradient matches central differences") {
    Rng rng(8);
    int checked = 0;
    double worst = 0.0;
    while (checked < 30) {
      auto [logits, target] = random_instance(rng, 6, 4, 3);
      const Matrix g = ctc_loss_backward(logits, target);
      std::vector<double> flat(logits.data(), logits.data() + logits.size());
      auto loss = [&](const std::vector<double>& v) {
        Matrix m = Eigen::Map<const Matrix>(v.data(), logits.rows(), logits.cols());
        return ctc_loss(m, target);
      };
      const std::size_t i = rng.below(flat.size());
      worst = std::max(worst, mt::rel_err(g.data()[i], mt::central_difference(loss, flat, i, 1e-5)));
      ++checked;
    }
    CHECK(worst <= 1e-6);
  }

  TEST_CASE("long sequences stay finite") {
    Rng rng(9);
    Matrix logits(400, kNumClasses);
    for (Eigen::Index i = 0; i < logits.size(); ++i) logits(i) = 10.0 * rng.normal();
    const LabelSequence target = encode_text("navigate to my home");
    const CtcLossGrad r = ctc_loss_and_grad(logits, target);
    CHECK(std::isfinite(r.loss));
    CHECK(r.grad.allFinite());
  }

  TEST_CASE("greedy decoding collapses repeats and drops blanks") {
    CHECK(greedy_decode(one_hot_logits({0, 1, 1, 0, 2})) == "ab");
    CHECK(greedy_decode(one_hot_logits({0, 0, 0})) == "");
    CHECK(greedy_decode(one_hot_logits({1, 0, 1})) == "aa");
    CHECK(greedy_decode(one_hot_logits({27, 27, 3})) == " c");
  }

  TEST_CASE("argmax ties go to the lowest index") {
    const Matrix zero = Matrix::Zero(4, kNumClasses);
    CHECK(best_path(zero) == std::vector<int>{0, 0, 0, 0});
    Matrix tie = Matrix::Zero(1, kNumClasses);
    tie(0, 3) = 1.0;
    tie(0, 7) = 1.0;
    CHECK(best_path(tie) == std::vector<int>{3});
  }
}
