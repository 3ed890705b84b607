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
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "maskattack/types.hpp"

namespace maskattack {

// Class layout of every logits row: index 0 is the CTC blank, indices 1..27
// are 'a'..'z' followed by space.
inline constexpr int kBlank = 0;
inline constexpr int kVocabularySize = 27;
inline constexpr int kNumClasses = kVocabularySize + 1;

/// T x (V+1) real logits, blank in column 0.
using LogitsSequence = Matrix;

struct LabelSequence {
  std::vector<int> symbols;  // each in [1, V]
  std::string text;

  bool operator==(const LabelSequence&) const = default;
};

int char_to_symbol(char c);
char symbol_to_char(int symbol);

/// Maps non-empty text onto the 27-symbol vocabulary; throws kUnknownCharacter.
LabelSequence encode_text(std::string_view text);

/// Frames needed for any alignment: |target| plus one per adjacent repeat.
std::size_t min_frames(std::span<const int> symbols);

Matrix log_softmax_rows(const Matrix& logits);

/// -log P(target | logits) by the log-space forward recursion.
double ctc_loss(const LogitsSequence& logits, const LabelSequence& target);

struct CtcLossGrad {
  double loss = 0.0;
  Matrix grad;  // d loss / d logits, same shape as logits
};

/// Loss and gradient in one forward-backward pass.
CtcLossGrad ctc_loss_and_grad(const LogitsSequence& logits, const LabelSequence& target);

Matrix ctc_loss_backward(const LogitsSequence& logits, const LabelSequence& target);

/// Per-frame argmax, ties resolved toward the lower index.
std::vector<int> best_path(const LogitsSequence& logits);

/// Best path with repeats collapsed and blanks removed.
std::string greedy_decode(const LogitsSequence& logits);

/// Exhaustive sum over all (V+1)^T frame paths. Refuses more than 10^7 paths.
double brute_force_nll(const LogitsSequence& logits, const LabelSequence& target);

}  // namespace maskattack
