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
#include "maskattack/ctc.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "maskattack/error.hpp"

namespace maskattack {
namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double log_add(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  const double hi = std::max(a, b);
  return hi + std::log1p(std::exp(std::min(a, b) - hi));
}

void check_target(const LogitsSequence& logits, const LabelSequence& target) {
  if (logits.rows() < 1 || logits.cols() < 2) {
    throw Error(ErrorCode::kShapeMismatch, "logits need at least one frame and one non-blank class");
  }
  if (!logits.allFinite()) throw Error(ErrorCode::kInvalidArgument, "non-finite logits");
  if (target.symbols.empty()) throw Error(ErrorCode::kInvalidArgument, "empty target");
  for (int s : target.symbols) {
    if (s < 1 || s >= logits.cols()) {
      throw Error(ErrorCode::kInvalidArgument, "target symbol " + std::to_string(s) + " outside vocabulary");
    }
  }
  const std::size_t need = min_frames(target.symbols);
  if (static_cast<std::size_t>(logits.rows()) < need) {
    throw Error(ErrorCode::kInfeasibleTarget, "target '" + target.text + "' needs " + std::to_string(need) +
                                                  " frames, logits have " + std::to_string(logits.rows()));
  }
}

// Blank-interleaved label sequence: blank, l1, blank, l2, ..., blank.
std::vector<int> extend(const std::vector<int>& symbols) {
  std::vector<int> ext(2 * symbols.size() + 1, kBlank);
  for (std::size_t i = 0; i < symbols.size(); ++i) ext[2 * i + 1] = symbols[i];
  return ext;
}

}  // namespace

int char_to_symbol(char c) {
  if (c >= 'a' && c <= 'z') return c - 'a' + 1;
  if (c == ' ') return kVocabularySize;
  throw Error(ErrorCode::kUnknownCharacter, std::string("'") + c + "' is not in the vocabulary");
}

char symbol_to_char(int symbol) {
  if (symbol >= 1 && symbol <= 26) return static_cast<char>('a' + symbol - 1);
  if (symbol == kVocabularySize) return ' ';
  throw Error(ErrorCode::kInvalidArgument, "symbol " + std::to_string(symbol) + " has no character");
}

LabelSequence encode_text(std::string_view text) {
  if (text.empty()) throw Error(ErrorCode::kInvalidArgument, "label sequences must be non-empty");
  LabelSequence out;
  out.text = std::string(text);
  out.symbols.reserve(text.size());
  for (char c : text) out.symbols.push_back(char_to_symbol(c));
  return out;
}

std::size_t min_frames(std::span<const int> symbols) {
  std::size_t need = symbols.size();
  for (std::size_t i = 1; i < symbols.size(); ++i) need += symbols[i] == symbols[i - 1] ? 1 : 0;
  return need;
}

Matrix log_softmax_rows(const Matrix& logits) {
  Matrix out(logits.rows(), logits.cols());
  for (Eigen::Index t = 0; t < logits.rows(); ++t) {
    const double hi = logits.row(t).maxCoeff();
    const double lse = hi + std::log((logits.row(t).array() - hi).exp().sum());
    out.row(t) = logits.row(t).array() - lse;
  }
  return out;
}

CtcLossGrad ctc_loss_and_grad(const LogitsSequence& logits, const LabelSequence& target) {
  check_target(logits, target);
  const Matrix logp = log_softmax_rows(logits);
  const std::vector<int> ext = extend(target.symbols);
  const auto frames = static_cast<std::size_t>(logits.rows());
  const std::size_t states = ext.size();

  auto can_skip = [&](std::size_t s) { return s >= 2 && ext[s] != kBlank && ext[s] != ext[s - 2]; };

  std::vector<double> alpha(frames * states, kNegInf);
  alpha[0] = logp(0, ext[0]);
  alpha[1] = logp(0, ext[1]);
  for (std::size_t t = 1; t < frames; ++t) {
    const double* prev = &alpha[(t - 1) * states];
    double* cur = &alpha[t * states];
    for (std::size_t s = 0; s < states; ++s) {
      double a = prev[s];
      if (s >= 1) a = log_add(a, prev[s - 1]);
      if (can_skip(s)) a = log_add(a, prev[s - 2]);
      if (a != kNegInf) cur[s] = a + logp(static_cast<Eigen::Index>(t), ext[s]);
    }
  }
  const double* last = &alpha[(frames - 1) * states];
  const double log_prob = log_add(last[states - 1], last[states - 2]);
  if (!std::isfinite(log_prob)) throw Error(ErrorCode::kInfeasibleTarget, "no alignment has mass");

  // beta excludes the emission at its own frame, so alpha * beta / P is the
  // state posterior directly.
  std::vector<double> beta(frames * states, kNegInf);
  beta[(frames - 1) * states + states - 1] = 0.0;
  beta[(frames - 1) * states + states - 2] = 0.0;
  for (std::size_t t = frames - 1; t-- > 0;) {
    const double* next = &beta[(t + 1) * states];
    double* cur = &beta[t * states];
    const auto tn = static_cast<Eigen::Index>(t + 1);
    for (std::size_t s = 0; s < states; ++s) {
      double b = next[s] == kNegInf ? kNegInf : next[s] + logp(tn, ext[s]);
      if (s + 1 < states && next[s + 1] != kNegInf) b = log_add(b, next[s + 1] + logp(tn, ext[s + 1]));
      if (s + 2 < states && can_skip(s + 2) && next[s + 2] != kNegInf) {
        b = log_add(b, next[s + 2] + logp(tn, ext[s + 2]));
      }
      cur[s] = b;
    }
  }

  CtcLossGrad out;
  out.loss = -log_prob;
  out.grad = logp.array().exp().matrix();
  for (std::size_t t = 0; t < frames; ++t) {
    for (std::size_t s = 0; s < states; ++s) {
      const double lg = alpha[t * states + s] + beta[t * states + s];
      if (lg == kNegInf) continue;
      out.grad(static_cast<Eigen::Index>(t), ext[s]) -= std::exp(lg - log_prob);
    }
  }
  return out;
}

double ctc_loss(const LogitsSequence& logits, const LabelSequence& target) {
  check_target(logits, target);
  const Matrix logp = log_softmax_rows(logits);
  const std::vector<int> ext = extend(target.symbols);
  const std::size_t states = ext.size();
  std::vector<double> prev(states, kNegInf);
  std::vector<double> cur(states, kNegInf);
  prev[0] = logp(0, ext[0]);
  prev[1] = logp(0, ext[1]);
  for (Eigen::Index t = 1; t < logits.rows(); ++t) {
    for (std::size_t s = 0; s < states; ++s) {
      double a = prev[s];
      if (s >= 1) a = log_add(a, prev[s - 1]);
      if (s >= 2 && ext[s] != kBlank && ext[s] != ext[s - 2]) a = log_add(a, prev[s - 2]);
      cur[s] = a == kNegInf ? kNegInf : a + logp(t, ext[s]);
    }
    std::swap(prev, cur);
  }
  const double log_prob = log_add(prev[states - 1], prev[states - 2]);
  if (!std::isfinite(log_prob)) throw Error(ErrorCode::kInfeasibleTarget, "no alignment has mass");
  return -log_prob;
}

Matrix ctc_loss_backward(const LogitsSequence& logits, const LabelSequence& target) {
  return ctc_loss_and_grad(logits, target).grad;
}

std::vector<int> best_path(const LogitsSequence& logits) {
  std::vector<int> path(static_cast<std::size_t>(logits.rows()));
  for (Eigen::Index t = 0; t < logits.rows(); ++t) {
    int best = 0;
    for (Eigen::Index k = 1; k < logits.cols(); ++k) {
      if (logits(t, k) > logits(t, best)) best = static_cast<int>(k);
    }
    path[static_cast<std::size_t>(t)] = best;
  }
  return path;
}

std::string greedy_decode(const LogitsSequence& logits) {
  std::string text;
  int previous = -1;
  for (int symbol : best_path(logits)) {
    if (symbol != previous && symbol != kBlank) text.push_back(symbol_to_char(symbol));
    previous = symbol;
  }
  return text;
}

double brute_force_nll(const LogitsSequence& logits, const LabelSequence& target) {
  const auto frames = static_cast<std::size_t>(logits.rows());
  const auto classes = static_cast<std::size_t>(logits.cols());
  double paths = 1.0;
  for (std::size_t t = 0; t < frames; ++t) paths *= static_cast<double>(classes);
  if (paths > 1e7) {
    throw Error(ErrorCode::kTooLargeToEnumerate, std::to_string(classes) + "^" + std::to_string(frames) +
                                                     " paths exceeds 10^7");
  }
  const Matrix prob = log_softmax_rows(logits).array().exp().matrix();
  const auto total = static_cast<std::size_t>(paths);

  std::vector<int> path(frames, 0);
  std::vector<int> collapsed;
  collapsed.reserve(frames);
  double sum = 0.0;
  for (std::size_t index = 0; index < total; ++index) {
    std::size_t rest = index;
    for (std::size_t t = 0; t < frames; ++t) {
      path[t] = static_cast<int>(rest % classes);
      rest /= classes;
    }
    collapsed.clear();
    int previous = -1;
    for (int symbol : path) {
      if (symbol != previous && symbol != kBlank) collapsed.push_back(symbol);
      previous = symbol;
    }
    if (collapsed != target.symbols) continue;
    double p = 1.0;
    for (std::size_t t = 0; t < frames; ++t) p *= prob(static_cast<Eigen::Index>(t), path[t]);
    sum += p;
  }
  if (sum == 0.0) throw Error(ErrorCode::kInfeasibleTarget, "no path collapses to the target");
  return -std::log(sum);
}

}  // namespace maskattack
