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

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "maskattack/audio.hpp"
#include "maskattack/ctc.hpp"
#include "maskattack/features.hpp"
#include "maskattack/synth.hpp"
#include "maskattack/types.hpp"

namespace maskattack {

/// Layer widths of the acoustic model:
///   logmel (T x n_mels) -> per-bin standardization (frozen)
///   -> conv1d(kernel, n_mels -> hidden1, ReLU) -> conv1d(kernel, hidden1 -> hidden2, ReLU)
///   -> per-frame affine (hidden2 -> classes).
/// Convolutions use zero "same" padding so the frame count is preserved.
struct ModelArch {
  int n_mels = 32;
  int kernel = 5;
  int hidden1 = 48;
  int hidden2 = 48;
  int classes = kNumClasses;

  bool operator==(const ModelArch&) const = default;
};

/// A named parameter tensor. Data are row-major over `shape`.
struct Tensor {
  std::string name;
  std::vector<int> shape;
  std::vector<double> data;
  bool trainable = true;

  bool operator==(const Tensor&) const = default;
};

struct TrainingMeta {
  std::uint64_t seed = 0;
  int steps = 0;
  double final_loss = 0.0;
  std::string optimizer;

  bool operator==(const TrainingMeta&) const = default;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct ModelCheckpoint {
  ModelArch arch;
  FeatureConfig features;
  std::string vocabulary{kAlphabet};
  std::vector<Tensor> params;
  TrainingMeta meta;

  bool operator==(const ModelCheckpoint&) const = default;

  const Tensor& param(std::string_view name) const;
  Tensor& param(std::string_view name);
};

/// Tensors in canonical order, zero-filled.
std::vector<Tensor> make_parameters(const ModelArch& arch);

/// Standardization set to identity and every trainable tensor He-initialized
/// from Rng(seed); biases start at zero.
ModelCheckpoint init_checkpoint(const ModelArch& arch, const FeatureConfig& features, std::uint64_t seed);

/// Shape and vocabulary consistency; throws kCorruptCheckpoint.
void validate(const ModelCheckpoint& ckpt);

/// Activations of one forward pass, retained for the backward passes.
struct ForwardTrace {
  std::optional<SpectralAnalysis> spectral;  // absent when run from precomputed features
  Matrix features;                           // logmel, T x n_mels
  Matrix input;                              // standardized features
  Matrix cols1, pre1, hidden1;
  Matrix cols2, pre2, hidden2;
  Matrix logits;                             // T x classes
};

/// Stateless evaluator bound to one checkpoint. The checkpoint must outlive it.
class AcousticModel {
 public:
  explicit AcousticModel(const ModelCheckpoint& ckpt);
  /// The model keeps a reference to the checkpoint, so it must outlive the model.
  explicit AcousticModel(ModelCheckpoint&&) = delete;

  const ModelCheckpoint& checkpoint() const noexcept { return *ckpt_; }
  const MelFrontEnd& front_end() const noexcept { return front_; }

  ForwardTrace forward(const AudioClip& clip) const;
  ForwardTrace forward_features(const Matrix& features) const;
  LogitsSequence logits(const AudioClip& clip) const { return forward(clip).logits; }
  std::string transcribe(const AudioClip& clip) const { return greedy_decode(logits(clip)); }

  /// d(scalar)/d(logmel features) given d(scalar)/d(logits).
  Matrix backward_features(const ForwardTrace& trace, const Matrix& grad_logits) const;
  /// d(scalar)/d(mel power) given d(scalar)/d(logits).
  Matrix backward_mel(const ForwardTrace& trace, const Matrix& grad_logits) const;
  /// d(scalar)/d(samples); needs a trace produced by forward(clip).
  std::vector<double> backward_input(const ForwardTrace& trace, const Matrix& grad_logits) const;
  /// Gradients shaped like the checkpoint's tensors. Frozen tensors get zeros.
  std::vector<Tensor> backward_params(const ForwardTrace& trace, const Matrix& grad_logits) const;

 private:
  const ModelCheckpoint* ckpt_;
  MelFrontEnd front_;
};

LogitsSequence model_forward(const ModelCheckpoint& ckpt, const AudioClip& clip);
std::vector<double> model_backward_input(const ModelCheckpoint& ckpt, const AudioClip& clip,
                                         const Matrix& grad_logits);
std::vector<Tensor> model_backward_params(const ModelCheckpoint& ckpt, const AudioClip& clip,
                                          const Matrix& grad_logits);

// Checkpoint file layout (all integers little-endian):
//   bytes 0..7    magic "MSKACKPT"
//   u32           format version (kCheckpointVersion)
//   u32           header length H
//   H bytes       UTF-8 JSON header: arch, features, vocabulary, meta, and the
//                 tensor table [{name, shape, trainable}] in storage order
//   tensor data   IEEE-754 binary64, little-endian, concatenated in table order
//   u64           FNV-1a 64 of every preceding byte
std::string serialize_checkpoint(const ModelCheckpoint& ckpt);
ModelCheckpoint deserialize_checkpoint(const std::string& bytes);
void save_checkpoint(const ModelCheckpoint& ckpt, const std::filesystem::path& path);
ModelCheckpoint load_checkpoint(const std::filesystem::path& path);

/// FNV-1a 64 of the serialized checkpoint, as 16 hex digits.
std::string checkpoint_hash(const ModelCheckpoint& ckpt);
std::uint64_t fnv1a64(std::string_view bytes);

struct TrainConfig {
  double learning_rate = 1e-3;
  std::string optimizer = "adam";  // Adam, beta1 0.9, beta2 0.999, eps 1e-8
  int steps = 2000;
  int batch_size = 8;
  int augmentations = 8;
  /// A drawn example gets additive Gaussian noise with probability
  /// noise_fraction and sigma ~ U(0, noise_sigma_max).
  double noise_sigma_max = 0.02;
  double noise_fraction = 0.5;
  /// With probability interference_fraction another command is mixed in at
  /// gain ~ U(0, interference_gain_max); the label stays that of the example.
  double interference_fraction = 0.3;
  double interference_gain_max = 0.3;
  std::uint64_t seed = 1;
  int jobs = 1;  // threads for per-example gradients; reduction order is fixed
  ModelArch arch;
  FeatureConfig features;

  bool operator==(const TrainConfig&) const = default;
};

void validate(const TrainConfig& cfg);

struct TrainResult {
  ModelCheckpoint checkpoint;
  std::vector<double> curve;  // mean batch loss per step, step 0 first
  int clean_matches = 0;
  int clean_total = 0;
  bool converged = false;
};

/// Minimizes the mean CTC loss with Adam over shuffled mini-batches. Items
/// flagged clean are the exact-match gate for `converged`.
TrainResult train(const std::vector<LabeledClip>& dataset, const TrainConfig& cfg);

void to_json(nlohmann::json& j, const TrainConfig& cfg);
void from_json(const nlohmann::json& j, TrainConfig& cfg);
void to_json(nlohmann::json& j, const ModelArch& arch);
void from_json(const nlohmann::json& j, ModelArch& arch);

}  // namespace maskattack
