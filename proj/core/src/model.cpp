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
#include "maskattack/model.hpp"

#include <cmath>
#include <numeric>

#include "maskattack/error.hpp"
#include "maskattack/random.hpp"

namespace maskattack {
namespace {

using ConstMap = Eigen::Map<const Matrix>;
using ConstRowMap = Eigen::Map<const Eigen::RowVectorXd>;

ConstMap as_matrix(const Tensor& t, Eigen::Index rows, Eigen::Index cols) {
  return ConstMap(t.data.data(), rows, cols);
}

ConstRowMap as_row(const Tensor& t) {
  return ConstRowMap(t.data.data(), static_cast<Eigen::Index>(t.data.size()));
}

// cols(t, k*C + c) = x(t + k - K/2, c), zero outside [0, T).
Matrix im2col(const Matrix& x, int kernel) {
  const Eigen::Index frames = x.rows();
  const Eigen::Index channels = x.cols();
  const int half = kernel / 2;
  Matrix cols = Matrix::Zero(frames, channels * kernel);
  for (Eigen::Index t = 0; t < frames; ++t) {
    for (int k = 0; k < kernel; ++k) {
      const Eigen::Index src = t + k - half;
      if (src < 0 || src >= frames) continue;
      cols.block(t, k * channels, 1, channels) = x.row(src);
    }
  }
  return cols;
}

Matrix col2im(const Matrix& cols, int kernel, Eigen::Index channels) {
  const Eigen::Index frames = cols.rows();
  const int half = kernel / 2;
  Matrix x = Matrix::Zero(frames, channels);
  for (Eigen::Index t = 0; t < frames; ++t) {
    for (int k = 0; k < kernel; ++k) {
      const Eigen::Index dst = t + k - half;
      if (dst < 0 || dst >= frames) continue;
      x.row(dst) += cols.block(t, k * channels, 1, channels);
    }
  }
  return x;
}

Matrix relu_mask(const Matrix& grad, const Matrix& pre) {
  return (pre.array() > 0.0).select(grad, 0.0);
}

void store(Tensor& t, const Matrix& m) {
  Eigen::Map<Matrix>(t.data.data(), m.rows(), m.cols()) = m;
}

void store(Tensor& t, const Eigen::RowVectorXd& v) {
  Eigen::Map<Eigen::RowVectorXd>(t.data.data(), v.size()) = v;
}

}  // namespace

const Tensor& ModelCheckpoint::param(std::string_view name) const {
  for (const auto& t : params) {
    if (t.name == name) return t;
  }
  throw Error(ErrorCode::kCorruptCheckpoint, "missing tensor " + std::string(name));
}

Tensor& ModelCheckpoint::param(std::string_view name) {
  return const_cast<Tensor&>(std::as_const(*this).param(name));
}

std::vector<Tensor> make_parameters(const ModelArch& arch) {
  auto tensor = [](std::string name, std::vector<int> shape, bool trainable) {
    const auto n = std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                                   [](std::size_t a, int b) { return a * static_cast<std::size_t>(b); });
    return Tensor{std::move(name), std::move(shape), std::vector<double>(n, 0.0), trainable};
  };
  return {
      tensor("norm.shift", {arch.n_mels}, false),
      tensor("norm.scale", {arch.n_mels}, false),
      tensor("conv1.weight", {arch.kernel, arch.n_mels, arch.hidden1}, true),
      tensor("conv1.bias", {arch.hidden1}, true),
      tensor("conv2.weight", {arch.kernel, arch.hidden1, arch.hidden2}, true),
      tensor("conv2.bias", {arch.hidden2}, true),
      tensor("head.weight", {arch.hidden2, arch.classes}, true),
      tensor("head.bias", {arch.classes}, true),
  };
}

ModelCheckpoint init_checkpoint(const ModelArch& arch, const FeatureConfig& features, std::uint64_t seed) {
  ModelCheckpoint ckpt;
  ckpt.arch = arch;
  ckpt.features = features;
  ckpt.params = make_parameters(arch);
  std::fill(ckpt.param("norm.scale").data.begin(), ckpt.param("norm.scale").data.end(), 1.0);
  Rng rng(seed);
  for (auto& t : ckpt.params) {
    if (!t.trainable || t.shape.size() < 2) continue;
    // fan_in = every dimension but the output one.
    int fan_in = 1;
    for (std::size_t d = 0; d + 1 < t.shape.size(); ++d) fan_in *= t.shape[d];
    const double std_dev = std::sqrt(2.0 / fan_in);
    for (double& v : t.data) v = std_dev * rng.normal();
  }
  return ckpt;
}

void validate(const ModelCheckpoint& ckpt) {
  validate(ckpt.features);
  if (ckpt.vocabulary != kAlphabet) throw Error(ErrorCode::kVocabularyMismatch, "unexpected vocabulary");
  if (ckpt.arch.classes != kNumClasses) throw Error(ErrorCode::kVocabularyMismatch, "class count is not 28");
  if (ckpt.arch.n_mels != ckpt.features.n_mels) {
    throw Error(ErrorCode::kCorruptCheckpoint, "architecture and feature config disagree on n_mels");
  }
  if (ckpt.arch.kernel <= 0 || ckpt.arch.kernel % 2 == 0) {
    throw Error(ErrorCode::kCorruptCheckpoint, "kernel must be odd and positive");
  }
  const auto expected = make_parameters(ckpt.arch);
  if (expected.size() != ckpt.params.size()) throw Error(ErrorCode::kCorruptCheckpoint, "wrong tensor count");
  for (std::size_t i = 0; i < expected.size(); ++i) {
    const auto& want = expected[i];
    const auto& have = ckpt.params[i];
    if (want.name != have.name || want.shape != have.shape || want.trainable != have.trainable ||
        want.data.size() != have.data.size()) {
      throw Error(ErrorCode::kCorruptCheckpoint, "tensor " + have.name + " does not match the architecture");
    }
  }
}

AcousticModel::AcousticModel(const ModelCheckpoint& ckpt) : ckpt_(&ckpt), front_(ckpt.features) {
  validate(ckpt);
}

ForwardTrace AcousticModel::forward(const AudioClip& clip) const {
  SpectralAnalysis spectral = front_.analyze(clip);
  ForwardTrace trace = forward_features(front_.logmel(spectral.mel));
  trace.spectral = std::move(spectral);
  return trace;
}

ForwardTrace AcousticModel::forward_features(const Matrix& features) const {
  const ModelArch& a = ckpt_->arch;
  if (features.cols() != a.n_mels || features.rows() < 1) {
    throw Error(ErrorCode::kShapeMismatch, "features must be T x n_mels with T >= 1");
  }
  ForwardTrace tr;
  tr.features = features;
  tr.input = ((features.rowwise() - as_row(ckpt_->param("norm.shift"))).array().rowwise() *
              as_row(ckpt_->param("norm.scale")).array())
                 .matrix();

  tr.cols1 = im2col(tr.input, a.kernel);
  tr.pre1 = tr.cols1 * as_matrix(ckpt_->param("conv1.weight"), a.kernel * a.n_mels, a.hidden1);
  tr.pre1.rowwise() += as_row(ckpt_->param("conv1.bias"));
  tr.hidden1 = tr.pre1.cwiseMax(0.0);

  tr.cols2 = im2col(tr.hidden1, a.kernel);
  tr.pre2 = tr.cols2 * as_matrix(ckpt_->param("conv2.weight"), a.kernel * a.hidden1, a.hidden2);
  tr.pre2.rowwise() += as_row(ckpt_->param("conv2.bias"));
  tr.hidden2 = tr.pre2.cwiseMax(0.0);

  tr.logits = tr.hidden2 * as_matrix(ckpt_->param("head.weight"), a.hidden2, a.classes);
  tr.logits.rowwise() += as_row(ckpt_->param("head.bias"));
  return tr;
}

namespace {

void check_grad_shape(const ForwardTrace& trace, const Matrix& grad_logits) {
  if (grad_logits.rows() != trace.logits.rows() || grad_logits.cols() != trace.logits.cols()) {
    throw Error(ErrorCode::kShapeMismatch, "grad_logits is " + std::to_string(grad_logits.rows()) + "x" +
                                               std::to_string(grad_logits.cols()) + ", logits are " +
                                               std::to_string(trace.logits.rows()) + "x" +
                                               std::to_string(trace.logits.cols()));
  }
}

}  // namespace

Matrix AcousticModel::backward_features(const ForwardTrace& trace, const Matrix& grad_logits) const {
  check_grad_shape(trace, grad_logits);
  const ModelArch& a = ckpt_->arch;
  const Matrix d_hidden2 =
      grad_logits * as_matrix(ckpt_->param("head.weight"), a.hidden2, a.classes).transpose();
  const Matrix d_pre2 = relu_mask(d_hidden2, trace.pre2);
  const Matrix d_hidden1 = col2im(
      d_pre2 * as_matrix(ckpt_->param("conv2.weight"), a.kernel * a.hidden1, a.hidden2).transpose(), a.kernel,
      a.hidden1);
  const Matrix d_pre1 = relu_mask(d_hidden1, trace.pre1);
  const Matrix d_input = col2im(
      d_pre1 * as_matrix(ckpt_->param("conv1.weight"), a.kernel * a.n_mels, a.hidden1).transpose(), a.kernel,
      a.n_mels);
  return (d_input.array().rowwise() * as_row(ckpt_->param("norm.scale")).array()).matrix();
}

Matrix AcousticModel::backward_mel(const ForwardTrace& trace, const Matrix& grad_logits) const {
  if (!trace.spectral) throw Error(ErrorCode::kInvalidArgument, "trace has no spectral analysis");
  return front_.logmel_backward(trace.spectral->mel, backward_features(trace, grad_logits));
}

std::vector<double> AcousticModel::backward_input(const ForwardTrace& trace, const Matrix& grad_logits) const {
  const Matrix grad_mel = backward_mel(trace, grad_logits);
  return front_.mel_backward(*trace.spectral, grad_mel);
}

std::vector<Tensor> AcousticModel::backward_params(const ForwardTrace& trace, const Matrix& grad_logits) const {
  check_grad_shape(trace, grad_logits);
  const ModelArch& a = ckpt_->arch;
  std::vector<Tensor> grads = make_parameters(a);
  auto grad = [&](std::string_view name) -> Tensor& {
    for (auto& t : grads) {
      if (t.name == name) return t;
    }
    throw Error(ErrorCode::kCorruptCheckpoint, "missing tensor");
  };

  store(grad("head.weight"), Matrix(trace.hidden2.transpose() * grad_logits));
  store(grad("head.bias"), Eigen::RowVectorXd(grad_logits.colwise().sum()));

  const Matrix d_hidden2 =
      grad_logits * as_matrix(ckpt_->param("head.weight"), a.hidden2, a.classes).transpose();
  const Matrix d_pre2 = relu_mask(d_hidden2, trace.pre2);
  store(grad("conv2.weight"), Matrix(trace.cols2.transpose() * d_pre2));
  store(grad("conv2.bias"), Eigen::RowVectorXd(d_pre2.colwise().sum()));

  const Matrix d_hidden1 = col2im(
      d_pre2 * as_matrix(ckpt_->param("conv2.weight"), a.kernel * a.hidden1, a.hidden2).transpose(), a.kernel,
      a.hidden1);
  const Matrix d_pre1 = relu_mask(d_hidden1, trace.pre1);
  store(grad("conv1.weight"), Matrix(trace.cols1.transpose() * d_pre1));
  store(grad("conv1.bias"), Eigen::RowVectorXd(d_pre1.colwise().sum()));
  // norm.* are frozen: their gradients stay exactly zero.
  return grads;
}

LogitsSequence model_forward(const ModelCheckpoint& ckpt, const AudioClip& clip) {
  return AcousticModel(ckpt).logits(clip);
}

std::vector<double> model_backward_input(const ModelCheckpoint& ckpt, const AudioClip& clip,
                                         const Matrix& grad_logits) {
  const AcousticModel model(ckpt);
  return model.backward_input(model.forward(clip), grad_logits);
}

std::vector<Tensor> model_backward_params(const ModelCheckpoint& ckpt, const AudioClip& clip,
                                          const Matrix& grad_logits) {
  const AcousticModel model(ckpt);
  return model.backward_params(model.forward(clip), grad_logits);
}

}  // namespace maskattack
