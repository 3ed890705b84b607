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
#include "maskattack/fft.hpp"

#include <cmath>
#include <numbers>
#include <utility>

#include "maskattack/error.hpp"

namespace maskattack {

bool is_power_of_two(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

FftPlan::FftPlan(std::size_t size) : size_(size), bit_reverse_(size), twiddles_(size / 2) {
  if (!is_power_of_two(size)) {
    throw Error(ErrorCode::kInvalidArgument, "FFT size must be a power of two");
  }
  std::size_t bits = 0;
  while ((std::size_t{1} << bits) < size) ++bits;
  for (std::size_t i = 0; i < size; ++i) {
    std::size_t r = 0;
    for (std::size_t b = 0; b < bits; ++b) r |= ((i >> b) & 1U) << (bits - 1 - b);
    bit_reverse_[i] = r;
  }
  for (std::size_t k = 0; k < size / 2; ++k) {
    const double angle = -2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(size);
    twiddles_[k] = {std::cos(angle), std::sin(angle)};
  }
}

void FftPlan::forward(std::span<std::complex<double>> data) const {
  if (data.size() != size_) throw Error(ErrorCode::kShapeMismatch, "FFT input has wrong length");
  for (std::size_t i = 0; i < size_; ++i) {
    if (i < bit_reverse_[i]) std::swap(data[i], data[bit_reverse_[i]]);
  }
  for (std::size_t len = 2; len <= size_; len <<= 1) {
    const std::size_t half = len / 2;
    const std::size_t stride = size_ / len;
    for (std::size_t start = 0; start < size_; start += len) {
      for (std::size_t j = 0; j < half; ++j) {
        const std::complex<double> w = twiddles_[j * stride];
        const std::complex<double> v = data[start + j + half];
        // Plain product; std::complex operator* adds NaN/Inf recovery we do not need.
        const std::complex<double> t(w.real() * v.real() - w.imag() * v.imag(),
                                     w.real() * v.imag() + w.imag() * v.real());
        data[start + j + half] = data[start + j] - t;
        data[start + j] += t;
      }
    }
  }
}

}  // namespace maskattack
