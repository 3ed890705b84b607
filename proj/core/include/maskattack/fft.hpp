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

#include <complex>
#include <cstddef>
#include <span>
#include <vector>

namespace maskattack {

/// Iterative radix-2 decimation-in-time FFT for a fixed power-of-two size.
/// Computes X_k = sum_n x_n exp(-2 pi i k n / N), unnormalized.
class FftPlan {
 public:
  explicit FftPlan(std::size_t size);

  std::size_t size() const noexcept { return size_; }
  void forward(std::span<std::complex<double>> data) const;

 private:
  std::size_t size_;
  std::vector<std::size_t> bit_reverse_;
  std::vector<std::complex<double>> twiddles_;
};

bool is_power_of_two(std::size_t n);

}  // namespace maskattack
