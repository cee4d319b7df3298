// Copyright 2026 The nvfp4emu Authors
// SPDX-License-Identifier: Apache-2.0
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

#ifndef NVFP4EMU_TENSOR_HPP
#define NVFP4EMU_TENSOR_HPP

#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "nvfp4emu/error.hpp"

namespace nvfp4emu {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& shape) noexcept {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

inline std::string shape_string(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ", ";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

// Dense row-major float tensor.
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(Shape shape)
      : shape_(std::move(shape)), data_(shape_numel(shape_), 0.0f) {}

  Tensor(Shape shape, std::vector<float> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    if (data_.size() != shape_numel(shape_)) {
      throw Error(Errc::shape_mismatch,
                  "tensor data has " + std::to_string(data_.size()) +
                      " elements, shape " + shape_string(shape_) + " needs " +
                      std::to_string(shape_numel(shape_)));
    }
  }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t numel() const noexcept { return data_.size(); }

  // Length of the contiguous (blocked) dimension; 1 for rank-0 tensors.
  std::size_t last_dim() const noexcept { return shape_.empty() ? 1 : shape_.back(); }
  std::size_t rows() const noexcept {
    const std::size_t n = last_dim();
    return n == 0 ? 0 : numel() / n;
  }

  std::span<float> data() noexcept { return data_; }
  std::span<const float> data() const noexcept { return data_; }
  std::vector<float>& storage() noexcept { return data_; }
  const std::vector<float>& storage() const noexcept { return data_; }

  float& operator[](std::size_t i) noexcept { return data_[i]; }
  float operator[](std::size_t i) const noexcept { return data_[i]; }

  // 2-D access; only meaningful for rank-2 tensors.
  float& at(std::size_t r, std::size_t c) noexcept { return data_[r * shape_[1] + c]; }
  float at(std::size_t r, std::size_t c) const noexcept { return data_[r * shape_[1] + c]; }

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  Shape shape_;
  std::vector<float> data_;
};

inline void require_finite(std::span<const float> xs, const char* who) {
  for (float v : xs) {
    if (!std::isfinite(v)) {
      throw Error(Errc::invalid_input, std::string(who) + ": non-finite value");
    }
  }
}

inline Tensor transpose2d(const Tensor& m) {
  if (m.rank() != 2) throw Error(Errc::shape_mismatch, "transpose2d: rank != 2");
  const std::size_t r = m.shape()[0], c = m.shape()[1];
  Tensor t(Shape{c, r});
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) t.at(j, i) = m.at(i, j);
  return t;
}

// Mean squared difference accumulated in double.
inline double mse(std::span<const float> a, std::span<const float> b) {
  if (a.size() != b.size()) throw Error(Errc::shape_mismatch, "mse: size mismatch");
  if (a.empty()) return 0.0;
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    s += d * d;
  }
  return s / static_cast<double>(a.size());
}

inline double mean_square(std::span<const float> a) {
  if (a.empty()) return 0.0;
  double s = 0.0;
  for (float v : a) s += static_cast<double>(v) * v;
  return s / static_cast<double>(a.size());
}

}  // namespace nvfp4emu

#endif  // NVFP4EMU_TENSOR_HPP
