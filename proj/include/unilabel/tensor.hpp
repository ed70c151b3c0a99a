/*
 * Copyright (c) 2026 The unilabel Authors
 *
 * Licensed under the Apache License, Version 2.0;
 * You may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an 'AS IS' BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace unilabel {

using Shape = std::vector<std::size_t>;

/// Dense row-major array of doubles.
///
/// Rank 1 and rank 2 shapes are used throughout; a rank-1 tensor of length m
/// behaves as a 1 x m matrix wherever a matrix is expected. Tensors built
/// through the public constructors reject non-finite values.
class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<double> data);
  Tensor(std::initializer_list<std::size_t> shape, std::vector<double> data)
      : Tensor(Shape(shape), std::move(data)) {}

  static Tensor zeros(Shape shape);
  static Tensor filled(Shape shape, double value);
  static Tensor scalar(double value) { return filled({1, 1}, value); }
  /// Skips the finiteness check; for intermediate results only.
  static Tensor unchecked(Shape shape, std::vector<double> data);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t size() const noexcept { return data_.size(); }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t rows() const;
  std::size_t cols() const;
  bool empty() const noexcept { return data_.empty(); }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }
  std::vector<double>& storage() noexcept { return data_; }
  const std::vector<double>& storage() const noexcept { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }
  double& at(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
  double at(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }

  /// Value of a single-element tensor.
  double item() const;

  bool all_finite() const noexcept;
  bool operator==(const Tensor& other) const = default;

 private:
  Shape shape_;
  std::vector<double> data_;
};

std::size_t shape_numel(const Shape& shape) noexcept;
std::string shape_string(const Shape& shape);

}  // namespace unilabel
