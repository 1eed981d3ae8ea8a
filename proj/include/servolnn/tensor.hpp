// Copyright (c) 2026 The servolnn Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "servolnn/error.hpp"

namespace servolnn {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

inline std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

/// Dense row-major array of doubles.
///
/// Rank 0 and rank 1 tensors are treated as 1x1 and n x 1 matrices by the
/// matrix accessors; every graph operation works on that matrix view.
class DenseTensor {
 public:
  DenseTensor() : shape_{1, 1}, data_(1, 0.0) {}

  explicit DenseTensor(Shape shape, double fill = 0.0)
      : shape_(std::move(shape)), data_(shape_size(shape_), fill) {}

  DenseTensor(Shape shape, std::vector<double> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    if (shape_size(shape_) != data_.size()) {
      throw ConfigError("tensor shape " + shape_string(shape_) +
                        " does not match " + std::to_string(data_.size()) +
                        " values");
    }
  }

  static DenseTensor matrix(std::size_t rows, std::size_t cols,
                            double fill = 0.0) {
    return DenseTensor(Shape{rows, cols}, fill);
  }

  static DenseTensor matrix(std::size_t rows, std::size_t cols,
                            std::initializer_list<double> values) {
    return DenseTensor(Shape{rows, cols}, std::vector<double>(values));
  }

  static DenseTensor scalar(double v) { return DenseTensor(Shape{1, 1}, v); }

  static DenseTensor column(std::span<const double> values) {
    return DenseTensor(Shape{values.size(), 1},
                       std::vector<double>(values.begin(), values.end()));
  }

  static DenseTensor row(std::span<const double> values) {
    return DenseTensor(Shape{1, values.size()},
                       std::vector<double>(values.begin(), values.end()));
  }

  const Shape& shape() const { return shape_; }
  std::size_t size() const { return data_.size(); }

  std::size_t rows() const { return shape_.empty() ? 1 : shape_[0]; }
  std::size_t cols() const {
    return shape_.size() < 2 ? 1 : size() / std::max<std::size_t>(rows(), 1);
  }

  double& operator()(std::size_t r, std::size_t c) {
    return data_[r * cols() + c];
  }
  double operator()(std::size_t r, std::size_t c) const {
    return data_[r * cols() + c];
  }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  double item() const {
    if (data_.size() != 1) {
      throw UsageError("item() on tensor of shape " + shape_string(shape_));
    }
    return data_[0];
  }

  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }
  std::vector<double>& storage() { return data_; }
  const std::vector<double>& storage() const { return data_; }

  /// Reshape in place without touching values; reallocates only on growth.
  void reset(const Shape& shape, double fill) {
    shape_ = shape;
    data_.assign(shape_size(shape_), fill);
  }

  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

  bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(),
                       [](double v) { return std::isfinite(v); });
  }

  friend bool operator==(const DenseTensor& a, const DenseTensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  Shape shape_;
  std::vector<double> data_;
};

}  // namespace servolnn
