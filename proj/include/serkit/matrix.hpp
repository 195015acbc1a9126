#pragma once

#include <cstddef>
#include <vector>

#include "serkit/errors.hpp"

namespace ser {

// Row-major 2-D float buffer for feature frames (rows = time, cols = bins).
// Deliberately dumb: the autodiff Tensor is a separate type and the two only
// meet where features are copied into a training batch.
class Matrix {
 public:
  Matrix() = default;
  Matrix(int rows, int cols, float fill = 0.0f)
      : rows_(rows), cols_(cols), data_(static_cast<size_t>(rows) * cols, fill) {
    if (rows < 0 || cols < 0) {
      throw InputError("Matrix: negative dimension");
    }
  }

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  size_t size() const { return data_.size(); }

  float& at(int r, int c) { return data_[static_cast<size_t>(r) * cols_ + c]; }
  float at(int r, int c) const { return data_[static_cast<size_t>(r) * cols_ + c]; }

  float* row(int r) { return data_.data() + static_cast<size_t>(r) * cols_; }
  const float* row(int r) const { return data_.data() + static_cast<size_t>(r) * cols_; }

  std::vector<float>& data() { return data_; }
  const std::vector<float>& data() const { return data_; }

 private:
  int rows_ = 0;
  int cols_ = 0;
  std::vector<float> data_;
};

}  // namespace ser
