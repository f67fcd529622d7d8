#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "exarnn/errors.hpp"

namespace exarnn {

struct Shape {
  std::size_t rows{0};
  std::size_t cols{0};

  std::size_t size() const { return rows * cols; }
  friend bool operator==(const Shape&, const Shape&) = default;
};

inline std::string to_string(Shape s) {
  return std::to_string(s.rows) + "x" + std::to_string(s.cols);
}

// Dense row-major matrix of doubles. Column vectors are n x 1.
class Array {
 public:
  Array() = default;
  Array(std::size_t rows, std::size_t cols, double fill = 0.0)
      : shape_{rows, cols}, data_(rows * cols, fill) {}
  Array(std::size_t rows, std::size_t cols, std::vector<double> data)
      : shape_{rows, cols}, data_(std::move(data)) {
    if (data_.size() != shape_.size()) {
      throw DimensionError("array data length " + std::to_string(data_.size()) +
                           " does not match shape " + to_string(shape_));
    }
  }
  Array(std::initializer_list<std::initializer_list<double>> rows) {
    shape_.rows = rows.size();
    shape_.cols = rows.size() ? rows.begin()->size() : 0;
    data_.reserve(shape_.size());
    for (const auto& r : rows) {
      if (r.size() != shape_.cols) throw DimensionError("ragged array literal");
      data_.insert(data_.end(), r.begin(), r.end());
    }
  }

  static Array column(std::span<const double> v) {
    return Array(v.size(), 1, std::vector<double>(v.begin(), v.end()));
  }
  static Array scalar(double v) { return Array(1, 1, v); }
  static Array identity(std::size_t n) {
    Array a(n, n);
    for (std::size_t i = 0; i < n; ++i) a(i, i) = 1.0;
    return a;
  }

  Shape shape() const { return shape_; }
  std::size_t rows() const { return shape_.rows; }
  std::size_t cols() const { return shape_.cols; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * shape_.cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * shape_.cols + c]; }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  std::span<double> flat() { return data_; }
  std::span<const double> flat() const { return data_; }
  const std::vector<double>& data() const { return data_; }

  double item() const {
    if (data_.size() != 1) throw DimensionError("item() on " + to_string(shape_) + " array");
    return data_[0];
  }

  Array reshaped(std::size_t rows, std::size_t cols) const {
    if (rows * cols != data_.size()) {
      throw DimensionError("cannot reshape " + to_string(shape_) + " to " +
                           std::to_string(rows) + "x" + std::to_string(cols));
    }
    return Array(rows, cols, data_);
  }

  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

  bool all_finite() const {
    for (double v : data_) {
      if (!std::isfinite(v)) return false;
    }
    return true;
  }

  friend bool operator==(const Array&, const Array&) = default;

 private:
  Shape shape_{};
  std::vector<double> data_;
};

inline Array matmul(const Array& a, const Array& b) {
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul: inner dimensions differ (" + to_string(a.shape()) + " * " +
                         to_string(b.shape()) + ")");
  }
  Array out(a.rows(), b.cols());
  const std::size_t n = b.cols();
  for (std::size_t i = 0; i < a.rows(); ++i) {
    double* orow = &out(i, 0);
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      const double* brow = b.data().data() + k * n;
      for (std::size_t j = 0; j < n; ++j) orow[j] += aik * brow[j];
    }
  }
  return out;
}

inline Array transpose(const Array& a) {
  Array out(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) out(j, i) = a(i, j);
  return out;
}

inline std::ostream& operator<<(std::ostream& os, const Array& a) {
  os << '[';
  for (std::size_t i = 0; i < a.rows(); ++i) {
    os << (i ? ", [" : "[");
    for (std::size_t j = 0; j < a.cols(); ++j) os << (j ? ", " : "") << a(i, j);
    os << ']';
  }
  return os << ']';
}

}  // namespace exarnn
