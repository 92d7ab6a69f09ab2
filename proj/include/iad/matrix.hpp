#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "iad/errors.hpp"

namespace iad {

using Vector = std::vector<double>;

// Dense row-major matrix of doubles. Everything downstream (features,
// activations, gradients) lives in these.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, Vector data);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& at(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double at(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const {
    return {data_.data() + r * cols_, cols_};
  }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  Vector& values() { return data_; }
  const Vector& values() const { return data_; }

  bool all_finite() const;

  bool operator==(const Matrix& other) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  Vector data_;
};

// Throws NumericError naming `what` if any entry is NaN/Inf.
void require_finite(std::span<const double> values, const std::string& what);
void require_finite(const Matrix& m, const std::string& what);

}  // namespace iad
