#pragma once

#include <cassert>
#include <cstddef>
#include <span>
#include <vector>

namespace lsel {

using Vector = std::vector<double>;

// Dense row-major matrix. Small on purpose: every model in the toolkit is a
// handful of affine maps, so only the operations they need are provided.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) {
    assert(r < rows_ && c < cols_);
    return data_[r * cols_ + c];
  }
  double operator()(std::size_t r, std::size_t c) const {
    assert(r < rows_ && c < cols_);
    return data_[r * cols_ + c];
  }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::span<double> values() noexcept { return data_; }
  std::span<const double> values() const noexcept { return data_; }

  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

double dot(std::span<const double> a, std::span<const double> b);

double norm(std::span<const double> a);

// y = M x
Vector matvec(const Matrix& m, std::span<const double> x);

// y = M^T x
Vector matvec_transposed(const Matrix& m, std::span<const double> x);

// M += scale * u v^T
void add_outer(Matrix& m, std::span<const double> u, std::span<const double> v, double scale = 1.0);

}  // namespace lsel
