#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string_view>
#include <vector>

namespace glance {

// Dense row-major matrix of doubles.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> values);
  Matrix(std::initializer_list<std::initializer_list<double>> rows);

  static Matrix identity(std::size_t n);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

Matrix matmul(const Matrix& a, const Matrix& b);
// aᵀ · b
Matrix matmul_tn(const Matrix& a, const Matrix& b);
// a · bᵀ
Matrix matmul_nt(const Matrix& a, const Matrix& b);

Matrix transpose(const Matrix& a);
Matrix hadamard(const Matrix& a, const Matrix& b);
void add_row_vector(Matrix& m, std::span<const double> v);
std::vector<double> column_sums(const Matrix& m);

Matrix select_rows(const Matrix& m, std::span<const std::size_t> rows);
Matrix hconcat(const Matrix& a, const Matrix& b);

// Throws DivergenceError naming `what` if any entry is NaN or infinite.
void require_finite(const Matrix& m, std::string_view what);
void require_finite(std::span<const double> v, std::string_view what);

std::size_t argmax(std::span<const double> v);

}  // namespace glance
