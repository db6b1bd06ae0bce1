#include "glance/matrix.hpp"

#include <cmath>
#include <string>

#include "glance/errors.hpp"

namespace glance {

namespace {

void require_dims(bool ok, const char* op, const Matrix& a, const Matrix& b) {
  if (!ok) {
    throw ConfigError(std::string(op) + ": dimension mismatch " + std::to_string(a.rows()) + "x" +
                      std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                      std::to_string(b.cols()));
  }
}

}  // namespace

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> values)
    : rows_(rows), cols_(cols), data_(std::move(values)) {
  if (data_.size() != rows * cols) throw ConfigError("Matrix: value count does not match shape");
}

Matrix::Matrix(std::initializer_list<std::initializer_list<double>> rows) {
  rows_ = rows.size();
  cols_ = rows_ ? rows.begin()->size() : 0;
  data_.reserve(rows_ * cols_);
  for (const auto& r : rows) {
    if (r.size() != cols_) throw ConfigError("Matrix: ragged initializer");
    data_.insert(data_.end(), r.begin(), r.end());
  }
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  require_dims(a.cols() == b.rows(), "matmul", a, b);
  Matrix out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto orow = out.row(i);
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      const auto brow = b.row(k);
      for (std::size_t j = 0; j < b.cols(); ++j) orow[j] += aik * brow[j];
    }
  }
  return out;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
  require_dims(a.rows() == b.rows(), "matmul_tn", a, b);
  Matrix out(a.cols(), b.cols());
  for (std::size_t k = 0; k < a.rows(); ++k) {
    const auto arow = a.row(k);
    const auto brow = b.row(k);
    for (std::size_t i = 0; i < a.cols(); ++i) {
      const double aki = arow[i];
      if (aki == 0.0) continue;
      auto orow = out.row(i);
      for (std::size_t j = 0; j < b.cols(); ++j) orow[j] += aki * brow[j];
    }
  }
  return out;
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
  require_dims(a.cols() == b.cols(), "matmul_nt", a, b);
  Matrix out(a.rows(), b.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const auto arow = a.row(i);
    for (std::size_t j = 0; j < b.rows(); ++j) {
      const auto brow = b.row(j);
      double acc = 0.0;
      for (std::size_t k = 0; k < a.cols(); ++k) acc += arow[k] * brow[k];
      out(i, j) = acc;
    }
  }
  return out;
}

Matrix transpose(const Matrix& a) {
  Matrix out(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < a.cols(); ++j) out(j, i) = a(i, j);
  }
  return out;
}

Matrix hadamard(const Matrix& a, const Matrix& b) {
  require_dims(a.rows() == b.rows() && a.cols() == b.cols(), "hadamard", a, b);
  Matrix out = a;
  auto o = out.values();
  auto bv = b.values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] *= bv[i];
  return out;
}

void add_row_vector(Matrix& m, std::span<const double> v) {
  if (v.size() != m.cols()) throw ConfigError("add_row_vector: dimension mismatch");
  for (std::size_t i = 0; i < m.rows(); ++i) {
    auto r = m.row(i);
    for (std::size_t j = 0; j < v.size(); ++j) r[j] += v[j];
  }
}

std::vector<double> column_sums(const Matrix& m) {
  std::vector<double> out(m.cols(), 0.0);
  for (std::size_t i = 0; i < m.rows(); ++i) {
    const auto r = m.row(i);
    for (std::size_t j = 0; j < m.cols(); ++j) out[j] += r[j];
  }
  return out;
}

Matrix select_rows(const Matrix& m, std::span<const std::size_t> rows) {
  Matrix out(rows.size(), m.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto src = m.row(rows[i]);
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  return out;
}

Matrix hconcat(const Matrix& a, const Matrix& b) {
  require_dims(a.rows() == b.rows(), "hconcat", a, b);
  Matrix out(a.rows(), a.cols() + b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto o = out.row(i);
    const auto ar = a.row(i);
    const auto br = b.row(i);
    std::copy(ar.begin(), ar.end(), o.begin());
    std::copy(br.begin(), br.end(), o.begin() + static_cast<std::ptrdiff_t>(a.cols()));
  }
  return out;
}

void require_finite(std::span<const double> v, std::string_view what) {
  for (double x : v) {
    if (!std::isfinite(x)) throw DivergenceError("non-finite value in " + std::string(what));
  }
}

void require_finite(const Matrix& m, std::string_view what) { require_finite(m.values(), what); }

std::size_t argmax(std::span<const double> v) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i) {
    if (v[i] > v[best]) best = i;
  }
  return best;
}

}  // namespace glance
