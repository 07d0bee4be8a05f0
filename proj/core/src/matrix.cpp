#include "fl4s/matrix.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace fl4s {

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows * cols) {
    throw std::invalid_argument("Matrix: data length " +
                                std::to_string(data_.size()) +
                                " does not match shape " +
                                std::to_string(rows) + "x" +
                                std::to_string(cols));
  }
}

Matrix::Matrix(std::initializer_list<std::initializer_list<double>> rows)
    : rows_(rows.size()), cols_(rows.size() ? rows.begin()->size() : 0) {
  data_.reserve(rows_ * cols_);
  for (const auto& r : rows) {
    if (r.size() != cols_) {
      throw std::invalid_argument("Matrix: ragged initializer list");
    }
    data_.insert(data_.end(), r.begin(), r.end());
  }
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Matrix Matrix::row_vector(std::span<const double> values) {
  return Matrix(1, values.size(), std::vector<double>(values.begin(), values.end()));
}

Matrix Matrix::column_vector(std::span<const double> values) {
  return Matrix(values.size(), 1, std::vector<double>(values.begin(), values.end()));
}

void Matrix::fill(double value) { std::fill(data_.begin(), data_.end(), value); }

bool Matrix::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(),
                     [](double v) { return std::isfinite(v); });
}

std::string shape_of(const Matrix& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

namespace {

void require_shape(bool ok, const char* what, const Matrix& a, const Matrix& b) {
  if (!ok) {
    throw std::invalid_argument(std::string(what) + ": dimension mismatch " +
                                shape_of(a) + " vs " + shape_of(b));
  }
}

}  // namespace

void gemm_nn_acc(const Matrix& a, const Matrix& b, Matrix& out) {
  require_shape(a.cols() == b.rows(), "matmul", a, b);
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  if (out.rows() != m || out.cols() != n) {
    throw std::invalid_argument("matmul: output shape " + shape_of(out));
  }
  const double* __restrict pa = a.data().data();
  const double* __restrict pb = b.data().data();
  double* __restrict pc = out.data().data();
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = pc + i * n;
    for (std::size_t kk = 0; kk < k; ++kk) {
      const double s = pa[i * k + kk];
      if (s == 0.0) continue;
      const double* brow = pb + kk * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += s * brow[j];
    }
  }
}

void gemm_nt_acc(const Matrix& a, const Matrix& b, Matrix& out) {
  // out (m x n) += a (m x k) * b^T, b is n x k
  require_shape(a.cols() == b.cols(), "matmul(A, B^T)", a, b);
  const std::size_t m = a.rows(), k = a.cols(), n = b.rows();
  if (out.rows() != m || out.cols() != n) {
    throw std::invalid_argument("matmul(A, B^T): output shape " + shape_of(out));
  }
  const double* __restrict pa = a.data().data();
  const double* __restrict pb = b.data().data();
  double* __restrict pc = out.data().data();
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = pa + i * k;
    for (std::size_t j = 0; j < n; ++j) {
      const double* brow = pb + j * k;
      double acc = 0.0;
      for (std::size_t kk = 0; kk < k; ++kk) acc += arow[kk] * brow[kk];
      pc[i * n + j] += acc;
    }
  }
}

void gemm_tn_acc(const Matrix& a, const Matrix& b, Matrix& out) {
  // out (m x n) += a^T * b, a is k x m, b is k x n
  require_shape(a.rows() == b.rows(), "matmul(A^T, B)", a, b);
  const std::size_t k = a.rows(), m = a.cols(), n = b.cols();
  if (out.rows() != m || out.cols() != n) {
    throw std::invalid_argument("matmul(A^T, B): output shape " + shape_of(out));
  }
  const double* __restrict pa = a.data().data();
  const double* __restrict pb = b.data().data();
  double* __restrict pc = out.data().data();
  for (std::size_t kk = 0; kk < k; ++kk) {
    const double* brow = pb + kk * n;
    for (std::size_t i = 0; i < m; ++i) {
      const double s = pa[kk * m + i];
      if (s == 0.0) continue;
      double* crow = pc + i * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += s * brow[j];
    }
  }
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  require_shape(a.cols() == b.rows(), "matmul", a, b);
  Matrix out(a.rows(), b.cols());
  gemm_nn_acc(a, b, out);
  return out;
}

Matrix transpose(const Matrix& m) {
  Matrix t(m.cols(), m.rows());
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) t(j, i) = m(i, j);
  return t;
}

double frobenius_norm(const Matrix& m) {
  double acc = 0.0;
  for (double v : m.data()) acc += v * v;
  return std::sqrt(acc);
}

double squared_distance(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw std::invalid_argument("distance: length mismatch " +
                                std::to_string(a.size()) + " vs " +
                                std::to_string(b.size()));
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double diff = a[i] - b[i];
    acc += diff * diff;
  }
  return acc;
}

double euclidean_distance(std::span<const double> a, std::span<const double> b) {
  return std::sqrt(squared_distance(a, b));
}

}  // namespace fl4s
