#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

namespace ennal {

/// Dense row-major matrix of doubles.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

  double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
  double operator()(std::size_t i, std::size_t j) const {
    return data[i * cols + j];
  }
  const double* row(std::size_t i) const { return data.data() + i * cols; }
  double* row(std::size_t i) { return data.data() + i * cols; }
  std::size_t size() const { return data.size(); }
};

inline bool all_finite(std::span<const double> v) {
  for (double x : v) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

/// out += W x  (W: m x n, x: n, out: m)
inline void matvec_acc(const Matrix& w, const double* x, double* out) {
  for (std::size_t i = 0; i < w.rows; ++i) {
    const double* r = w.row(i);
    double s = 0.0;
    for (std::size_t j = 0; j < w.cols; ++j) s += r[j] * x[j];
    out[i] += s;
  }
}

/// out += W^T y  (W: m x n, y: m, out: n)
inline void matvec_transpose_acc(const Matrix& w, const double* y, double* out) {
  for (std::size_t i = 0; i < w.rows; ++i) {
    const double yi = y[i];
    const double* r = w.row(i);
    for (std::size_t j = 0; j < w.cols; ++j) out[j] += yi * r[j];
  }
}

/// C += A B with A: m x k, B: k x n, all row-major contiguous.
/// j-inner loop order so the compiler can vectorize over columns of B.
inline void matmul_acc(const double* a, const double* b, double* c,
                       std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* ar = a + i * k;
    double* cr = c + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = ar[p];
      const double* br = b + p * n;
      for (std::size_t j = 0; j < n; ++j) cr[j] += av * br[j];
    }
  }
}

/// Transposed copy (rows x cols -> cols x rows), reusing dst storage.
inline void transpose_into(const Matrix& w, Matrix& dst) {
  dst.rows = w.cols;
  dst.cols = w.rows;
  dst.data.resize(w.size());
  for (std::size_t i = 0; i < w.rows; ++i) {
    for (std::size_t j = 0; j < w.cols; ++j) dst(j, i) = w(i, j);
  }
}

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double squared_norm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return s;
}

}  // namespace ennal
