// Copyright (c) 2026 The servolnn Authors
// SPDX-License-Identifier: Apache-2.0
//
// Small dense matrices over an arbitrary scalar type. The same physics code
// runs on double (evaluation, oracle checks) and on autodiff::Expr (training
// graphs), so nothing here may assume more of T than +, -, *, a zero from
// T{} and an ADL-visible reciprocal().

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <type_traits>
#include <vector>

#include "servolnn/error.hpp"

namespace servolnn {

inline double reciprocal(double x) { return 1.0 / x; }

template <class T>
using Vec = std::vector<T>;

template <class T>
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols)
      : rows_(rows), cols_(cols), data_(rows * cols) {}

  static Matrix identity(std::size_t n) {
    static_assert(std::is_arithmetic_v<T>);
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = T(1);
    return m;
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }

  T& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  const T& operator()(std::size_t r, std::size_t c) const {
    return data_[r * cols_ + c];
  }

  const std::vector<T>& data() const { return data_; }

  /// Copy of rows [r0, r0+nr) x cols [c0, c0+nc).
  Matrix block(std::size_t r0, std::size_t c0, std::size_t nr,
               std::size_t nc) const {
    Matrix out(nr, nc);
    for (std::size_t r = 0; r < nr; ++r)
      for (std::size_t c = 0; c < nc; ++c) out(r, c) = (*this)(r0 + r, c0 + c);
    return out;
  }

  Matrix transposed() const {
    Matrix out(cols_, rows_);
    for (std::size_t r = 0; r < rows_; ++r)
      for (std::size_t c = 0; c < cols_; ++c) out(c, r) = (*this)(r, c);
    return out;
  }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<T> data_;
};

template <class T>
Vec<T> matvec(const Matrix<T>& m, const Vec<T>& v) {
  if (m.cols() != v.size()) throw ConfigError("matvec: dimension mismatch");
  Vec<T> out(m.rows());
  for (std::size_t r = 0; r < m.rows(); ++r) {
    T acc{};
    for (std::size_t c = 0; c < m.cols(); ++c) acc = acc + m(r, c) * v[c];
    out[r] = acc;
  }
  return out;
}

template <class T>
Matrix<T> matmul(const Matrix<T>& a, const Matrix<T>& b) {
  if (a.cols() != b.rows()) throw ConfigError("matmul: dimension mismatch");
  Matrix<T> out(a.rows(), b.cols());
  for (std::size_t r = 0; r < a.rows(); ++r)
    for (std::size_t c = 0; c < b.cols(); ++c) {
      T acc{};
      for (std::size_t k = 0; k < a.cols(); ++k) acc = acc + a(r, k) * b(k, c);
      out(r, c) = acc;
    }
  return out;
}

template <class T>
T dot(const Vec<T>& a, const Vec<T>& b) {
  if (a.size() != b.size()) throw ConfigError("dot: dimension mismatch");
  T acc{};
  for (std::size_t i = 0; i < a.size(); ++i) acc = acc + a[i] * b[i];
  return acc;
}

template <class T>
Vec<T> operator+(const Vec<T>& a, const Vec<T>& b) {
  if (a.size() != b.size()) throw ConfigError("vector add: size mismatch");
  Vec<T> out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + b[i];
  return out;
}

template <class T>
Vec<T> operator-(const Vec<T>& a, const Vec<T>& b) {
  if (a.size() != b.size()) throw ConfigError("vector sub: size mismatch");
  Vec<T> out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] - b[i];
  return out;
}

template <class T>
Vec<T> concat(const Vec<T>& a, const Vec<T>& b) {
  Vec<T> out(a);
  out.insert(out.end(), b.begin(), b.end());
  return out;
}

template <class T>
Vec<T> slice(const Vec<T>& v, std::size_t first, std::size_t count) {
  return Vec<T>(v.begin() + first, v.begin() + first + count);
}

/// Square-root-free Cholesky factorization M = L D L^T of a symmetric
/// positive-definite matrix, with unit lower-triangular L.
template <class T>
struct LdltFactor {
  Matrix<T> lower;   // unit diagonal implied
  Vec<T> diag;
  Vec<T> inv_diag;
};

/// Factorizes a symmetric positive-definite matrix. For floating-point
/// scalars, a pivot that is not positive or is below a relative floor of
/// 1e-14 raises NumericalError carrying a condition estimate.
template <class T>
LdltFactor<T> ldlt(const Matrix<T>& m) {
  const std::size_t n = m.rows();
  if (m.cols() != n) throw ConfigError("ldlt: matrix is not square");
  LdltFactor<T> f{Matrix<T>(n, n), Vec<T>(n), Vec<T>(n)};
  for (std::size_t j = 0; j < n; ++j) {
    T d = m(j, j);
    for (std::size_t k = 0; k < j; ++k)
      d = d - f.lower(j, k) * f.lower(j, k) * f.diag[k];
    f.diag[j] = d;
    if constexpr (std::is_floating_point_v<T>) {
      double scale = 0.0;
      for (std::size_t i = 0; i < n; ++i)
        scale = std::max(scale, std::abs(static_cast<double>(m(i, i))));
      if (!(d > 1e-14 * scale)) {
        double dmax = 0.0;
        for (std::size_t k = 0; k <= j; ++k)
          dmax = std::max(dmax, std::abs(static_cast<double>(f.diag[k])));
        const double cond = d > 0.0 ? dmax / d
                                    : std::numeric_limits<double>::infinity();
        throw NumericalError("singular mass block: pivot " + std::to_string(j) +
                             " = " + std::to_string(d) +
                             ", condition estimate " + std::to_string(cond));
      }
    }
    f.inv_diag[j] = reciprocal(d);
    for (std::size_t i = j + 1; i < n; ++i) {
      T s = m(i, j);
      for (std::size_t k = 0; k < j; ++k)
        s = s - f.lower(i, k) * f.lower(j, k) * f.diag[k];
      f.lower(i, j) = s * f.inv_diag[j];
    }
  }
  return f;
}

template <class T>
Vec<T> ldlt_solve(const LdltFactor<T>& f, const Vec<T>& b) {
  const std::size_t n = f.diag.size();
  if (b.size() != n) throw ConfigError("ldlt_solve: dimension mismatch");
  Vec<T> y(b);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < i; ++k) y[i] = y[i] - f.lower(i, k) * y[k];
  for (std::size_t i = 0; i < n; ++i) y[i] = y[i] * f.inv_diag[i];
  for (std::size_t i = n; i-- > 0;)
    for (std::size_t k = i + 1; k < n; ++k) y[i] = y[i] - f.lower(k, i) * y[k];
  return y;
}

}  // namespace servolnn
