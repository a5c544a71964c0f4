#pragma once

#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "vera/errors.hpp"

namespace vera {

namespace detail {

inline void require(bool ok, const char* op, std::size_t lhs, std::size_t rhs) {
  if (!ok) {
    throw DimensionError(std::string(op) + ": " + std::to_string(lhs) + " vs " + std::to_string(rhs));
  }
}

template <typename T>
void require_finite(std::span<const T> values, const char* what) {
  for (const T v : values) {
    if (!std::isfinite(v)) throw InvalidArgument(std::string(what) + ": non-finite entry");
  }
}

}  // namespace detail

/// Dense vector. Storage scalar is float or double; arithmetic helpers below
/// accumulate in double regardless.
template <typename T>
class Vector {
 public:
  using value_type = T;

  Vector() = default;
  explicit Vector(std::size_t len, T fill = T(0)) : data_(len, fill) {}
  Vector(std::initializer_list<T> values) : data_(values) {}
  explicit Vector(std::vector<T> values) : data_(std::move(values)) {}

  /// Construction from external data; NaN and Inf are rejected.
  static Vector from_values(std::vector<T> values) {
    detail::require_finite<T>(values, "vector");
    return Vector(std::move(values));
  }

  std::size_t size() const noexcept { return data_.size(); }
  T& operator[](std::size_t i) noexcept { return data_[i]; }
  T operator[](std::size_t i) const noexcept { return data_[i]; }
  std::span<T> span() noexcept { return data_; }
  std::span<const T> span() const noexcept { return data_; }
  const std::vector<T>& values() const noexcept { return data_; }
  auto begin() noexcept { return data_.begin(); }
  auto end() noexcept { return data_.end(); }
  auto begin() const noexcept { return data_.begin(); }
  auto end() const noexcept { return data_.end(); }

  template <typename U>
  Vector<U> cast() const {
    Vector<U> out(size());
    for (std::size_t i = 0; i < size(); ++i) out[i] = static_cast<U>(data_[i]);
    return out;
  }

  friend bool operator==(const Vector&, const Vector&) = default;

 private:
  std::vector<T> data_;
};

/// Dense row-major matrix.
template <typename T>
class Matrix {
 public:
  using value_type = T;

  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, T fill = T(0))
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<T> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    detail::require(data_.size() == rows * cols, "matrix data", data_.size(), rows * cols);
  }
  Matrix(std::initializer_list<std::initializer_list<T>> rows) {
    rows_ = rows.size();
    cols_ = rows_ ? rows.begin()->size() : 0;
    for (const auto& row : rows) {
      detail::require(row.size() == cols_, "ragged matrix literal", row.size(), cols_);
      data_.insert(data_.end(), row.begin(), row.end());
    }
  }

  static Matrix from_values(std::size_t rows, std::size_t cols, std::vector<T> data) {
    detail::require_finite<T>(data, "matrix");
    return Matrix(rows, cols, std::move(data));
  }

  static Matrix identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = T(1);
    return m;
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  T& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
  T operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }
  std::span<T> span() noexcept { return data_; }
  std::span<const T> span() const noexcept { return data_; }
  std::span<const T> row(std::size_t r) const noexcept { return {data_.data() + r * cols_, cols_}; }

  template <typename U>
  Matrix<U> cast() const {
    Matrix<U> out(rows_, cols_);
    for (std::size_t i = 0; i < data_.size(); ++i) out.span()[i] = static_cast<U>(data_[i]);
    return out;
  }

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<T> data_;
};

template <typename T>
Vector<T> matvec(const Matrix<T>& m, const Vector<T>& x) {
  detail::require(m.cols() == x.size(), "matvec", m.cols(), x.size());
  Vector<T> out(m.rows());
  for (std::size_t i = 0; i < m.rows(); ++i) {
    const auto row = m.row(i);
    double acc = 0.0;
    for (std::size_t j = 0; j < row.size(); ++j) acc += double(row[j]) * double(x[j]);
    out[i] = static_cast<T>(acc);
  }
  return out;
}

/// Mᵀy.
template <typename T>
Vector<T> matvec_t(const Matrix<T>& m, const Vector<T>& y) {
  detail::require(m.rows() == y.size(), "matvec_t", m.rows(), y.size());
  std::vector<double> acc(m.cols(), 0.0);
  for (std::size_t i = 0; i < m.rows(); ++i) {
    const auto row = m.row(i);
    const double yi = y[i];
    for (std::size_t j = 0; j < row.size(); ++j) acc[j] += double(row[j]) * yi;
  }
  Vector<T> out(m.cols());
  for (std::size_t j = 0; j < acc.size(); ++j) out[j] = static_cast<T>(acc[j]);
  return out;
}

template <typename T>
Vector<T> hadamard(const Vector<T>& a, const Vector<T>& b) {
  detail::require(a.size() == b.size(), "hadamard", a.size(), b.size());
  Vector<T> out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = static_cast<T>(double(a[i]) * double(b[i]));
  return out;
}

/// acc += scale * y xᵀ
template <typename T>
void outer_accumulate(Matrix<T>& acc, const Vector<T>& y, const Vector<T>& x, double scale) {
  detail::require(acc.rows() == y.size(), "outer_accumulate rows", acc.rows(), y.size());
  detail::require(acc.cols() == x.size(), "outer_accumulate cols", acc.cols(), x.size());
  if (scale == 0.0) return;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double sy = scale * double(y[i]);
    for (std::size_t j = 0; j < x.size(); ++j) {
      acc(i, j) = static_cast<T>(double(acc(i, j)) + sy * double(x[j]));
    }
  }
}

template <typename T>
Matrix<T> slice_rows(const Matrix<T>& m, std::size_t k) {
  if (k < 1 || k > m.rows()) throw InvalidArgument("slice_rows: k out of range");
  std::vector<T> data(m.span().begin(), m.span().begin() + static_cast<std::ptrdiff_t>(k * m.cols()));
  return Matrix<T>(k, m.cols(), std::move(data));
}

template <typename T>
Matrix<T> slice_cols(const Matrix<T>& m, std::size_t k) {
  if (k < 1 || k > m.cols()) throw InvalidArgument("slice_cols: k out of range");
  Matrix<T> out(m.rows(), k);
  for (std::size_t i = 0; i < m.rows(); ++i) {
    for (std::size_t j = 0; j < k; ++j) out(i, j) = m(i, j);
  }
  return out;
}

template <typename T>
double dot(const Vector<T>& a, const Vector<T>& b) {
  detail::require(a.size() == b.size(), "dot", a.size(), b.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += double(a[i]) * double(b[i]);
  return acc;
}

template <typename T>
double norm2(std::span<const T> v) {
  double acc = 0.0;
  for (const T x : v) acc += double(x) * double(x);
  return std::sqrt(acc);
}

template <typename T>
double norm2(const Vector<T>& v) {
  return norm2<T>(v.span());
}

/// a + scale * b, elementwise.
template <typename T>
Vector<T> axpy(const Vector<T>& a, const Vector<T>& b, double scale = 1.0) {
  detail::require(a.size() == b.size(), "axpy", a.size(), b.size());
  Vector<T> out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = static_cast<T>(double(a[i]) + scale * double(b[i]));
  return out;
}

}  // namespace vera
