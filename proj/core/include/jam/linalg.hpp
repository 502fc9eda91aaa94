#pragma once

// Dense row-major matrices and vectors with 64-bit accumulation in every
// reduction. Storage type is a template parameter so the same kernels run in
// float32 (training/serving) and float64 (gradient checking).

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "jam/error.hpp"

namespace jam {

template <typename T>
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, T fill = T(0))
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<T> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    require(data_.size() == rows_ * cols_, "matrix payload length != rows*cols");
  }

  static Matrix identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = T(1);
    return m;
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  T& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  T operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<T> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const T> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::span<T> values() noexcept { return data_; }
  std::span<const T> values() const noexcept { return data_; }
  const std::vector<T>& storage() const noexcept { return data_; }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  template <typename U>
  Matrix<U> cast() const {
    Matrix<U> out(rows_, cols_);
    for (std::size_t i = 0; i < data_.size(); ++i) out.values()[i] = static_cast<U>(data_[i]);
    return out;
  }

  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<T> data_;
};

using DenseMatrix = Matrix<float>;
using DenseVector = std::vector<float>;

/// Sentinel used for masked logits; softmax maps it to exactly zero weight.
inline constexpr double kMaskedLogit = -std::numeric_limits<double>::infinity();

template <typename A, typename B>
double dot(std::span<const A> a, std::span<const B> b) {
  if (a.size() != b.size()) {
    fail(ErrorKind::Contract, "dot: dimension mismatch " + std::to_string(a.size()) + " vs " +
                                  std::to_string(b.size()));
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += double(a[i]) * double(b[i]);
  return acc;
}

template <typename A, typename B>
double dot(const std::vector<A>& a, const std::vector<B>& b) {
  return dot(std::span<const A>(a), std::span<const B>(b));
}

/// out = m * v, accumulated in double and rounded to T.
template <typename T, typename V>
std::vector<T> matvec(const Matrix<T>& m, std::span<const V> v) {
  if (m.cols() != v.size()) {
    fail(ErrorKind::Contract, "matvec: matrix has " + std::to_string(m.cols()) +
                                  " columns but vector has dim " + std::to_string(v.size()));
  }
  std::vector<T> out(m.rows());
  for (std::size_t r = 0; r < m.rows(); ++r) {
    out[r] = static_cast<T>(dot(m.row(r), v));
  }
  return out;
}

template <typename T, typename V>
std::vector<T> matvec(const Matrix<T>& m, const std::vector<V>& v) {
  return matvec(m, std::span<const V>(v));
}

/// out = m^T * v, accumulated in double.
template <typename T, typename V>
std::vector<double> matvec_transposed(const Matrix<T>& m, std::span<const V> v) {
  require(m.rows() == v.size(), "matvec_transposed: dimension mismatch");
  std::vector<double> out(m.cols(), 0.0);
  for (std::size_t r = 0; r < m.rows(); ++r) {
    const double s = double(v[r]);
    if (s == 0.0) continue;
    const auto row = m.row(r);
    for (std::size_t c = 0; c < m.cols(); ++c) out[c] += double(row[c]) * s;
  }
  return out;
}

/// acc += scale * a b^T
template <typename A, typename B>
void add_outer(Matrix<double>& acc, std::span<const A> a, std::span<const B> b,
               double scale = 1.0) {
  require(acc.rows() == a.size() && acc.cols() == b.size(), "add_outer: shape mismatch");
  for (std::size_t r = 0; r < a.size(); ++r) {
    const double s = scale * double(a[r]);
    if (s == 0.0) continue;
    auto row = acc.row(r);
    for (std::size_t c = 0; c < b.size(); ++c) row[c] += s * double(b[c]);
  }
}

/// Numerically stable softmax. Entries equal to -inf receive weight exactly 0.
/// Throws Error(Contract, "empty support") when every entry is -inf.
std::vector<double> softmax(std::span<const double> logits);
inline std::vector<double> softmax(const std::vector<double>& logits) {
  return softmax(std::span<const double>(logits));
}

/// ln(1 + e^x) without overflow.
double softplus(double x) noexcept;

/// ln sigma(x) = -softplus(-x).
double log_sigmoid(double x) noexcept;

double sigmoid(double x) noexcept;

template <typename T>
bool all_finite(std::span<const T> v) {
  for (T x : v) {
    if (!std::isfinite(static_cast<double>(x))) return false;
  }
  return true;
}

}  // namespace jam
