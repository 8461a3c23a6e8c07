// SPDX-License-Identifier: Apache-2.0
/**
 * @file   tensor.hpp
 * @brief  Dense row-major tensors and the fixed-order kernels used by every op.
 *
 * All reductions accumulate in ascending index order starting from zero, and
 * the build disables floating-point contraction, so a given sequence of ops
 * produces bitwise-identical values on every run.
 */
#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace cda {

using Shape = std::vector<std::size_t>;
using Mask = std::vector<std::uint8_t>;

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

inline std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ",";
    os << shape[i];
  }
  os << "]";
  return os.str();
}

template <class T>
struct Tensor {
  Shape shape;
  std::vector<T> data;

  Tensor() = default;
  explicit Tensor(Shape s) : shape(std::move(s)), data(shape_size(shape), T(0)) {
    check_shape();
  }
  Tensor(Shape s, std::vector<T> d) : shape(std::move(s)), data(std::move(d)) {
    check_shape();
    if (data.size() != shape_size(shape)) {
      throw ShapeError("tensor data length " + std::to_string(data.size()) +
                       " does not match shape " + shape_str(shape));
    }
  }

  std::size_t size() const { return data.size(); }
  std::size_t rank() const { return shape.size(); }
  std::size_t dim(std::size_t i) const { return shape.at(i); }
  /// Size of the last axis; rows() * cols() == size().
  std::size_t cols() const { return shape.empty() ? 1 : shape.back(); }
  std::size_t rows() const { return cols() ? size() / cols() : 0; }

  T& operator[](std::size_t i) { return data[i]; }
  const T& operator[](std::size_t i) const { return data[i]; }

  bool operator==(const Tensor&) const = default;

 private:
  void check_shape() const {
    for (auto d : shape) {
      if (d == 0) throw ShapeError("tensor dimensions must be positive, got " + shape_str(shape));
    }
  }
};

namespace kernels {

/// out[m,n] = a[m,k] * b[k,n]  (overwrites out).
template <class T>
void gemm_nn(const T* a, const T* b, T* out, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    T* o = out + i * n;
    for (std::size_t j = 0; j < n; ++j) o[j] = T(0);
    const T* ai = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const T av = ai[p];
      const T* bp = b + p * n;
      for (std::size_t j = 0; j < n; ++j) o[j] += av * bp[j];
    }
  }
}

/// Transposes a[r,c] into out[c,r].
template <class T>
void transpose(const T* a, T* out, std::size_t r, std::size_t c) {
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = a[i * c + j];
}

/// out[m,n] = x[m,k] * w[n,k]^T + bias[n]; bias may be null.
/// Each output is (sum_k x*w) + bias with the sum taken in ascending k.
template <class T>
void affine(const T* x, const T* w, const T* bias, T* out, std::size_t m, std::size_t k,
            std::size_t n) {
  std::vector<T> wt(k * n);
  transpose(w, wt.data(), n, k);
  gemm_nn(x, wt.data(), out, m, k, n);
  if (bias) {
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) out[i * n + j] += bias[j];
  }
}

/// acc[n1,n2] += a[m,n1]^T * b[m,n2]
template <class T>
void gemm_tn_acc(const T* a, const T* b, T* acc, std::size_t m, std::size_t n1, std::size_t n2) {
  for (std::size_t i = 0; i < m; ++i) {
    const T* ai = a + i * n1;
    const T* bi = b + i * n2;
    for (std::size_t j = 0; j < n1; ++j) {
      const T av = ai[j];
      if (av == T(0)) continue;
      T* accj = acc + j * n2;
      for (std::size_t p = 0; p < n2; ++p) accj[p] += av * bi[p];
    }
  }
}

/// acc[m,k] += a[m,n] * b[n,k]
template <class T>
void gemm_nn_acc(const T* a, const T* b, T* acc, std::size_t m, std::size_t n, std::size_t k) {
  for (std::size_t i = 0; i < m; ++i) {
    const T* ai = a + i * n;
    T* acci = acc + i * k;
    for (std::size_t j = 0; j < n; ++j) {
      const T av = ai[j];
      if (av == T(0)) continue;
      const T* bj = b + j * k;
      for (std::size_t p = 0; p < k; ++p) acci[p] += av * bj[p];
    }
  }
}

template <class T>
T dot(const T* a, const T* b, std::size_t n) {
  T acc = T(0);
  for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

template <class T>
T sigmoid(T x) {
  return T(1) / (T(1) + std::exp(-x));
}

}  // namespace kernels
}  // namespace cda
