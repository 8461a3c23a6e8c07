// SPDX-License-Identifier: Apache-2.0
/**
 * @file   ops.hpp
 * @brief  Elementary differentiable ops: matmul, affine, add, concat,
 *         elementwise mul, tanh, relu, sigmoid, mean, sum, softmax, reshape.
 *
 * "Rows" below always means the tensor viewed as [size / last_dim, last_dim].
 */
#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>

#include "cda/tape.hpp"

namespace cda {

namespace detail {

inline void require(bool ok, const std::string& op, const Shape& a, const Shape& b) {
  if (!ok) throw ShapeError(op + ": incompatible shapes " + shape_str(a) + " and " + shape_str(b));
}

template <class T>
void check_same_tape(const Var<T>& a, const Var<T>& b) {
  if (&a.tape() != &b.tape()) throw std::logic_error("operands live on different tapes");
}

template <class T, class Fwd, class Bwd>
Var<T> unary(const Var<T>& x, const char* name, Fwd fwd, Bwd dfdx_from_y) {
  const Tensor<T>& xv = x.value();
  Tensor<T> y(xv.shape);
  for (std::size_t i = 0; i < xv.size(); ++i) y[i] = fwd(xv[i]);
  const std::size_t xi = x.id();
  return x.tape().push(std::move(y), {xi},
                       [xi, dfdx_from_y](Tape<T>& t, std::size_t self) {
                         const auto& g = t.grad(self);
                         const auto& xv = t.value(xi);
                         const auto& yv = t.value(self);
                         auto& gx = t.grad_buffer(xi);
                         for (std::size_t i = 0; i < g.size(); ++i)
                           gx[i] += g[i] * dfdx_from_y(xv[i], yv[i]);
                       },
                       name);
}

}  // namespace detail

/// a[m,k] x b[k,n] -> [m,n]
template <class T>
Var<T> matmul(const Var<T>& a, const Var<T>& b) {
  detail::check_same_tape(a, b);
  const auto& av = a.value();
  const auto& bv = b.value();
  detail::require(av.rank() == 2 && bv.rank() == 2 && av.dim(1) == bv.dim(0), "matmul", av.shape,
                  bv.shape);
  const std::size_t m = av.dim(0), k = av.dim(1), n = bv.dim(1);
  Tensor<T> out({m, n});
  kernels::gemm_nn(av.data.data(), bv.data.data(), out.data.data(), m, k, n);
  const std::size_t ai = a.id(), bi = b.id();
  return a.tape().push(std::move(out), {ai, bi},
                       [ai, bi, m, k, n](Tape<T>& t, std::size_t self) {
                         const auto& g = t.grad(self);
                         const auto& av = t.value(ai).data;
                         const auto& bv = t.value(bi).data;
                         // da += g * b^T
                         std::vector<T> bt(n * k);
                         kernels::transpose(bv.data(), bt.data(), k, n);
                         kernels::gemm_nn_acc(g.data(), bt.data(), t.grad_buffer(ai).data(), m, n, k);
                         // db += a^T * g
                         kernels::gemm_tn_acc(av.data(), g.data(), t.grad_buffer(bi).data(), m, k, n);
                       },
                       "matmul");
}

/// Applies w[out,in] and bias b[out] to every row of x[..., in]; output [..., out].
template <class T>
Var<T> affine_impl(const Var<T>& x, const Var<T>& w, const std::optional<Var<T>>& b) {
  detail::check_same_tape(x, w);
  const auto& xv = x.value();
  const auto& wv = w.value();
  detail::require(wv.rank() == 2 && xv.cols() == wv.dim(1), "affine", xv.shape, wv.shape);
  const std::size_t in = wv.dim(1), outd = wv.dim(0), rows = xv.rows();
  if (b) {
    detail::require(b->size() == outd, "affine bias", wv.shape, b->shape());
  }
  Shape oshape = xv.shape;
  if (oshape.empty()) oshape.push_back(outd);
  oshape.back() = outd;
  Tensor<T> out(oshape);
  kernels::affine(xv.data.data(), wv.data.data(), b ? b->value().data.data() : nullptr,
                  out.data.data(), rows, in, outd);
  const std::size_t xi = x.id(), wi = w.id();
  std::vector<std::size_t> inputs{xi, wi};
  const std::size_t bi = b ? b->id() : 0;
  const bool has_b = b.has_value();
  if (has_b) inputs.push_back(bi);
  return x.tape().push(std::move(out), std::move(inputs),
                       [=](Tape<T>& t, std::size_t self) {
                         const auto& g = t.grad(self);
                         const auto& xv = t.value(xi).data;
                         const auto& wv = t.value(wi).data;
                         kernels::gemm_nn_acc(g.data(), wv.data(), t.grad_buffer(xi).data(), rows,
                                              outd, in);
                         kernels::gemm_tn_acc(g.data(), xv.data(), t.grad_buffer(wi).data(), rows,
                                              outd, in);
                         if (has_b) {
                           auto& gb = t.grad_buffer(bi);
                           for (std::size_t r = 0; r < rows; ++r)
                             for (std::size_t j = 0; j < outd; ++j) gb[j] += g[r * outd + j];
                         }
                       },
                       "affine");
}

template <class T>
Var<T> affine(const Var<T>& x, const Var<T>& w, const Var<T>& b) {
  return affine_impl<T>(x, w, b);
}

template <class T>
Var<T> affine(const Var<T>& x, const Var<T>& w) {
  return affine_impl<T>(x, w, std::nullopt);
}

template <class T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  detail::check_same_tape(a, b);
  detail::require(a.shape() == b.shape(), "add", a.shape(), b.shape());
  Tensor<T> out(a.shape());
  const auto& av = a.value();
  const auto& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
  const std::size_t ai = a.id(), bi = b.id();
  return a.tape().push(std::move(out), {ai, bi},
                       [ai, bi](Tape<T>& t, std::size_t self) {
                         const auto& g = t.grad(self);
                         auto& ga = t.grad_buffer(ai);
                         for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
                         auto& gb = t.grad_buffer(bi);
                         for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
                       },
                       "add");
}

template <class T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  detail::check_same_tape(a, b);
  detail::require(a.shape() == b.shape(), "mul", a.shape(), b.shape());
  Tensor<T> out(a.shape());
  const auto& av = a.value();
  const auto& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  const std::size_t ai = a.id(), bi = b.id();
  return a.tape().push(std::move(out), {ai, bi},
                       [ai, bi](Tape<T>& t, std::size_t self) {
                         const auto& g = t.grad(self);
                         const auto& av = t.value(ai);
                         const auto& bv = t.value(bi);
                         auto& ga = t.grad_buffer(ai);
                         for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
                         auto& gb = t.grad_buffer(bi);
                         for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
                       },
                       "mul");
}

/// Concatenates along the last axis; all leading dimensions must agree.
template <class T>
Var<T> concat(const Var<T>& a, const Var<T>& b) {
  detail::check_same_tape(a, b);
  const auto& av = a.value();
  const auto& bv = b.value();
  Shape lead_a(av.shape.begin(), av.shape.end() - 1);
  Shape lead_b(bv.shape.begin(), bv.shape.end() - 1);
  detail::require(av.rank() >= 1 && lead_a == lead_b, "concat", av.shape, bv.shape);
  const std::size_t rows = av.rows(), ca = av.cols(), cb = bv.cols();
  Shape os = av.shape;
  os.back() = ca + cb;
  Tensor<T> out(os);
  for (std::size_t r = 0; r < rows; ++r) {
    std::copy_n(av.data.begin() + r * ca, ca, out.data.begin() + r * (ca + cb));
    std::copy_n(bv.data.begin() + r * cb, cb, out.data.begin() + r * (ca + cb) + ca);
  }
  const std::size_t ai = a.id(), bi = b.id();
  return a.tape().push(std::move(out), {ai, bi},
                       [=](Tape<T>& t, std::size_t self) {
                         const auto& g = t.grad(self);
                         auto& ga = t.grad_buffer(ai);
                         auto& gb = t.grad_buffer(bi);
                         for (std::size_t r = 0; r < rows; ++r) {
                           for (std::size_t j = 0; j < ca; ++j) ga[r * ca + j] += g[r * (ca + cb) + j];
                           for (std::size_t j = 0; j < cb; ++j)
                             gb[r * cb + j] += g[r * (ca + cb) + ca + j];
                         }
                       },
                       "concat");
}

/// Concatenates along the first axis; trailing dimensions must agree.
template <class T>
Var<T> concat_first(const Var<T>& a, const Var<T>& b) {
  detail::check_same_tape(a, b);
  const auto& av = a.value();
  const auto& bv = b.value();
  Shape tail_a(av.shape.begin() + 1, av.shape.end());
  Shape tail_b(bv.shape.begin() + 1, bv.shape.end());
  detail::require(av.rank() >= 1 && tail_a == tail_b, "concat_first", av.shape, bv.shape);
  Shape os = av.shape;
  os[0] += bv.dim(0);
  std::vector<T> data = av.data;
  data.insert(data.end(), bv.data.begin(), bv.data.end());
  const std::size_t ai = a.id(), bi = b.id(), na = av.size();
  return a.tape().push(Tensor<T>(os, std::move(data)), {ai, bi},
                       [=](Tape<T>& t, std::size_t self) {
                         const auto& g = t.grad(self);
                         auto& ga = t.grad_buffer(ai);
                         auto& gb = t.grad_buffer(bi);
                         for (std::size_t i = 0; i < na; ++i) ga[i] += g[i];
                         for (std::size_t i = na; i < g.size(); ++i) gb[i - na] += g[i];
                       },
                       "concat_first");
}

template <class T>
Var<T> reshape(const Var<T>& x, Shape shape) {
  if (shape_size(shape) != x.size()) {
    throw ShapeError("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
  }
  const std::size_t xi = x.id();
  return x.tape().push(Tensor<T>(std::move(shape), x.value().data), {xi},
                       [xi](Tape<T>& t, std::size_t self) {
                         const auto& g = t.grad(self);
                         auto& gx = t.grad_buffer(xi);
                         for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
                       },
                       "reshape");
}

template <class T>
Var<T> tanh(const Var<T>& x) {
  return detail::unary(
      x, "tanh", [](T v) { return std::tanh(v); }, [](T, T y) { return T(1) - y * y; });
}

template <class T>
Var<T> relu(const Var<T>& x) {
  return detail::unary(
      x, "relu", [](T v) { return v > T(0) ? v : T(0); },
      [](T v, T) { return v > T(0) ? T(1) : T(0); });
}

template <class T>
Var<T> sigmoid(const Var<T>& x) {
  return detail::unary(
      x, "sigmoid", [](T v) { return kernels::sigmoid(v); }, [](T, T y) { return y * (T(1) - y); });
}

template <class T>
Var<T> sum(const Var<T>& x) {
  T acc = T(0);
  for (auto v : x.value().data) acc += v;
  const std::size_t xi = x.id();
  return x.tape().push(Tensor<T>({1}, {acc}), {xi},
                       [xi](Tape<T>& t, std::size_t self) {
                         const T g = t.grad(self)[0];
                         for (auto& v : t.grad_buffer(xi)) v += g;
                       },
                       "sum");
}

template <class T>
Var<T> mean(const Var<T>& x) {
  T acc = T(0);
  for (auto v : x.value().data) acc += v;
  const T n = static_cast<T>(x.size());
  const std::size_t xi = x.id();
  return x.tape().push(Tensor<T>({1}, {acc / n}), {xi},
                       [xi, n](Tape<T>& t, std::size_t self) {
                         const T g = t.grad(self)[0] / n;
                         for (auto& v : t.grad_buffer(xi)) v += g;
                       },
                       "mean");
}

/// Max-subtracted softmax of one score row; masked entries (mask[i]==0) get
/// exactly 0. Returns false when every entry is masked.
template <class T>
bool softmax_row(const T* scores, const std::uint8_t* mask, T* out, std::size_t n) {
  T mx = -std::numeric_limits<T>::infinity();
  bool any = false;
  for (std::size_t i = 0; i < n; ++i) {
    if (mask && !mask[i]) continue;
    any = true;
    mx = std::max(mx, scores[i]);
  }
  if (!any) {
    std::fill(out, out + n, T(0));
    return false;
  }
  T total = T(0);
  for (std::size_t i = 0; i < n; ++i) {
    if (mask && !mask[i]) {
      out[i] = T(0);
      continue;
    }
    out[i] = std::exp(scores[i] - mx);
    total += out[i];
  }
  for (std::size_t i = 0; i < n; ++i) out[i] /= total;
  return true;
}

/// Softmax along the last axis, optionally masked (mask has x's size).
template <class T>
Var<T> softmax(const Var<T>& x, const std::optional<Mask>& mask = std::nullopt) {
  const auto& xv = x.value();
  if (mask && mask->size() != xv.size()) {
    throw ShapeError("softmax: mask length " + std::to_string(mask->size()) +
                     " does not match scores shape " + shape_str(xv.shape));
  }
  for (std::size_t i = 0; i < xv.size(); ++i) {
    if (std::isnan(xv[i])) throw NumericError("softmax: NaN score at index " + std::to_string(i));
  }
  const std::size_t rows = xv.rows(), n = xv.cols();
  Tensor<T> out(xv.shape);
  for (std::size_t r = 0; r < rows; ++r) {
    if (!softmax_row(xv.data.data() + r * n, mask ? mask->data() + r * n : nullptr,
                     out.data.data() + r * n, n)) {
      throw NumericError("softmax: every entry of row " + std::to_string(r) + " is masked");
    }
  }
  const std::size_t xi = x.id();
  return x.tape().push(std::move(out), {xi},
                       [xi, rows, n](Tape<T>& t, std::size_t self) {
                         const auto& g = t.grad(self);
                         const auto& y = t.value(self);
                         auto& gx = t.grad_buffer(xi);
                         for (std::size_t r = 0; r < rows; ++r) {
                           const std::size_t o = r * n;
                           T inner = T(0);
                           for (std::size_t i = 0; i < n; ++i) inner += y[o + i] * g[o + i];
                           for (std::size_t i = 0; i < n; ++i) gx[o + i] += y[o + i] * (g[o + i] - inner);
                         }
                       },
                       "softmax");
}

}  // namespace cda
