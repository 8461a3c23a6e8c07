// SPDX-License-Identifier: Apache-2.0
/**
 * @file   nn.hpp
 * @brief  Fused sequence ops with hand-written backward passes: embedding
 *         lookup, masked GRU recurrence, additive attention pooling,
 *         dot-product cross attention, masked mean and logistic loss.
 *
 * Sequence tensors are time-major: [T, N, D] with a [T, N] mask (1 = real
 * position). Masks must be prefix-contiguous along T for each column n.
 */
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>

#include "cda/ops.hpp"

namespace cda {

namespace detail {

inline void check_mask(const Mask& mask, std::size_t expected, const char* op) {
  if (mask.size() != expected) {
    throw ShapeError(std::string(op) + ": mask has " + std::to_string(mask.size()) +
                     " entries, expected " + std::to_string(expected));
  }
}

}  // namespace detail

/// Row lookup into table[V, E]. `lead` is the output shape without the
/// embedding axis; positions with mask 0 still read their id but receive no
/// gradient. Repeated ids share the table row's gradient accumulator.
template <class T>
Var<T> embedding_lookup(const Var<T>& table, const std::vector<std::int32_t>& ids, Shape lead,
                        const Mask& mask) {
  const auto& tv = table.value();
  if (tv.rank() != 2) throw ShapeError("embedding table must be 2-D, got " + shape_str(tv.shape));
  if (shape_size(lead) != ids.size()) {
    throw ShapeError("embedding_lookup: " + std::to_string(ids.size()) + " ids for output shape " +
                     shape_str(lead));
  }
  detail::check_mask(mask, ids.size(), "embedding_lookup");
  const std::size_t vocab = tv.dim(0), e = tv.dim(1);
  Shape os = lead;
  os.push_back(e);
  Tensor<T> out(os);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= vocab) {
      throw std::out_of_range("token id " + std::to_string(ids[i]) +
                              " outside vocabulary of size " + std::to_string(vocab));
    }
    std::copy_n(tv.data.begin() + ids[i] * e, e, out.data.begin() + i * e);
  }
  const std::size_t ti = table.id();
  return table.tape().push(std::move(out), {ti},
                           [ti, ids, mask, e](Tape<T>& t, std::size_t self) {
                             const auto& g = t.grad(self);
                             auto& gt = t.grad_buffer(ti);
                             for (std::size_t i = 0; i < ids.size(); ++i) {
                               if (!mask[i]) continue;
                               T* row = gt.data() + ids[i] * e;
                               for (std::size_t j = 0; j < e; ++j) row[j] += g[i * e + j];
                             }
                           },
                           "embedding_lookup");
}

/// One-direction GRU over x[T, N, in] with gate order (reset, update, new):
///   r = sigmoid(Wx_r x + bx_r + Wh_r h + bh_r)
///   z = sigmoid(Wx_z x + bx_z + Wh_z h + bh_z)
///   n = tanh(Wx_n x + bx_n + r * (Wh_n h + bh_n))
///   h' = (1 - z) * n + z * h
/// Masked steps carry h unchanged and emit zeros. `reverse` runs t = T-1..0,
/// which with end padding starts each column at its last real position.
template <class T>
Var<T> gru_sequence(const Var<T>& x, const Mask& mask, const Var<T>& wx, const Var<T>& wh,
                    const Var<T>& bx, const Var<T>& bh, bool reverse) {
  const auto& xv = x.value();
  if (xv.rank() != 3) throw ShapeError("gru_sequence expects [T,N,in], got " + shape_str(xv.shape));
  const std::size_t steps = xv.dim(0), batch = xv.dim(1), in = xv.dim(2);
  const auto& whv = wh.value();
  if (whv.rank() != 2 || whv.dim(0) != 3 * whv.dim(1)) {
    throw ShapeError("gru_sequence: recurrent weight must be [3h,h], got " + shape_str(whv.shape));
  }
  const std::size_t h = whv.dim(1), h3 = 3 * h;
  detail::require(wx.value().rank() == 2 && wx.value().dim(0) == h3 && wx.value().dim(1) == in,
                  "gru_sequence input weight", wx.value().shape, xv.shape);
  detail::require(bx.size() == h3 && bh.size() == h3, "gru_sequence bias", bx.shape(), bh.shape());
  detail::check_mask(mask, steps * batch, "gru_sequence");

  const std::size_t rows = steps * batch;
  std::vector<T> xw(rows * h3);
  kernels::affine(xv.data.data(), wx.value().data.data(), bx.value().data.data(), xw.data(), rows,
                  in, h3);
  std::vector<T> wht(h3 * h);
  kernels::transpose(whv.data.data(), wht.data(), h3, h);
  const T* bhv = bh.value().data.data();

  // Saved per step (indexed by t): gates, the recurrent new-gate term and h_prev.
  std::vector<T> r_s(rows * h), z_s(rows * h), n_s(rows * h), hn_s(rows * h), hp_s(rows * h);
  Tensor<T> out({steps, batch, h});
  std::vector<T> hprev(batch * h, T(0)), hw(batch * h3);
  for (std::size_t s = 0; s < steps; ++s) {
    const std::size_t t = reverse ? steps - 1 - s : s;
    kernels::gemm_nn(hprev.data(), wht.data(), hw.data(), batch, h, h3);
    for (std::size_t n = 0; n < batch; ++n) {
      const std::size_t tn = t * batch + n;
      T* hp = hprev.data() + n * h;
      std::copy_n(hp, h, hp_s.data() + tn * h);
      if (!mask[tn]) continue;
      const T* xr = xw.data() + tn * h3;
      T* hr = hw.data() + n * h3;
      for (std::size_t j = 0; j < h3; ++j) hr[j] += bhv[j];
      T* o = out.data.data() + tn * h;
      for (std::size_t j = 0; j < h; ++j) {
        const T r = kernels::sigmoid(xr[j] + hr[j]);
        const T z = kernels::sigmoid(xr[h + j] + hr[h + j]);
        const T nn = std::tanh(xr[2 * h + j] + r * hr[2 * h + j]);
        const T hnew = (T(1) - z) * nn + z * hp[j];
        r_s[tn * h + j] = r;
        z_s[tn * h + j] = z;
        n_s[tn * h + j] = nn;
        hn_s[tn * h + j] = hr[2 * h + j];
        o[j] = hnew;
      }
      std::copy_n(o, h, hp);
    }
  }

  const std::size_t xi = x.id(), wxi = wx.id(), whi = wh.id(), bxi = bx.id(), bhi = bh.id();
  return x.tape().push(
      std::move(out), {xi, wxi, whi, bxi, bhi},
      [=, r_s = std::move(r_s), z_s = std::move(z_s), n_s = std::move(n_s),
       hn_s = std::move(hn_s), hp_s = std::move(hp_s)](Tape<T>& tp, std::size_t self) {
        const auto& g = tp.grad(self);
        const auto& whd = tp.value(whi).data;
        std::vector<T> dxw(rows * h3, T(0)), dhw(batch * h3), carry(batch * h, T(0));
        auto& gwh = tp.grad_buffer(whi);
        auto& gbh = tp.grad_buffer(bhi);
        for (std::size_t s = steps; s-- > 0;) {
          const std::size_t t = reverse ? steps - 1 - s : s;
          std::fill(dhw.begin(), dhw.end(), T(0));
          for (std::size_t n = 0; n < batch; ++n) {
            const std::size_t tn = t * batch + n;
            if (!mask[tn]) continue;
            T* c = carry.data() + n * h;
            T* dx = dxw.data() + tn * h3;
            T* dh_rec = dhw.data() + n * h3;
            for (std::size_t j = 0; j < h; ++j) {
              const std::size_t k = tn * h + j;
              const T dh = g[k] + c[j];
              const T r = r_s[k], z = z_s[k], nn = n_s[k];
              const T dn_pre = dh * (T(1) - z) * (T(1) - nn * nn);
              const T dz_pre = dh * (hp_s[k] - nn) * z * (T(1) - z);
              const T dr_pre = dn_pre * hn_s[k] * r * (T(1) - r);
              dx[j] = dr_pre;
              dx[h + j] = dz_pre;
              dx[2 * h + j] = dn_pre;
              dh_rec[j] = dr_pre;
              dh_rec[h + j] = dz_pre;
              dh_rec[2 * h + j] = dn_pre * r;
              c[j] = dh * z;
            }
          }
          kernels::gemm_tn_acc(dhw.data(), hp_s.data() + t * batch * h, gwh.data(), batch, h3, h);
          for (std::size_t n = 0; n < batch; ++n)
            for (std::size_t j = 0; j < h3; ++j) gbh[j] += dhw[n * h3 + j];
          kernels::gemm_nn_acc(dhw.data(), whd.data(), carry.data(), batch, h3, h);
        }
        const auto& xd = tp.value(xi).data;
        kernels::gemm_tn_acc(dxw.data(), xd.data(), tp.grad_buffer(wxi).data(), rows, h3, in);
        auto& gbx = tp.grad_buffer(bxi);
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t j = 0; j < h3; ++j) gbx[j] += dxw[r * h3 + j];
        kernels::gemm_nn_acc(dxw.data(), tp.value(wxi).data.data(), tp.grad_buffer(xi).data(),
                             rows, h3, in);
      },
      "gru_sequence");
}

template <class T>
struct Pooled {
  Var<T> out;       ///< [N, D]
  Tensor<T> alpha;  ///< [T, N] attention weights; columns sum to 1 (0 for empty columns)
};

/// Additive attention pooling over the time axis of x[T, N, D]:
///   alpha_t = softmax_t(u . tanh(W x_t + b)),  out = sum_t alpha_t x_t.
/// A column with no real positions pools to the zero vector.
template <class T>
Pooled<T> attention_pool(const Var<T>& x, const Mask& mask, const Var<T>& w, const Var<T>& b,
                         const Var<T>& u) {
  const auto& xv = x.value();
  if (xv.rank() != 3) throw ShapeError("attention_pool expects [T,N,D], got " + shape_str(xv.shape));
  const std::size_t steps = xv.dim(0), batch = xv.dim(1), d = xv.dim(2);
  const auto& wv = w.value();
  detail::require(wv.rank() == 2 && wv.dim(1) == d, "attention_pool weight", wv.shape, xv.shape);
  const std::size_t a = wv.dim(0);
  detail::require(b.size() == a && u.size() == a, "attention_pool bias/context", b.shape(),
                  u.shape());
  detail::check_mask(mask, steps * batch, "attention_pool");
  const std::size_t rows = steps * batch;

  std::vector<T> p(rows * a);
  kernels::affine(xv.data.data(), wv.data.data(), b.value().data.data(), p.data(), rows, d, a);
  for (auto& v : p) v = std::tanh(v);
  const T* uv = u.value().data.data();
  std::vector<T> scores(rows);
  for (std::size_t r = 0; r < rows; ++r) scores[r] = kernels::dot(p.data() + r * a, uv, a);

  Tensor<T> alpha({steps, batch});
  std::vector<T> col(steps), colw(steps);
  Mask colm(steps);
  for (std::size_t n = 0; n < batch; ++n) {
    for (std::size_t t = 0; t < steps; ++t) {
      col[t] = scores[t * batch + n];
      colm[t] = mask[t * batch + n];
    }
    softmax_row(col.data(), colm.data(), colw.data(), steps);
    for (std::size_t t = 0; t < steps; ++t) alpha[t * batch + n] = colw[t];
  }
  Tensor<T> out({batch, d});
  for (std::size_t n = 0; n < batch; ++n) {
    T* o = out.data.data() + n * d;
    for (std::size_t t = 0; t < steps; ++t) {
      const T at = alpha[t * batch + n];
      if (!mask[t * batch + n]) continue;
      const T* xr = xv.data.data() + (t * batch + n) * d;
      for (std::size_t j = 0; j < d; ++j) o[j] += at * xr[j];
    }
  }

  const std::size_t xi = x.id(), wi = w.id(), bi = b.id(), ui = u.id();
  Var<T> res = x.tape().push(
      std::move(out), {xi, wi, bi, ui},
      [=, p = std::move(p), al = alpha.data](Tape<T>& tp, std::size_t self) {
        const auto& g = tp.grad(self);
        const auto& xd = tp.value(xi).data;
        auto& gx = tp.grad_buffer(xi);
        std::vector<T> ds(rows, T(0));
        for (std::size_t n = 0; n < batch; ++n) {
          const T* gn = g.data() + n * d;
          T inner = T(0);
          for (std::size_t t = 0; t < steps; ++t) {
            const std::size_t tn = t * batch + n;
            if (!mask[tn]) continue;
            ds[tn] = kernels::dot(gn, xd.data() + tn * d, d);
            inner += al[tn] * ds[tn];
          }
          for (std::size_t t = 0; t < steps; ++t) {
            const std::size_t tn = t * batch + n;
            if (!mask[tn]) continue;
            ds[tn] = al[tn] * (ds[tn] - inner);
            T* gxr = gx.data() + tn * d;
            for (std::size_t j = 0; j < d; ++j) gxr[j] += al[tn] * gn[j];
          }
        }
        const auto& ud = tp.value(ui).data;
        auto& gu = tp.grad_buffer(ui);
        std::vector<T> dpre(rows * a);
        for (std::size_t r = 0; r < rows; ++r) {
          const T* pr = p.data() + r * a;
          for (std::size_t j = 0; j < a; ++j) {
            gu[j] += ds[r] * pr[j];
            dpre[r * a + j] = ds[r] * ud[j] * (T(1) - pr[j] * pr[j]);
          }
        }
        kernels::gemm_tn_acc(dpre.data(), xd.data(), tp.grad_buffer(wi).data(), rows, a, d);
        auto& gb = tp.grad_buffer(bi);
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t j = 0; j < a; ++j) gb[j] += dpre[r * a + j];
        kernels::gemm_nn_acc(dpre.data(), tp.value(wi).data.data(), gx.data(), rows, a, d);
      },
      "attention_pool");
  return {res, std::move(alpha)};
}

template <class T>
struct Attended {
  Var<T> out;         ///< same shape as the queries
  Tensor<T> weights;  ///< [Q, K, N]
};

/// Unscaled dot-product attention of queries q[Q, N, D] (or [N, D] for Q = 1)
/// over keys k[K, N, D] that double as values:
///   out_qn = sum_k softmax_k(k_kn . q_qn) k_kn.
template <class T>
Attended<T> cross_attend(const Var<T>& q, const Var<T>& k, const Mask& kmask) {
  detail::check_same_tape(q, k);
  const auto& qv = q.value();
  const auto& kv = k.value();
  if (kv.rank() != 3) throw ShapeError("cross_attend keys must be [K,N,D], got " + shape_str(kv.shape));
  const std::size_t nk = kv.dim(0), batch = kv.dim(1), d = kv.dim(2);
  std::size_t nq = 0;
  if (qv.rank() == 2 && qv.dim(0) == batch && qv.dim(1) == d) {
    nq = 1;
  } else if (qv.rank() == 3 && qv.dim(1) == batch && qv.dim(2) == d) {
    nq = qv.dim(0);
  } else {
    throw ShapeError("cross_attend: query shape " + shape_str(qv.shape) +
                     " does not match key shape " + shape_str(kv.shape));
  }
  detail::check_mask(kmask, nk * batch, "cross_attend");

  Tensor<T> weights({nq, nk, batch});
  Tensor<T> out(qv.shape);
  std::vector<T> sc(nk), w(nk);
  Mask colm(nk);
  for (std::size_t qi = 0; qi < nq; ++qi) {
    for (std::size_t n = 0; n < batch; ++n) {
      const T* qr = qv.data.data() + (qi * batch + n) * d;
      for (std::size_t j = 0; j < nk; ++j) {
        colm[j] = kmask[j * batch + n];
        sc[j] = colm[j] ? kernels::dot(kv.data.data() + (j * batch + n) * d, qr, d) : T(0);
      }
      softmax_row(sc.data(), colm.data(), w.data(), nk);
      T* o = out.data.data() + (qi * batch + n) * d;
      for (std::size_t j = 0; j < nk; ++j) {
        weights[(qi * nk + j) * batch + n] = w[j];
        if (!colm[j]) continue;
        const T* kr = kv.data.data() + (j * batch + n) * d;
        for (std::size_t c = 0; c < d; ++c) o[c] += w[j] * kr[c];
      }
    }
  }

  const std::size_t qid = q.id(), kid = k.id();
  Var<T> res = q.tape().push(
      std::move(out), {qid, kid},
      [=, wt = weights.data](Tape<T>& tp, std::size_t self) {
        const auto& g = tp.grad(self);
        const auto& qd = tp.value(qid).data;
        const auto& kd = tp.value(kid).data;
        auto& gq = tp.grad_buffer(qid);
        auto& gk = tp.grad_buffer(kid);
        std::vector<T> ds(nk);
        for (std::size_t qi = 0; qi < nq; ++qi) {
          for (std::size_t n = 0; n < batch; ++n) {
            const std::size_t qn = (qi * batch + n) * d;
            const T* gr = g.data() + qn;
            T inner = T(0);
            for (std::size_t j = 0; j < nk; ++j) {
              ds[j] = T(0);
              if (!kmask[j * batch + n]) continue;
              ds[j] = kernels::dot(gr, kd.data() + (j * batch + n) * d, d);
              inner += wt[(qi * nk + j) * batch + n] * ds[j];
            }
            for (std::size_t j = 0; j < nk; ++j) {
              if (!kmask[j * batch + n]) continue;
              const T a = wt[(qi * nk + j) * batch + n];
              const T dsj = a * (ds[j] - inner);
              const std::size_t kn = (j * batch + n) * d;
              for (std::size_t c = 0; c < d; ++c) {
                gk[kn + c] += a * gr[c] + dsj * qd[qn + c];
                gq[qn + c] += dsj * kd[kn + c];
              }
            }
          }
        }
      },
      "cross_attend");
  return {res, std::move(weights)};
}

/// Mean over the real positions of x[T, N, D] -> [N, D].
template <class T>
Var<T> masked_mean(const Var<T>& x, const Mask& mask) {
  const auto& xv = x.value();
  if (xv.rank() != 3) throw ShapeError("masked_mean expects [T,N,D], got " + shape_str(xv.shape));
  const std::size_t steps = xv.dim(0), batch = xv.dim(1), d = xv.dim(2);
  detail::check_mask(mask, steps * batch, "masked_mean");
  std::vector<T> count(batch, T(0));
  for (std::size_t t = 0; t < steps; ++t)
    for (std::size_t n = 0; n < batch; ++n) count[n] += mask[t * batch + n] ? T(1) : T(0);
  Tensor<T> out({batch, d});
  for (std::size_t n = 0; n < batch; ++n) {
    if (count[n] == T(0)) continue;
    T* o = out.data.data() + n * d;
    for (std::size_t t = 0; t < steps; ++t) {
      if (!mask[t * batch + n]) continue;
      const T* xr = xv.data.data() + (t * batch + n) * d;
      for (std::size_t j = 0; j < d; ++j) o[j] += xr[j];
    }
    for (std::size_t j = 0; j < d; ++j) o[j] /= count[n];
  }
  const std::size_t xi = x.id();
  return x.tape().push(std::move(out), {xi},
                       [=](Tape<T>& tp, std::size_t self) {
                         const auto& g = tp.grad(self);
                         auto& gx = tp.grad_buffer(xi);
                         for (std::size_t t = 0; t < steps; ++t)
                           for (std::size_t n = 0; n < batch; ++n) {
                             if (!mask[t * batch + n]) continue;
                             for (std::size_t j = 0; j < d; ++j)
                               gx[(t * batch + n) * d + j] += g[n * d + j] / count[n];
                           }
                       },
                       "masked_mean");
}

inline constexpr double kProbClamp = 1e-7;

/// Binary cross-entropy of one probability, clamped to [1e-7, 1 - 1e-7].
template <class T>
T bce_loss(T probability, int label) {
  const T eps = static_cast<T>(kProbClamp);
  const T p = std::clamp(probability, eps, T(1) - eps);
  return label ? -std::log(p) : -std::log(T(1) - p);
}

/// Mean binary cross-entropy of sigmoid(logits) against labels. The loss
/// value uses the clamped probability; the gradient w.r.t. each logit is
/// (p - y) / N with the unclamped p.
template <class T>
Var<T> bce_with_logits(const Var<T>& logits, const std::vector<T>& labels) {
  if (logits.size() != labels.size()) {
    throw ShapeError("bce_with_logits: " + std::to_string(logits.size()) + " logits for " +
                     std::to_string(labels.size()) + " labels");
  }
  const auto& lv = logits.value();
  const std::size_t n = labels.size();
  std::vector<T> prob(n);
  T total = T(0);
  for (std::size_t i = 0; i < n; ++i) {
    prob[i] = kernels::sigmoid(lv[i]);
    total += bce_loss(prob[i], labels[i] > T(0.5) ? 1 : 0);
  }
  const std::size_t li = logits.id();
  return logits.tape().push(Tensor<T>({1}, {total / static_cast<T>(n)}), {li},
                            [=, prob = std::move(prob)](Tape<T>& tp, std::size_t self) {
                              const T g = tp.grad(self)[0] / static_cast<T>(n);
                              auto& gl = tp.grad_buffer(li);
                              for (std::size_t i = 0; i < n; ++i) gl[i] += g * (prob[i] - labels[i]);
                            },
                            "bce_with_logits");
}

}  // namespace cda
