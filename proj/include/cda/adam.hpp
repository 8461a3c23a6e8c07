// SPDX-License-Identifier: Apache-2.0
/**
 * @file   adam.hpp
 * @brief  Bias-corrected Adam and global-norm gradient clipping.
 */
#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "cda/tape.hpp"

namespace cda {

struct AdamState {
  std::size_t step = 0;
  std::vector<std::vector<double>> first_moment;
  std::vector<std::vector<double>> second_moment;
  double learning_rate = 1e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  AdamState() = default;
  explicit AdamState(double lr) : learning_rate(lr) {}
};

/// Sizes the moment buffers for `params` (idempotent for matching sizes).
template <class T>
void adam_init(AdamState& state, std::span<Parameter<T>* const> params) {
  state.first_moment.resize(params.size());
  state.second_moment.resize(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    state.first_moment[i].assign(params[i]->value.size(), 0.0);
    state.second_moment[i].assign(params[i]->value.size(), 0.0);
  }
  state.step = 0;
}

/// One Adam update using each parameter's accumulated grad.
/// Throws NumericError naming the first parameter with a NaN gradient; in that
/// case no parameter is modified.
template <class T>
void adam_step(std::span<Parameter<T>* const> params, AdamState& state) {
  if (state.first_moment.size() != params.size()) {
    throw std::invalid_argument("adam_step: optimizer state tracks " +
                                std::to_string(state.first_moment.size()) + " parameters, got " +
                                std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto* p = params[i];
    if (state.first_moment[i].size() != p->value.size() || p->grad.size() != p->value.size()) {
      throw std::invalid_argument("adam_step: state size mismatch for parameter '" + p->name + "'");
    }
    for (auto g : p->grad) {
      if (std::isnan(g)) throw NumericError("NaN gradient in parameter '" + p->name + "'");
    }
  }
  ++state.step;
  const double b1 = state.beta1, b2 = state.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto* p = params[i];
    auto& m = state.first_moment[i];
    auto& v = state.second_moment[i];
    for (std::size_t j = 0; j < p->value.size(); ++j) {
      const double g = static_cast<double>(p->grad[j]);
      m[j] = b1 * m[j] + (1.0 - b1) * g;
      v[j] = b2 * v[j] + (1.0 - b2) * g * g;
      const double mhat = m[j] / c1;
      const double vhat = v[j] / c2;
      p->value.data[j] -= static_cast<T>(state.learning_rate * mhat / (std::sqrt(vhat) + state.epsilon));
    }
  }
}

/// Rescales all grads so their joint L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
template <class T>
double clip_global_norm(std::span<Parameter<T>* const> params, double max_norm) {
  double sq = 0.0;
  for (const auto* p : params)
    for (auto g : p->grad) sq += static_cast<double>(g) * static_cast<double>(g);
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const T scale = static_cast<T>(max_norm / norm);
    for (auto* p : params)
      for (auto& g : p->grad) g *= scale;
  }
  return norm;
}

}  // namespace cda
