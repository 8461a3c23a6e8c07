// SPDX-License-Identifier: Apache-2.0
// Central finite-difference oracle for tape gradients (test-only).
#pragma once

#include <algorithm>
#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "cda/tape.hpp"

namespace cda::testing {

struct GradCheckResult {
  double worst_rel_error = 0.0;
  std::string worst_param;
};

/// Compares backward() against central differences for every parameter in
/// `params`. `build` constructs the scalar loss on the tape it is given.
/// Up to `max_probe` randomly chosen coordinates per parameter are probed; the
/// error for a parameter is |analytic - numeric|_2 / max(|analytic|_2, |numeric|_2)
/// over the probed coordinates.
template <class Build>
GradCheckResult check_gradients(const std::vector<Parameter<double>*>& params, Build build,
                                double step = 1e-3, std::size_t max_probe = 48,
                                std::uint64_t seed = 1) {
  for (auto* p : params) p->zero_grad();
  {
    Tape<double> tape;
    Var<double> loss = build(tape);
    tape.backward(loss);
  }
  std::mt19937_64 rng(seed);
  GradCheckResult res;
  for (auto* p : params) {
    std::vector<std::size_t> idx(p->value.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    if (idx.size() > max_probe) {
      std::shuffle(idx.begin(), idx.end(), rng);
      idx.resize(max_probe);
    }
    double diff = 0.0, na = 0.0, nn = 0.0;
    for (auto i : idx) {
      const double orig = p->value.data[i];
      p->value.data[i] = orig + step;
      double fp, fm;
      {
        Tape<double> t(false);
        fp = build(t).value()[0];
      }
      p->value.data[i] = orig - step;
      {
        Tape<double> t(false);
        fm = build(t).value()[0];
      }
      p->value.data[i] = orig;
      const double numeric = (fp - fm) / (2.0 * step);
      const double analytic = p->grad[i];
      diff += (analytic - numeric) * (analytic - numeric);
      na += analytic * analytic;
      nn += numeric * numeric;
    }
    const double denom = std::max({std::sqrt(na), std::sqrt(nn), 1e-10});
    const double rel = std::sqrt(diff) / denom;
    if (rel >= res.worst_rel_error) {
      res.worst_rel_error = rel;
      res.worst_param = p->name;
    }
  }
  return res;
}

template <class T>
Tensor<T> random_tensor(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  Tensor<T> t(std::move(shape));
  std::uniform_real_distribution<double> dist(lo, hi);
  for (auto& v : t.data) v = static_cast<T>(dist(rng));
  return t;
}

/// Overwrites every parameter with uniform values in [-scale, scale] so that
/// gradients are far from the finite-difference noise floor.
template <class Params>
void randomize_parameters(Params& params, std::uint64_t seed, double scale = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(-scale, scale);
  for (auto& p : params)
    for (auto& v : p.value.data) v = static_cast<typename decltype(p.value.data)::value_type>(dist(rng));
}

}  // namespace cda::testing
