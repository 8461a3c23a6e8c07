// SPDX-License-Identifier: Apache-2.0
/**
 * @file   model.hpp
 * @brief  Named parameter store for the Siamese HAN/CDA model, its
 *         initialization and parameter accounting.
 */
#pragma once

#include <cmath>
#include <map>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "cda/config.hpp"
#include "cda/tape.hpp"

namespace cda {

/// Parameters of one GRU direction: input weight [3h,in], recurrent weight
/// [3h,h] and the two biases.
struct GruNames {
  std::string wx, wh, bx, bh;
  explicit GruNames(const std::string& prefix)
      : wx(prefix + ".wx"), wh(prefix + ".wh"), bx(prefix + ".bx"), bh(prefix + ".bh") {}
};

template <class T>
class Model {
 public:
  Model() = default;

  /// Allocates every parameter the configuration needs and initializes it from
  /// config.seed: weights uniform in +-1/sqrt(fan_in), biases zero, embedding
  /// rows uniform in +-0.5.
  explicit Model(ModelConfig config) : config_(std::move(config)) {
    config_.validate();
    build();
    initialize(config_.seed);
  }

  const ModelConfig& config() const { return config_; }
  std::size_t width() const { return config_.width(); }

  bool has(const std::string& name) const { return index_.count(name) != 0; }

  Parameter<T>& param(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::out_of_range("model has no parameter '" + name + "'");
    return params_[it->second];
  }
  const Parameter<T>& param(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::out_of_range("model has no parameter '" + name + "'");
    return params_[it->second];
  }

  std::vector<Parameter<T>>& params() { return params_; }
  const std::vector<Parameter<T>>& params() const { return params_; }

  std::vector<Parameter<T>*> param_ptrs() {
    std::vector<Parameter<T>*> out;
    for (auto& p : params_) out.push_back(&p);
    return out;
  }

  void zero_grad() {
    for (auto& p : params_) p.zero_grad();
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.value.size();
    return n;
  }

  /// Parameter counts grouped by component (the name prefix before the first '.').
  std::map<std::string, std::size_t> component_counts() const {
    std::map<std::string, std::size_t> out;
    for (const auto& p : params_) out[p.name.substr(0, p.name.find('.'))] += p.value.size();
    return out;
  }

  void initialize(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    for (auto& p : params_) {
      const auto kind = kinds_.at(p.name);
      std::fill(p.grad.begin(), p.grad.end(), T(0));
      if (kind == Kind::bias) {
        std::fill(p.value.data.begin(), p.value.data.end(), T(0));
        continue;
      }
      double bound = 0.5;
      if (kind == Kind::weight) bound = 1.0 / std::sqrt(static_cast<double>(p.value.cols()));
      if (kind == Kind::context) bound = 1.0 / std::sqrt(static_cast<double>(p.value.size()));
      std::uniform_real_distribution<double> dist(-bound, bound);
      for (auto& v : p.value.data) v = static_cast<T>(dist(rng));
    }
  }

  /// Value-converting copy (e.g. a float model evaluated in double precision).
  template <class U>
  Model<U> cast() const {
    Model<U> out(config_);
    for (const auto& p : params_) {
      auto& q = out.param(p.name);
      for (std::size_t i = 0; i < p.value.size(); ++i) q.value.data[i] = static_cast<U>(p.value.data[i]);
    }
    return out;
  }

 private:
  enum class Kind { weight, bias, context, embedding };

  void add(const std::string& name, Shape shape, Kind kind) {
    index_.emplace(name, params_.size());
    kinds_.emplace(name, kind);
    params_.emplace_back(name, Tensor<T>(std::move(shape)));
  }

  void add_gru(const std::string& prefix, std::size_t in, std::size_t h) {
    const GruNames n(prefix);
    add(n.wx, {3 * h, in}, Kind::weight);
    add(n.wh, {3 * h, h}, Kind::weight);
    add(n.bx, {3 * h}, Kind::bias);
    add(n.bh, {3 * h}, Kind::bias);
  }

  void add_bigru(const std::string& prefix, std::size_t in, std::size_t h) {
    add_gru(prefix + ".fwd", in, h);
    add_gru(prefix + ".bwd", in, h);
  }

  void add_attention(const std::string& prefix, std::size_t d) {
    add(prefix + ".w", {d, d}, Kind::weight);
    add(prefix + ".b", {d}, Kind::bias);
    add(prefix + ".u", {d}, Kind::context);
  }

  void build() {
    const std::size_t h = config_.hidden, d = config_.width();
    switch (config_.encoder) {
      case EncoderKind::gru:
        add("embedding", {config_.vocab_size, config_.embed_dim}, Kind::embedding);
        add_bigru("word_gru", config_.embed_dim, h);
        add_attention("word_attn", d);
        add_bigru("sent_gru", d, h);
        add_attention("sent_attn", d);
        break;
      case EncoderKind::precomputed:
        add_bigru("sent_gru", config_.input_dim, h);
        add_bigru("sent_gru2", d, h);
        add_attention("sent_attn", d);
        break;
      case EncoderKind::precomputed_avg:
        break;
    }
    if (config_.cda.integration == Integration::concat) {
      if (config_.cda.variant == CdaVariant::deep) {
        add("cda_sent.w", {d, 2 * d}, Kind::weight);
        add("cda_sent.b", {d}, Kind::bias);
      }
      if (config_.cda.variant != CdaVariant::none) {
        add("cda_doc.w", {d, 2 * d}, Kind::weight);
        add("cda_doc.b", {d}, Kind::bias);
      }
    }
    add("clf.hidden.w", {d, 2 * d}, Kind::weight);
    add("clf.hidden.b", {d}, Kind::bias);
    add("clf.out.w", {1, d}, Kind::weight);
    add("clf.out.b", {1}, Kind::bias);
  }

  ModelConfig config_;
  std::vector<Parameter<T>> params_;
  std::map<std::string, std::size_t> index_;
  std::map<std::string, Kind> kinds_;
};

struct ParameterReport {
  std::map<std::string, std::size_t> components;
  std::size_t total = 0;
  /// Parameters added by CDA relative to the same config with variant=none.
  std::size_t cda_delta = 0;
};

/// Exact parameter accounting for a configuration.
inline ParameterReport count_parameters(const ModelConfig& config) {
  ParameterReport r;
  Model<float> m(config);
  r.components = m.component_counts();
  r.total = m.parameter_count();
  ModelConfig base = config;
  base.cda.variant = CdaVariant::none;
  r.cda_delta = r.total - Model<float>(base).parameter_count();
  return r;
}

}  // namespace cda
