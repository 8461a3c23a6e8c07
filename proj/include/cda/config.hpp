// SPDX-License-Identifier: Apache-2.0
/**
 * @file   config.hpp
 * @brief  Model and cross-document attention configuration.
 */
#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>

#include <json.hpp>

namespace cda {

enum class CdaVariant { none, shallow, deep };
enum class Integration { concat, add };
/// Which sentence vectors of the other document serve as attention candidates.
enum class CandidateSource { pre_context, post_context };
/// gru: word-level bi-GRU HAN. precomputed: sentence vectors from a file,
/// then a two-layer sentence bi-GRU and attention pooling. precomputed_avg:
/// document vector is the mean of the precomputed sentence vectors.
enum class EncoderKind { gru, precomputed, precomputed_avg };
/// Document vector the S2D scorers compare sentences against.
enum class S2dTarget { pre_cda, final };

NLOHMANN_JSON_SERIALIZE_ENUM(CdaVariant, {{CdaVariant::none, "none"},
                                          {CdaVariant::shallow, "shallow"},
                                          {CdaVariant::deep, "deep"}})
NLOHMANN_JSON_SERIALIZE_ENUM(Integration, {{Integration::concat, "concat"}, {Integration::add, "add"}})
NLOHMANN_JSON_SERIALIZE_ENUM(CandidateSource, {{CandidateSource::pre_context, "pre_context"},
                                               {CandidateSource::post_context, "post_context"}})
NLOHMANN_JSON_SERIALIZE_ENUM(EncoderKind, {{EncoderKind::gru, "gru"},
                                           {EncoderKind::precomputed, "precomputed"},
                                           {EncoderKind::precomputed_avg, "precomputed_avg"}})
NLOHMANN_JSON_SERIALIZE_ENUM(S2dTarget, {{S2dTarget::pre_cda, "pre_cda"}, {S2dTarget::final, "final"}})

template <class E>
E parse_enum(const std::string& text, const char* what) {
  const nlohmann::json j = text;
  const E value = j.get<E>();
  // The serializer maps unknown strings to the first enumerator.
  if (nlohmann::json(value).get<std::string>() != text) {
    throw std::invalid_argument(std::string("unknown ") + what + " '" + text + "'");
  }
  return value;
}

template <class E>
std::string enum_name(E value) {
  return nlohmann::json(value).get<std::string>();
}

struct CdaConfig {
  CdaVariant variant = CdaVariant::none;
  Integration integration = Integration::concat;
  CandidateSource candidate_source = CandidateSource::pre_context;

  bool operator==(const CdaConfig&) const = default;
};

struct ModelConfig {
  EncoderKind encoder = EncoderKind::gru;
  std::size_t vocab_size = 2;
  std::size_t embed_dim = 50;
  std::size_t hidden = 50;
  /// Width of precomputed sentence vectors (precomputed encoders only).
  std::size_t input_dim = 0;
  CdaConfig cda;
  std::size_t max_tokens = 64;
  std::size_t max_sentences = 64;
  double threshold = 0.5;
  S2dTarget s2d_target = S2dTarget::pre_cda;
  std::uint64_t seed = 1;

  /// Width of sentence and document vectors.
  std::size_t width() const {
    return encoder == EncoderKind::precomputed_avg ? input_dim : 2 * hidden;
  }

  void validate() const {
    if (encoder == EncoderKind::gru) {
      if (vocab_size < 2) throw std::invalid_argument("vocab_size must include the reserved ids");
      if (embed_dim == 0) throw std::invalid_argument("embed_dim must be positive");
    } else if (input_dim == 0) {
      throw std::invalid_argument("precomputed encoders need input_dim > 0");
    }
    if (hidden == 0) throw std::invalid_argument("hidden must be positive");
    if (cda.variant == CdaVariant::deep && encoder != EncoderKind::gru) {
      throw std::invalid_argument(
          "deep CDA needs word-level token vectors; use encoder=gru (it does not apply to "
          "precomputed sentence vectors)");
    }
    if (encoder == EncoderKind::precomputed_avg && cda.variant != CdaVariant::none) {
      throw std::invalid_argument("precomputed_avg has no trainable encoder; CDA is not supported");
    }
    if (max_tokens == 0 || max_sentences == 0) throw std::invalid_argument("max lengths must be positive");
    if (!(threshold > 0.0 && threshold < 1.0)) throw std::invalid_argument("threshold must be in (0,1)");
  }

  bool operator==(const ModelConfig&) const = default;
};

inline void to_json(nlohmann::json& j, const CdaConfig& c) {
  j = {{"variant", c.variant}, {"integration", c.integration}, {"candidate_source", c.candidate_source}};
}

inline void from_json(const nlohmann::json& j, CdaConfig& c) {
  c.variant = parse_enum<CdaVariant>(j.at("variant").get<std::string>(), "cda variant");
  c.integration = parse_enum<Integration>(j.at("integration").get<std::string>(), "integration");
  c.candidate_source =
      parse_enum<CandidateSource>(j.at("candidate_source").get<std::string>(), "candidate source");
}

inline void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = {{"encoder", c.encoder},     {"vocab_size", c.vocab_size},   {"embed_dim", c.embed_dim},
       {"hidden", c.hidden},       {"input_dim", c.input_dim},     {"cda", c.cda},
       {"max_tokens", c.max_tokens}, {"max_sentences", c.max_sentences},
       {"threshold", c.threshold}, {"s2d_target", c.s2d_target},   {"seed", c.seed}};
}

inline void from_json(const nlohmann::json& j, ModelConfig& c) {
  c.encoder = parse_enum<EncoderKind>(j.at("encoder").get<std::string>(), "encoder");
  j.at("vocab_size").get_to(c.vocab_size);
  j.at("embed_dim").get_to(c.embed_dim);
  j.at("hidden").get_to(c.hidden);
  j.at("input_dim").get_to(c.input_dim);
  j.at("cda").get_to(c.cda);
  j.at("max_tokens").get_to(c.max_tokens);
  j.at("max_sentences").get_to(c.max_sentences);
  j.at("threshold").get_to(c.threshold);
  c.s2d_target = parse_enum<S2dTarget>(j.at("s2d_target").get<std::string>(), "s2d target");
  j.at("seed").get_to(c.seed);
}

}  // namespace cda
