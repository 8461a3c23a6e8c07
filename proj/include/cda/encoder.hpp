// SPDX-License-Identifier: Apache-2.0
/**
 * @file   encoder.hpp
 * @brief  Hierarchical attention document encoder.
 *
 * Word level: type embeddings -> bi-GRU token vectors -> attention pooling
 * into sentence vectors. Sentence level: bi-GRU over sentence vectors ->
 * attention pooling (separate parameters) into the document vector. The
 * precomputed encoders start from externally supplied sentence vectors.
 */
#pragma once

#include <optional>

#include "cda/batch.hpp"
#include "cda/model.hpp"
#include "cda/nn.hpp"

namespace cda {

/// Every intermediate representation of a batch of N documents.
template <class T>
struct EncodedDocs {
  std::size_t sents = 0;
  std::size_t batch = 0;
  /// Contextualized token vectors viewed as [T*S, N, D]; gru encoder only.
  std::optional<Var<T>> tokens;
  Mask token_mask;  ///< [T*S*N]
  Var<T> sent_pre;  ///< [S, N, D_in] sentence vectors before sentence-level contextualization
  /// [S, N, D] output of the first sentence GRU layer; precomputed encoder only.
  std::optional<Var<T>> sent_mid;
  Var<T> sent_ctx;  ///< [S, N, D] contextualized sentence vectors
  Var<T> doc;       ///< [N, D]
  std::optional<Var<T>> sent_tilde;  ///< [S, N, D] after sentence-level CDA (deep)
  std::optional<Var<T>> doc_tilde;   ///< [N, D] after document-level CDA
  Mask sent_mask;                    ///< [S*N]
  Tensor<T> word_alpha;  ///< [T, S*N]
  Tensor<T> sent_alpha;  ///< [S, N]
  /// Document-level CDA weights of this document's update over the other
  /// document's candidates: [1, S_other + 1, N], the last row being the other
  /// document vector.
  Tensor<T> cda_weights;

  /// Representation handed to the pair classifier.
  const Var<T>& final_doc() const { return doc_tilde ? *doc_tilde : doc; }
  /// Input of the sentence-level contextualizer.
  const Var<T>& sent_input() const { return sent_tilde ? *sent_tilde : sent_pre; }
};

namespace detail {

template <class T>
Var<T> gru_direction(Tape<T>& tape, Model<T>& model, const std::string& prefix, const Var<T>& x,
                     const Mask& mask, bool reverse) {
  const GruNames n(prefix);
  return gru_sequence(x, mask, tape.param(model.param(n.wx)), tape.param(model.param(n.wh)),
                      tape.param(model.param(n.bx)), tape.param(model.param(n.bh)), reverse);
}

}  // namespace detail

/// Bidirectional GRU: each output row is [h_forward ; h_backward].
template <class T>
Var<T> bigru_contextualize(Tape<T>& tape, Model<T>& model, const std::string& prefix,
                           const Var<T>& x, const Mask& mask) {
  auto fwd = detail::gru_direction(tape, model, prefix + ".fwd", x, mask, false);
  auto bwd = detail::gru_direction(tape, model, prefix + ".bwd", x, mask, true);
  return concat(fwd, bwd);
}

template <class T>
Pooled<T> attention_pool(Tape<T>& tape, Model<T>& model, const std::string& prefix, const Var<T>& x,
                         const Mask& mask) {
  return attention_pool(x, mask, tape.param(model.param(prefix + ".w")),
                        tape.param(model.param(prefix + ".b")), tape.param(model.param(prefix + ".u")));
}

/// Type-embedding lookup for every token slot: [T, S*N, E].
template <class T>
Var<T> embed_tokens(Tape<T>& tape, Model<T>& model, const DocBatch& batch) {
  return embedding_lookup(tape.param(model.param("embedding")), batch.ids,
                          {batch.steps, batch.sents * batch.batch}, batch.token_mask);
}

/// Sentence-level contextualization and pooling from sentence vectors
/// [S, N, D_in]; fills sent_mid, sent_ctx, doc and sent_alpha.
template <class T>
void encode_sentences(Tape<T>& tape, Model<T>& model, const Var<T>& sent_in, EncodedDocs<T>& enc) {
  const auto& cfg = model.config();
  if (cfg.encoder == EncoderKind::precomputed_avg) {
    enc.sent_ctx = sent_in;
    enc.doc = masked_mean(sent_in, enc.sent_mask);
    return;
  }
  if (cfg.encoder == EncoderKind::precomputed) {
    enc.sent_mid = bigru_contextualize(tape, model, "sent_gru", sent_in, enc.sent_mask);
    enc.sent_ctx = bigru_contextualize(tape, model, "sent_gru2", *enc.sent_mid, enc.sent_mask);
  } else {
    enc.sent_ctx = bigru_contextualize(tape, model, "sent_gru", sent_in, enc.sent_mask);
  }
  auto pooled = attention_pool(tape, model, "sent_attn", enc.sent_ctx, enc.sent_mask);
  enc.doc = pooled.out;
  enc.sent_alpha = std::move(pooled.alpha);
}

/// Encodes a padded batch without any cross-document attention.
template <class T>
EncodedDocs<T> encode_documents(Tape<T>& tape, Model<T>& model, const DocBatch& batch) {
  const auto& cfg = model.config();
  EncodedDocs<T> enc;
  enc.sents = batch.sents;
  enc.batch = batch.batch;
  enc.sent_mask = batch.sent_mask;
  const std::size_t S = batch.sents, N = batch.batch;
  if (cfg.encoder == EncoderKind::gru) {
    if (batch.ids.empty()) throw DataError("gru encoder needs token ids in the batch");
    auto emb = embed_tokens(tape, model, batch);
    auto tok = bigru_contextualize(tape, model, "word_gru", emb, batch.token_mask);
    auto pooled = attention_pool(tape, model, "word_attn", tok, batch.token_mask);
    const std::size_t d = model.width();
    enc.tokens = reshape(tok, {batch.steps * S, N, d});
    enc.token_mask = batch.token_mask;
    enc.sent_pre = reshape(pooled.out, {S, N, d});
    enc.word_alpha = std::move(pooled.alpha);
  } else {
    if (batch.input_dim != cfg.input_dim) {
      throw DataError("precomputed sentence vectors have width " + std::to_string(batch.input_dim) +
                      " but the model expects " + std::to_string(cfg.input_dim));
    }
    Tensor<T> in({S, N, batch.input_dim});
    for (std::size_t i = 0; i < in.size(); ++i) in[i] = static_cast<T>(batch.sent_inputs[i]);
    enc.sent_pre = tape.constant(std::move(in));
  }
  encode_sentences(tape, model, enc.sent_pre, enc);
  return enc;
}

/// Plain-value view of one document of an encoded batch.
template <class T>
struct EncodedDocument {
  std::vector<std::vector<std::vector<T>>> token_vectors;  ///< per sentence, per token
  std::vector<std::vector<T>> sent_pre, sent_mid, sent_ctx, sent_tilde;
  std::vector<T> doc, doc_tilde;
};

namespace detail {

template <class T>
std::vector<std::vector<T>> rows_of(const Var<T>& v, std::size_t n, std::size_t count,
                                    std::size_t batch) {
  const auto& t = v.value();
  const std::size_t d = t.cols();
  std::vector<std::vector<T>> out;
  for (std::size_t s = 0; s < count; ++s) {
    const auto* p = t.data.data() + (s * batch + n) * d;
    out.emplace_back(p, p + d);
  }
  return out;
}

}  // namespace detail

template <class T>
EncodedDocument<T> extract_document(const EncodedDocs<T>& enc, std::size_t n) {
  EncodedDocument<T> out;
  const std::size_t N = enc.batch, S = enc.sents;
  std::size_t ns = 0;
  while (ns < S && enc.sent_mask[ns * N + n]) ++ns;
  if (enc.tokens) {
    const auto& tv = enc.tokens->value();
    const std::size_t d = tv.cols(), T_ = tv.dim(0) / S;
    out.token_vectors.resize(ns);
    for (std::size_t s = 0; s < ns; ++s)
      for (std::size_t t = 0; t < T_; ++t) {
        const std::size_t k = (t * S + s) * N + n;
        if (!enc.token_mask[k]) break;
        const auto* p = tv.data.data() + k * d;
        out.token_vectors[s].emplace_back(p, p + d);
      }
  }
  out.sent_pre = detail::rows_of(enc.sent_pre, n, ns, N);
  if (enc.sent_mid) out.sent_mid = detail::rows_of(*enc.sent_mid, n, ns, N);
  out.sent_ctx = detail::rows_of(enc.sent_ctx, n, ns, N);
  if (enc.sent_tilde) out.sent_tilde = detail::rows_of(*enc.sent_tilde, n, ns, N);
  out.doc = detail::rows_of(enc.doc, n, 1, N)[0];
  if (enc.doc_tilde) out.doc_tilde = detail::rows_of(*enc.doc_tilde, n, 1, N)[0];
  return out;
}

}  // namespace cda
