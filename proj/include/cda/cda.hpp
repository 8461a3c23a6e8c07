// SPDX-License-Identifier: Apache-2.0
/**
 * @file   cda.hpp
 * @brief  Cross-document attention.
 *
 * Document level (shallow): d_A attends over the other document's candidate
 * sentence vectors plus its document vector with unscaled dot-product scores;
 * the attended vector is integrated with d_A either by concatenation and an
 * affine projection back to the model width, or by addition. Deep additionally
 * updates every sentence vector of A by attending over B's token and sentence
 * vectors before the sentence-level contextualizer runs. Both directions
 * share parameters and use the other document's pre-CDA vectors as keys.
 */
#pragma once

#include "cda/encoder.hpp"

namespace cda {

namespace detail {

template <class T>
void require_same_width(const EncodedDocs<T>& a, const EncodedDocs<T>& b) {
  const std::size_t wa = a.doc.value().cols(), wb = b.doc.value().cols();
  if (wa != wb || a.batch != b.batch) {
    throw ShapeError("cross-document attention needs matching encodings, got width " +
                     std::to_string(wa) + " vs " + std::to_string(wb) + " and batch " +
                     std::to_string(a.batch) + " vs " + std::to_string(b.batch));
  }
}

}  // namespace detail

/// Combines a vector with its attended context: affine([base ; attended]) for
/// concat integration, base + attended for add integration.
template <class T>
Var<T> integrate(Tape<T>& tape, Model<T>& model, const std::string& level, const Var<T>& base,
                 const Var<T>& attended) {
  if (model.config().cda.integration == Integration::add) return add(base, attended);
  return affine(concat(base, attended), tape.param(model.param(level + ".w")),
                tape.param(model.param(level + ".b")));
}

/// Sentence vectors of a document that the other document attends over.
template <class T>
const Var<T>& candidate_sentences(const EncodedDocs<T>& enc, CandidateSource source) {
  if (source == CandidateSource::post_context) return enc.sent_ctx;
  return enc.sent_mid ? *enc.sent_mid : enc.sent_input();
}

/// Keys for updating the other document: candidate sentences followed by the
/// document vector, [S + 1, N, D], and the matching mask.
template <class T>
std::pair<Var<T>, Mask> document_candidates(const EncodedDocs<T>& enc, CandidateSource source) {
  const auto& sents = candidate_sentences(enc, source);
  const std::size_t N = enc.batch, D = enc.doc.value().cols();
  auto keys = concat_first(sents, reshape(enc.doc, {1, N, D}));
  Mask mask = enc.sent_mask;
  mask.insert(mask.end(), N, 1);
  return {keys, std::move(mask)};
}

/// Document-level CDA in both directions; fills doc_tilde and cda_weights.
template <class T>
void shallow_cda(Tape<T>& tape, Model<T>& model, EncodedDocs<T>& a, EncodedDocs<T>& b) {
  detail::require_same_width(a, b);
  const auto src = model.config().cda.candidate_source;
  auto [keys_b, mask_b] = document_candidates(b, src);
  auto [keys_a, mask_a] = document_candidates(a, src);
  auto att_a = cross_attend(a.doc, keys_b, mask_b);
  auto att_b = cross_attend(b.doc, keys_a, mask_a);
  a.doc_tilde = integrate(tape, model, "cda_doc", a.doc, att_a.out);
  b.doc_tilde = integrate(tape, model, "cda_doc", b.doc, att_b.out);
  a.cda_weights = std::move(att_a.weights);
  b.cda_weights = std::move(att_b.weights);
}

/// Sentence-level CDA, re-encoding from the updated sentence vectors, then
/// document-level CDA on top.
template <class T>
void deep_cda(Tape<T>& tape, Model<T>& model, EncodedDocs<T>& a, EncodedDocs<T>& b) {
  if (!a.tokens || !b.tokens) {
    throw std::invalid_argument(
        "deep CDA needs token vectors on both sides; use the gru encoder (encoder=gru)");
  }
  detail::require_same_width(a, b);
  const auto src = model.config().cda.candidate_source;
  auto keys_for = [&](const EncodedDocs<T>& enc) {
    const auto& sents = src == CandidateSource::post_context ? enc.sent_ctx : enc.sent_pre;
    Mask mask = enc.token_mask;
    mask.insert(mask.end(), enc.sent_mask.begin(), enc.sent_mask.end());
    return std::make_pair(concat_first(*enc.tokens, sents), std::move(mask));
  };
  auto [keys_b, mask_b] = keys_for(b);
  auto [keys_a, mask_a] = keys_for(a);
  auto att_a = cross_attend(a.sent_pre, keys_b, mask_b);
  auto att_b = cross_attend(b.sent_pre, keys_a, mask_a);
  a.sent_tilde = integrate(tape, model, "cda_sent", a.sent_pre, att_a.out);
  b.sent_tilde = integrate(tape, model, "cda_sent", b.sent_pre, att_b.out);
  encode_sentences(tape, model, *a.sent_tilde, a);
  encode_sentences(tape, model, *b.sent_tilde, b);
  shallow_cda(tape, model, a, b);
}

template <class T>
void apply_cda(Tape<T>& tape, Model<T>& model, EncodedDocs<T>& a, EncodedDocs<T>& b) {
  switch (model.config().cda.variant) {
    case CdaVariant::none:
      return;
    case CdaVariant::shallow:
      return shallow_cda(tape, model, a, b);
    case CdaVariant::deep:
      return deep_cda(tape, model, a, b);
  }
}

}  // namespace cda
