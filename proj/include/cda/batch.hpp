// SPDX-License-Identifier: Apache-2.0
/**
 * @file   batch.hpp
 * @brief  Padding of documents and pairs into time-major batches with masks.
 */
#pragma once

#include <span>
#include <vector>

#include "cda/config.hpp"
#include "cda/data.hpp"
#include "cda/tensor.hpp"
#include "cda/vectors.hpp"

namespace cda {

/// N documents padded to a common sentence count S and token count T.
/// Token arrays are laid out [T, S, N] and sentence arrays [S, N], so a token
/// tensor row index is (t * S + s) * N + n.
struct DocBatch {
  std::size_t steps = 0;  ///< T
  std::size_t sents = 0;  ///< S
  std::size_t batch = 0;  ///< N
  std::vector<std::int32_t> ids;
  Mask token_mask;
  Mask sent_mask;
  /// [S, N, input_dim], precomputed encoders only.
  std::vector<double> sent_inputs;
  std::size_t input_dim = 0;
  std::vector<std::size_t> sentence_counts;
};

/// Pads indexed documents. With a vector store, sentence inputs are taken from
/// it (keyed by document id) instead of token ids.
inline DocBatch pad_documents(std::span<const Document* const> docs, const ModelConfig& config,
                              const SentenceVectorStore* store = nullptr) {
  if (docs.empty()) throw std::invalid_argument("pad_documents: empty batch");
  DocBatch b;
  b.batch = docs.size();
  const bool precomputed = config.encoder != EncoderKind::gru;
  if (precomputed && !store) throw DataError("precomputed encoders need a sentence-vector store");
  for (const auto* d : docs) {
    const std::size_t ns = precomputed ? std::min(d->sentence_count(), config.max_sentences)
                                       : d->sentences.size();
    if (ns == 0) throw DataError("document '" + d->id + "' is empty or has not been indexed");
    b.sentence_counts.push_back(ns);
    b.sents = std::max(b.sents, ns);
    if (!precomputed) {
      for (const auto& s : d->sentences) b.steps = std::max(b.steps, s.size());
    }
  }
  const std::size_t S = b.sents, N = b.batch;
  b.sent_mask.assign(S * N, 0);
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t s = 0; s < b.sentence_counts[n]; ++s) b.sent_mask[s * N + n] = 1;

  if (precomputed) {
    b.steps = 0;
    b.input_dim = store->width();
    b.sent_inputs.assign(S * N * b.input_dim, 0.0);
    for (std::size_t n = 0; n < N; ++n) {
      const auto& vecs = store->get(docs[n]->id, docs[n]->sentence_count());
      for (std::size_t s = 0; s < b.sentence_counts[n]; ++s)
        std::copy(vecs[s].begin(), vecs[s].end(), b.sent_inputs.begin() + (s * N + n) * b.input_dim);
    }
    return b;
  }

  const std::size_t T = b.steps;
  b.ids.assign(T * S * N, kPadId);
  b.token_mask.assign(T * S * N, 0);
  for (std::size_t n = 0; n < N; ++n) {
    const auto& sents = docs[n]->sentences;
    for (std::size_t s = 0; s < sents.size(); ++s) {
      if (sents[s].empty()) throw DataError("document '" + docs[n]->id + "' has an empty sentence");
      for (std::size_t t = 0; t < sents[s].size(); ++t) {
        const std::size_t k = (t * S + s) * N + n;
        b.ids[k] = sents[s][t];
        b.token_mask[k] = 1;
      }
    }
  }
  return b;
}

struct PairBatch {
  DocBatch a;
  DocBatch b;
  std::vector<double> labels;
};

/// Pads both sides of a nonempty list of pairs.
inline PairBatch pad_batch(std::span<const PairExample* const> pairs, const ModelConfig& config,
                           const SentenceVectorStore* store = nullptr) {
  if (pairs.empty()) throw std::invalid_argument("pad_batch: empty batch");
  std::vector<const Document*> as, bs;
  PairBatch out;
  for (const auto* p : pairs) {
    as.push_back(&p->doc_a);
    bs.push_back(&p->doc_b);
    out.labels.push_back(static_cast<double>(p->label));
  }
  out.a = pad_documents(as, config, store);
  out.b = pad_documents(bs, config, store);
  return out;
}

inline PairBatch pad_batch(const std::vector<PairExample>& pairs, const ModelConfig& config,
                           const SentenceVectorStore* store = nullptr) {
  std::vector<const PairExample*> ptrs;
  for (const auto& p : pairs) ptrs.push_back(&p);
  return pad_batch(std::span<const PairExample* const>(ptrs), config, store);
}

}  // namespace cda
