// SPDX-License-Identifier: Apache-2.0
// Small random models and documents shared by the test binaries.
#pragma once

#include <random>
#include <string>
#include <vector>

#include "cda/batch.hpp"
#include "cda/model.hpp"

namespace cda::testing {

inline ModelConfig tiny_config(CdaVariant variant = CdaVariant::none,
                               Integration integration = Integration::concat) {
  ModelConfig c;
  c.vocab_size = 12;
  c.embed_dim = 3;
  c.hidden = 2;
  c.cda.variant = variant;
  c.cda.integration = integration;
  return c;
}

/// Document with already indexed random token ids (raw text is a placeholder).
inline Document random_document(std::mt19937_64& rng, const std::string& id, std::size_t vocab,
                                std::size_t max_sents, std::size_t max_tokens) {
  std::uniform_int_distribution<std::size_t> ns(1, max_sents), nt(1, max_tokens);
  std::uniform_int_distribution<std::int32_t> tok(2, static_cast<std::int32_t>(vocab) - 1);
  Document d;
  d.id = id;
  const std::size_t s = ns(rng);
  for (std::size_t i = 0; i < s; ++i) {
    std::vector<std::int32_t> ids(nt(rng));
    for (auto& v : ids) v = tok(rng);
    std::string raw;
    for (auto v : ids) raw += "w" + std::to_string(v) + " ";
    d.raw_sentences.push_back(raw);
    d.tokens.emplace_back(ids.size(), "w");
    d.sentences.push_back(std::move(ids));
  }
  return d;
}

inline PairExample random_pair(std::mt19937_64& rng, const std::string& id, std::size_t vocab,
                               std::size_t max_sents = 4, std::size_t max_tokens = 5) {
  PairExample p;
  p.id = id;
  p.doc_a = random_document(rng, id + "#a", vocab, max_sents, max_tokens);
  p.doc_b = random_document(rng, id + "#b", vocab, max_sents, max_tokens);
  p.label = static_cast<int>(rng() % 2);
  if (p.label) {
    p.gold_side = 'a';
    p.gold_sentences = {rng() % p.doc_a.sentence_count()};
  }
  return p;
}

/// Random precomputed sentence vectors for every document of the pairs.
inline SentenceVectorStore random_store(std::mt19937_64& rng, const std::vector<PairExample>& pairs,
                                        std::size_t width) {
  SentenceVectorStore store(width);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (const auto& p : pairs)
    for (const auto* d : {&p.doc_a, &p.doc_b}) {
      std::vector<std::vector<double>> v(d->sentence_count(), std::vector<double>(width));
      for (auto& row : v)
        for (auto& x : row) x = u(rng);
      store.add(d->id, std::move(v));
    }
  return store;
}

}  // namespace cda::testing
