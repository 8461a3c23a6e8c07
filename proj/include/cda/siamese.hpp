// SPDX-License-Identifier: Apache-2.0
/**
 * @file   siamese.hpp
 * @brief  Pair scoring: shared encoder for both sides, optional cross-document
 *         attention, then [d_A ; d_B] -> affine -> relu -> affine -> sigmoid.
 */
#pragma once

#include <atomic>
#include <exception>
#include <mutex>
#include <span>
#include <thread>

#include "cda/cda.hpp"

namespace cda {

/// Graph of one padded pair batch.
template <class T>
struct PairForward {
  EncodedDocs<T> a;
  EncodedDocs<T> b;
  Var<T> logits;  ///< [N, 1]
};

template <class T>
PairForward<T> forward_pairs(Tape<T>& tape, Model<T>& model, const PairBatch& batch) {
  PairForward<T> f;
  f.a = encode_documents(tape, model, batch.a);
  f.b = encode_documents(tape, model, batch.b);
  apply_cda(tape, model, f.a, f.b);
  auto rep = concat(f.a.final_doc(), f.b.final_doc());
  auto hidden = relu(affine(rep, tape.param(model.param("clf.hidden.w")),
                            tape.param(model.param("clf.hidden.b"))));
  f.logits = affine(hidden, tape.param(model.param("clf.out.w")), tape.param(model.param("clf.out.b")));
  return f;
}

/// Mean binary cross-entropy of the batch.
template <class T>
Var<T> pair_loss(const PairForward<T>& f, const std::vector<double>& labels) {
  std::vector<T> y(labels.begin(), labels.end());
  return bce_with_logits(f.logits, y);
}

/// Sentence vectors and target vector used to localize one side of a pair.
struct AlignmentView {
  std::vector<std::vector<double>> sentences;
  std::vector<double> target;  ///< vector of the other document
};

struct PairScore {
  double probability = 0.5;
  int predicted_label = 0;
  std::vector<double> doc_tilde_a;
  std::vector<double> doc_tilde_b;
  AlignmentView align_a;  ///< localizing inside A
  AlignmentView align_b;  ///< localizing inside B
};

namespace detail {

template <class T>
std::vector<double> to_double(const std::vector<T>& v) {
  return std::vector<double>(v.begin(), v.end());
}

template <class T>
std::vector<std::vector<double>> to_double(const std::vector<std::vector<T>>& v) {
  std::vector<std::vector<double>> out;
  out.reserve(v.size());
  for (const auto& r : v) out.push_back(to_double(r));
  return out;
}

/// Sentence vectors scored for localization: the vectors CDA attends over, or
/// the contextualized sentence vectors for the baseline.
template <class T>
const Var<T>& localization_sentences(const Model<T>& model, const EncodedDocs<T>& enc) {
  if (model.config().cda.variant == CdaVariant::none) return enc.sent_ctx;
  return candidate_sentences(enc, model.config().cda.candidate_source);
}

}  // namespace detail

/// Scores a batch of pairs on a non-recording tape.
template <class T>
std::vector<PairScore> score_pairs(Model<T>& model, std::span<const PairExample* const> pairs,
                                   const SentenceVectorStore* store = nullptr) {
  Tape<T> tape(false);
  const auto batch = pad_batch(pairs, model.config(), store);
  auto f = forward_pairs(tape, model, batch);
  const auto& cfg = model.config();
  const std::size_t N = pairs.size();
  const bool final_target = cfg.s2d_target == S2dTarget::final;
  const auto& sa = detail::localization_sentences(model, f.a);
  const auto& sb = detail::localization_sentences(model, f.b);
  const auto& ta = final_target ? f.a.final_doc() : f.a.doc;
  const auto& tb = final_target ? f.b.final_doc() : f.b.doc;
  std::vector<PairScore> out(N);
  for (std::size_t n = 0; n < N; ++n) {
    auto& s = out[n];
    s.probability = static_cast<double>(kernels::sigmoid(f.logits.value()[n]));
    s.predicted_label = s.probability >= cfg.threshold ? 1 : 0;
    s.doc_tilde_a = detail::to_double(detail::rows_of(f.a.final_doc(), n, 1, N)[0]);
    s.doc_tilde_b = detail::to_double(detail::rows_of(f.b.final_doc(), n, 1, N)[0]);
    s.align_a.sentences = detail::to_double(detail::rows_of(sa, n, batch.a.sentence_counts[n], N));
    s.align_b.sentences = detail::to_double(detail::rows_of(sb, n, batch.b.sentence_counts[n], N));
    s.align_a.target = detail::to_double(detail::rows_of(tb, n, 1, N)[0]);
    s.align_b.target = detail::to_double(detail::rows_of(ta, n, 1, N)[0]);
  }
  return out;
}

/// Scores pairs in chunks of `batch_size`, spreading chunks over `threads`
/// workers. Results do not depend on the thread count.
template <class T>
std::vector<PairScore> score_all(Model<T>& model, const std::vector<PairExample>& pairs,
                                 std::size_t batch_size, const SentenceVectorStore* store = nullptr,
                                 std::size_t threads = 1) {
  if (batch_size == 0) throw std::invalid_argument("batch_size must be positive");
  std::vector<PairScore> out(pairs.size());
  const std::size_t chunks = (pairs.size() + batch_size - 1) / batch_size;
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto worker = [&] {
    std::vector<const PairExample*> chunk;
    for (std::size_t c = next++; c < chunks; c = next++) {
      try {
        chunk.clear();
        const std::size_t lo = c * batch_size, hi = std::min(pairs.size(), lo + batch_size);
        for (std::size_t j = lo; j < hi; ++j) chunk.push_back(&pairs[j]);
        auto s = score_pairs(model, std::span<const PairExample* const>(chunk), store);
        std::move(s.begin(), s.end(), out.begin() + static_cast<std::ptrdiff_t>(lo));
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
        next = chunks;
      }
    }
  };
  const std::size_t n_threads = std::max<std::size_t>(1, std::min(threads, chunks));
  if (n_threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t i = 0; i < n_threads; ++i) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (error) std::rethrow_exception(error);
  return out;
}

template <class T>
PairScore score_pair(Model<T>& model, const PairExample& pair, const SentenceVectorStore* store = nullptr) {
  const PairExample* p = &pair;
  return score_pairs(model, std::span<const PairExample* const>(&p, 1), store)[0];
}

}  // namespace cda
