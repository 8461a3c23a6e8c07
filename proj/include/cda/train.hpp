// SPDX-License-Identifier: Apache-2.0
/**
 * @file   train.hpp
 * @brief  Mini-batch training with Adam, global-norm clipping and early
 *         stopping on the mean validation loss.
 */
#pragma once

#include <chrono>
#include <cmath>
#include <numeric>
#include <ostream>

#include <json.hpp>

#include "cda/adam.hpp"
#include "cda/siamese.hpp"

namespace cda {

struct TrainConfig {
  std::size_t batch_size = 256;
  std::size_t max_epochs = 100;
  std::size_t patience = 5;
  double learning_rate = 1e-5;
  double clip_norm = 5.0;
  std::uint64_t seed = 1;
  /// Vocabulary cap including the reserved ids (0 = no cap) and minimum count.
  std::size_t max_vocab = 0;
  std::size_t min_count = 1;
  std::size_t eval_batch_size = 256;
  std::size_t threads = 1;

  void validate() const {
    if (batch_size == 0) throw std::invalid_argument("batch_size must be at least 1");
    if (eval_batch_size == 0) throw std::invalid_argument("eval_batch_size must be at least 1");
    if (patience == 0) throw std::invalid_argument("patience must be at least 1");
    if (max_epochs == 0) throw std::invalid_argument("max_epochs must be at least 1");
    if (!(learning_rate >= 0.0)) throw std::invalid_argument("learning_rate must be nonnegative");
    if (!(clip_norm > 0.0)) throw std::invalid_argument("clip_norm must be positive");
  }

  bool operator==(const TrainConfig&) const = default;
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(TrainConfig, batch_size, max_epochs, patience, learning_rate, clip_norm,
                                   seed, max_vocab, min_count, eval_batch_size, threads)

struct EpochLog {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double dev_loss = 0.0;
  double dev_acc = 0.0;
  double seconds_train = 0.0;
  double seconds_infer = 0.0;
};

inline nlohmann::json to_json(const EpochLog& e) {
  return {{"epoch", e.epoch},       {"train_loss", e.train_loss},       {"dev_loss", e.dev_loss},
          {"dev_acc", e.dev_acc},   {"seconds_train", e.seconds_train}, {"seconds_infer", e.seconds_infer}};
}

struct TrainResult {
  std::vector<EpochLog> epochs;
  std::size_t best_epoch = 0;
  double best_dev_loss = 0.0;
  bool early_stopped = false;
};

/// Vocabulary over every token of both sides of the training pairs.
inline Vocabulary build_vocabulary(const std::vector<PairExample>& train, std::size_t max_size = 0,
                                   std::size_t min_count = 1) {
  std::vector<std::vector<std::string>> lists;
  for (const auto& p : train)
    for (const auto* d : {&p.doc_a, &p.doc_b})
      for (const auto& s : d->tokens) lists.push_back(s);
  return Vocabulary::build(lists, max_size, min_count);
}

inline void index_pairs(std::vector<PairExample>& pairs, const Vocabulary& vocab, const ModelConfig& config) {
  for (auto& p : pairs) {
    index_document(p.doc_a, vocab, config.max_tokens, config.max_sentences);
    index_document(p.doc_b, vocab, config.max_tokens, config.max_sentences);
  }
}

struct LossAndAccuracy {
  double loss = 0.0;
  double accuracy = 0.0;
};

/// Mean pair loss and accuracy without recording gradients.
template <class T>
LossAndAccuracy evaluate_loss(Model<T>& model, const std::vector<PairExample>& pairs, std::size_t batch_size,
                              const SentenceVectorStore* store = nullptr, std::size_t threads = 1) {
  if (pairs.empty()) throw DataError("evaluation set is empty");
  const auto scores = score_all(model, pairs, batch_size, store, threads);
  double loss = 0.0;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    loss += bce_loss(scores[i].probability, pairs[i].label);
    correct += scores[i].predicted_label == pairs[i].label;
  }
  const auto n = static_cast<double>(pairs.size());
  return {loss / n, static_cast<double>(correct) / n};
}

/// Trains `model` in place; on return it holds the parameters of the epoch
/// with the lowest dev loss. Each epoch is appended to `log` as one JSON line.
template <class T>
TrainResult train_model(Model<T>& model, const std::vector<PairExample>& train,
                        const std::vector<PairExample>& dev, const TrainConfig& cfg,
                        std::ostream* log = nullptr, const SentenceVectorStore* store = nullptr) {
  cfg.validate();
  if (train.empty()) throw DataError("training set is empty");
  if (dev.empty()) throw DataError("dev set is empty");
  using clock = std::chrono::steady_clock;
  auto params = model.param_ptrs();
  AdamState adam;
  adam.learning_rate = cfg.learning_rate;
  adam_init(adam, std::span<Parameter<T>* const>(params));
  std::mt19937_64 rng(cfg.seed);
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);

  TrainResult result;
  std::vector<Parameter<T>> best = model.params();
  std::size_t since_best = 0;
  std::vector<const PairExample*> chunk;
  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    EpochLog e;
    e.epoch = epoch;
    const auto t0 = clock::now();
    std::shuffle(order.begin(), order.end(), rng);
    double total = 0.0;
    for (std::size_t start = 0, b = 0; start < order.size(); start += cfg.batch_size, ++b) {
      chunk.clear();
      for (std::size_t i = start; i < std::min(order.size(), start + cfg.batch_size); ++i)
        chunk.push_back(&train[order[i]]);
      const auto batch = pad_batch(std::span<const PairExample* const>(chunk), model.config(), store);
      model.zero_grad();
      Tape<T> tape;
      auto loss = pair_loss(forward_pairs(tape, model, batch), batch.labels);
      const double value = static_cast<double>(loss.value()[0]);
      if (!std::isfinite(value)) {
        std::string ids;
        for (const auto* p : chunk) ids += (ids.empty() ? "" : ",") + p->id;
        throw NumericError("non-finite training loss in epoch " + std::to_string(epoch) + ", batch " +
                           std::to_string(b) + " (pairs " + ids + ")");
      }
      tape.backward(loss);
      clip_global_norm(std::span<Parameter<T>* const>(params), cfg.clip_norm);
      adam_step(std::span<Parameter<T>* const>(params), adam);
      total += value * static_cast<double>(chunk.size());
    }
    e.train_loss = total / static_cast<double>(train.size());
    const auto t1 = clock::now();
    const auto dev_eval = evaluate_loss(model, dev, cfg.eval_batch_size, store, cfg.threads);
    e.seconds_train = std::chrono::duration<double>(t1 - t0).count();
    e.seconds_infer = std::chrono::duration<double>(clock::now() - t1).count();
    e.dev_loss = dev_eval.loss;
    e.dev_acc = dev_eval.accuracy;
    if (!std::isfinite(e.dev_loss)) throw NumericError("non-finite dev loss in epoch " + std::to_string(epoch));
    result.epochs.push_back(e);
    if (log) *log << to_json(e).dump() << '\n' << std::flush;

    if (epoch == 1 || e.dev_loss < result.best_dev_loss) {
      result.best_dev_loss = e.dev_loss;
      result.best_epoch = epoch;
      best = model.params();
      since_best = 0;
    } else if (++since_best >= cfg.patience) {
      result.early_stopped = true;
      break;
    }
  }
  model.params() = std::move(best);
  return result;
}

}  // namespace cda
