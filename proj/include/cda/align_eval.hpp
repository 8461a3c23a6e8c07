// SPDX-License-Identifier: Apache-2.0
/**
 * @file   align_eval.hpp
 * @brief  Sentence-to-document alignment scoring, ranking metrics and the
 *         joint document/sentence evaluation protocol.
 */
#pragma once

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <map>
#include <numeric>
#include <random>
#include <sstream>

#include <json.hpp>

#include "cda/siamese.hpp"

namespace cda {

enum class Scorer { attention, cosine, random };
NLOHMANN_JSON_SERIALIZE_ENUM(Scorer, {{Scorer::attention, "attention"},
                                      {Scorer::cosine, "cosine"},
                                      {Scorer::random, "random"}})

/// P@N denominator: min(N, |gold|) or N.
enum class PrecisionNorm { min_gold, n };
NLOHMANN_JSON_SERIALIZE_ENUM(PrecisionNorm, {{PrecisionNorm::min_gold, "min_gold"}, {PrecisionNorm::n, "n"}})

inline constexpr int kPrecisionCutoffs[] = {1, 5, 10};

/// Softmax over candidates of v'^T d; entry i is the score of candidates[i].
inline std::vector<double> att_scores(const std::vector<std::vector<double>>& candidates,
                                      const std::vector<double>& target) {
  if (candidates.empty()) throw std::invalid_argument("att_scores: no candidates");
  std::vector<double> logits(candidates.size());
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    if (candidates[i].size() != target.size()) {
      throw ShapeError("att_scores: candidate width " + std::to_string(candidates[i].size()) +
                       " vs target width " + std::to_string(target.size()));
    }
    logits[i] = kernels::dot(candidates[i].data(), target.data(), target.size());
  }
  std::vector<double> out(logits.size());
  const Mask all(logits.size(), 1);
  softmax_row(logits.data(), all.data(), out.data(), logits.size());
  return out;
}

/// Cosine similarity; 0 when either vector is zero.
inline double cos_score(const std::vector<double>& v, const std::vector<double>& d) {
  if (v.size() != d.size()) {
    throw ShapeError("cos_score: widths " + std::to_string(v.size()) + " and " + std::to_string(d.size()));
  }
  const double nv = std::sqrt(kernels::dot(v.data(), v.data(), v.size()));
  const double nd = std::sqrt(kernels::dot(d.data(), d.data(), d.size()));
  if (nv == 0.0 || nd == 0.0) return 0.0;
  return kernels::dot(v.data(), d.data(), v.size()) / (nv * nd);
}

/// Indices ordered by descending score, ties by ascending index.
inline std::vector<std::size_t> rank_by_score(const std::vector<double>& scores) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t x, std::size_t y) { return scores[x] > scores[y]; });
  return order;
}

struct AlignmentResult {
  std::string pair_id;
  std::vector<double> sentence_scores;
  std::vector<std::size_t> ranking;
  std::vector<std::size_t> gold;
  bool d2d_correct = true;
  char side = 'a';
  double probability = 0.5;

  /// 1-based rank of the first gold sentence, 0 if none is ranked.
  std::size_t first_gold_rank() const {
    for (std::size_t r = 0; r < ranking.size(); ++r)
      if (std::find(gold.begin(), gold.end(), ranking[r]) != gold.end()) return r + 1;
    return 0;
  }
};

inline nlohmann::json to_json(const AlignmentResult& r) {
  return {{"pair_id", r.pair_id},   {"side", std::string(1, r.side)},
          {"sentence_scores", r.sentence_scores}, {"ranking", r.ranking},
          {"gold", r.gold},         {"d2d_correct", r.d2d_correct},
          {"probability", r.probability}};
}

inline AlignmentResult alignment_from_json(const nlohmann::json& j) {
  AlignmentResult r;
  j.at("pair_id").get_to(r.pair_id);
  j.at("sentence_scores").get_to(r.sentence_scores);
  j.at("ranking").get_to(r.ranking);
  j.at("gold").get_to(r.gold);
  j.at("d2d_correct").get_to(r.d2d_correct);
  if (j.contains("side")) r.side = j["side"].get<std::string>().at(0);
  if (j.contains("probability")) j["probability"].get_to(r.probability);
  return r;
}

/// Scores the localization side of a positive pair.
inline AlignmentResult align_pair(const PairExample& pair, const PairScore& score, Scorer scorer,
                                  std::mt19937_64& rng) {
  if (!pair.gold_side) throw DataError("pair '" + pair.id + "' has no localization side");
  const auto& view = *pair.gold_side == 'a' ? score.align_a : score.align_b;
  if (view.sentences.empty()) throw DataError("pair '" + pair.id + "': localization side is empty");
  AlignmentResult r;
  r.pair_id = pair.id;
  r.side = *pair.gold_side;
  r.gold = pair.gold_sentences;
  r.probability = score.probability;
  r.d2d_correct = score.predicted_label == pair.label;
  switch (scorer) {
    case Scorer::attention:
      r.sentence_scores = att_scores(view.sentences, view.target);
      break;
    case Scorer::cosine:
      for (const auto& v : view.sentences) r.sentence_scores.push_back(cos_score(v, view.target));
      break;
    case Scorer::random: {
      std::uniform_real_distribution<double> u(0.0, 1.0);
      for (std::size_t i = 0; i < view.sentences.size(); ++i) r.sentence_scores.push_back(u(rng));
      break;
    }
  }
  r.ranking = rank_by_score(r.sentence_scores);
  return r;
}

struct MetricReport {
  std::optional<double> accuracy;
  std::optional<double> f1;
  std::optional<double> mrr;
  std::map<int, double> p_at;
  std::size_t pairs = 0;
  std::size_t positives = 0;
  bool oracle = false;
  Scorer scorer = Scorer::attention;
  PrecisionNorm p_norm = PrecisionNorm::min_gold;
};

inline MetricReport classification_metrics(const std::vector<int>& predictions, const std::vector<int>& labels) {
  if (predictions.size() != labels.size()) {
    throw std::invalid_argument("classification_metrics: " + std::to_string(predictions.size()) +
                                " predictions for " + std::to_string(labels.size()) + " labels");
  }
  std::size_t tp = 0, fp = 0, fn = 0, correct = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if ((labels[i] != 0 && labels[i] != 1) || (predictions[i] != 0 && predictions[i] != 1)) {
      throw std::invalid_argument("classification_metrics: labels must be 0 or 1");
    }
    correct += predictions[i] == labels[i];
    tp += predictions[i] == 1 && labels[i] == 1;
    fp += predictions[i] == 1 && labels[i] == 0;
    fn += predictions[i] == 0 && labels[i] == 1;
  }
  MetricReport m;
  m.pairs = labels.size();
  m.positives = tp + fn;
  m.accuracy = labels.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(labels.size());
  const double precision = tp + fp ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
  const double recall = tp + fn ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
  m.f1 = precision + recall > 0.0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
  return m;
}

/// MRR and P@{1,5,10} over positive-pair results. Without oracle, a result
/// whose document prediction is wrong contributes zero.
inline MetricReport ranking_metrics(const std::vector<AlignmentResult>& results, bool oracle,
                                    PrecisionNorm norm = PrecisionNorm::min_gold) {
  MetricReport m;
  m.oracle = oracle;
  m.p_norm = norm;
  m.positives = results.size();
  double rr = 0.0;
  std::map<int, double> hits;
  for (int n : kPrecisionCutoffs) hits[n] = 0.0;
  for (const auto& r : results) {
    if (r.gold.empty()) throw std::invalid_argument("ranking_metrics: result '" + r.pair_id + "' has no gold");
    if (!oracle && !r.d2d_correct) continue;
    const std::size_t first = r.first_gold_rank();
    if (first) rr += 1.0 / static_cast<double>(first);
    for (int n : kPrecisionCutoffs) {
      const std::size_t top = std::min<std::size_t>(n, r.ranking.size());
      std::size_t found = 0;
      for (std::size_t k = 0; k < top; ++k)
        found += std::find(r.gold.begin(), r.gold.end(), r.ranking[k]) != r.gold.end();
      const double denom = norm == PrecisionNorm::n ? n : std::min<double>(n, r.gold.size());
      hits[n] += static_cast<double>(found) / denom;
    }
  }
  const double count = results.empty() ? 1.0 : static_cast<double>(results.size());
  m.mrr = rr / count;
  for (auto& [n, v] : hits) m.p_at[n] = v / count;
  return m;
}

inline nlohmann::json to_json(const MetricReport& m) {
  nlohmann::json j = {{"pairs", m.pairs}, {"positives", m.positives}, {"oracle", m.oracle},
                      {"scorer", m.scorer}, {"p_at_normalization", m.p_norm}};
  if (m.accuracy) j["accuracy"] = *m.accuracy;
  if (m.f1) j["f1"] = *m.f1;
  if (m.mrr) j["mrr"] = *m.mrr;
  for (const auto& [n, v] : m.p_at) j["p_at"][std::to_string(n)] = v;
  return j;
}

/// Aligned plain-text table, values in percent.
inline std::string to_text(const MetricReport& m) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(2);
  auto row = [&](const std::string& name, double v) {
    os << std::left << std::setw(10) << name << std::right << std::setw(8) << 100.0 * v << '\n';
  };
  os << std::left << std::setw(10) << "metric" << std::right << std::setw(8) << "value" << '\n';
  if (m.accuracy) row("accuracy", *m.accuracy);
  if (m.f1) row("f1", *m.f1);
  if (m.mrr) row("mrr", *m.mrr);
  for (const auto& [n, v] : m.p_at) row("p@" + std::to_string(n), v);
  os << "pairs " << m.pairs << ", positives " << m.positives << ", scorer "
     << nlohmann::json(m.scorer).get<std::string>() << (m.oracle ? ", oracle" : ", gated")
     << ", P@N = |gold in top N| / "
     << (m.p_norm == PrecisionNorm::n ? "N" : "min(N, |gold|)") << '\n';
  return os.str();
}

struct EvalOptions {
  Scorer scorer = Scorer::attention;
  bool oracle = false;
  PrecisionNorm p_norm = PrecisionNorm::min_gold;
  std::uint64_t seed = 1;
  std::size_t batch_size = 64;
  std::size_t threads = 1;
};

struct JointEvaluation {
  MetricReport report;
  std::vector<AlignmentResult> alignments;
  std::vector<PairScore> scores;
};

/// Document metrics over all pairs, sentence metrics over positive pairs
/// that carry gold sentences.
template <class T>
JointEvaluation joint_eval(Model<T>& model, const std::vector<PairExample>& pairs, const EvalOptions& opt,
                           const SentenceVectorStore* store = nullptr) {
  JointEvaluation ev;
  ev.scores = score_all(model, pairs, opt.batch_size, store, opt.threads);
  std::vector<int> pred, labels;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    pred.push_back(ev.scores[i].predicted_label);
    labels.push_back(pairs[i].label);
  }
  std::mt19937_64 rng(opt.seed);
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    if (pairs[i].label == 1 && pairs[i].has_gold())
      ev.alignments.push_back(align_pair(pairs[i], ev.scores[i], opt.scorer, rng));
  }
  const auto cls = classification_metrics(pred, labels);
  ev.report = ranking_metrics(ev.alignments, opt.oracle, opt.p_norm);
  ev.report.accuracy = cls.accuracy;
  ev.report.f1 = cls.f1;
  ev.report.pairs = cls.pairs;
  ev.report.scorer = opt.scorer;
  return ev;
}

}  // namespace cda
