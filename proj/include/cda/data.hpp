// SPDX-License-Identifier: Apache-2.0
/**
 * @file   data.hpp
 * @brief  Pair dataset schema, JSON-lines ingestion, pair-construction
 *         transforms and the synthetic benchmark generator.
 *
 * Pair file record:
 *   {"id": str, "label": 0|1, "doc_a": [str], "doc_b": [str],
 *    "gold_side": "a"|"b", "gold_sentences": [int],      (optional, positives only)
 *    "doc_a_id": str, "doc_b_id": str}                   (optional, default "<id>#a"/"<id>#b")
 */
#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "cda/text.hpp"
#include "cda/vectors.hpp"

namespace cda {

struct PairExample {
  std::string id;
  Document doc_a;
  Document doc_b;
  int label = 0;
  std::optional<char> gold_side;  ///< 'a' or 'b'
  std::vector<std::size_t> gold_sentences;

  const Document& localization_doc() const { return *gold_side == 'a' ? doc_a : doc_b; }
  const Document& other_doc() const { return *gold_side == 'a' ? doc_b : doc_a; }
  bool has_gold() const { return gold_side.has_value() && !gold_sentences.empty(); }
  bool operator==(const PairExample&) const = default;
};

/// Checks the record invariants; throws DataError describing the first violation.
inline void validate_pair(const PairExample& p) {
  if (p.label != 0 && p.label != 1) throw DataError("pair '" + p.id + "': label must be 0 or 1");
  if (p.doc_a.raw_sentences.empty() || p.doc_b.raw_sentences.empty()) {
    throw DataError("pair '" + p.id + "': both documents need at least one sentence");
  }
  if (p.label == 0 && (p.gold_side || !p.gold_sentences.empty())) {
    throw DataError("pair '" + p.id + "': gold localization given on a negative pair");
  }
  if (!p.gold_sentences.empty() && !p.gold_side) {
    throw DataError("pair '" + p.id + "': gold_sentences without gold_side");
  }
  if (p.gold_side) {
    if (*p.gold_side != 'a' && *p.gold_side != 'b') {
      throw DataError("pair '" + p.id + "': gold_side must be \"a\" or \"b\"");
    }
    const std::size_t n = p.localization_doc().sentence_count();
    for (auto g : p.gold_sentences) {
      if (g >= n) {
        throw DataError("pair '" + p.id + "': gold sentence " + std::to_string(g) +
                        " out of range for " + std::to_string(n) + " sentences");
      }
    }
    if (!std::is_sorted(p.gold_sentences.begin(), p.gold_sentences.end()) ||
        std::adjacent_find(p.gold_sentences.begin(), p.gold_sentences.end()) != p.gold_sentences.end()) {
      throw DataError("pair '" + p.id + "': gold_sentences must be strictly increasing");
    }
  }
}

inline PairExample pair_from_json(const nlohmann::json& j) {
  PairExample p;
  p.id = j.at("id").get<std::string>();
  p.label = j.at("label").get<int>();
  const auto a_id = j.contains("doc_a_id") ? j["doc_a_id"].get<std::string>() : p.id + "#a";
  const auto b_id = j.contains("doc_b_id") ? j["doc_b_id"].get<std::string>() : p.id + "#b";
  p.doc_a = make_document(a_id, j.at("doc_a").get<std::vector<std::string>>());
  p.doc_b = make_document(b_id, j.at("doc_b").get<std::vector<std::string>>());
  if (j.contains("gold_side") && !j["gold_side"].is_null()) {
    const auto side = j["gold_side"].get<std::string>();
    if (side != "a" && side != "b") throw DataError("gold_side must be \"a\" or \"b\", got \"" + side + "\"");
    p.gold_side = side[0];
  }
  if (j.contains("gold_sentences") && !j["gold_sentences"].is_null()) {
    p.gold_sentences = j["gold_sentences"].get<std::vector<std::size_t>>();
  }
  validate_pair(p);
  return p;
}

inline nlohmann::json pair_to_json(const PairExample& p) {
  nlohmann::json j = {{"id", p.id},
                      {"label", p.label},
                      {"doc_a", p.doc_a.raw_sentences},
                      {"doc_b", p.doc_b.raw_sentences}};
  if (p.gold_side) j["gold_side"] = std::string(1, *p.gold_side);
  if (!p.gold_sentences.empty()) j["gold_sentences"] = p.gold_sentences;
  if (p.doc_a.id != p.id + "#a") j["doc_a_id"] = p.doc_a.id;
  if (p.doc_b.id != p.id + "#b") j["doc_b_id"] = p.doc_b.id;
  return j;
}

inline std::vector<PairExample> parse_pairs(std::istream& in, const std::string& source = "<stream>") {
  std::vector<PairExample> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(pair_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw DataError(source + ":" + std::to_string(lineno) + ": malformed record: " + e.what());
    } catch (const std::exception& e) {
      throw DataError(source + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

inline std::vector<PairExample> parse_pairs(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open pair file '" + path + "'");
  return parse_pairs(in, path);
}

inline void write_pairs(std::ostream& out, const std::vector<PairExample>& pairs) {
  for (const auto& p : pairs) out << pair_to_json(p).dump() << '\n';
}

inline void write_pairs(const std::string& path, const std::vector<PairExample>& pairs) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write pair file '" + path + "'");
  write_pairs(out, pairs);
}

/// For each positive (A, B+) emits (A, B-) with B- drawn uniformly from the
/// pool, excluding B+ and A (matched by document id). No overlap filtering.
inline std::vector<PairExample> make_negatives(const std::vector<PairExample>& positives,
                                               const std::vector<Document>& pool,
                                               std::uint64_t seed) {
  if (pool.size() < 2) throw DataError("negative sampling needs a pool of at least 2 documents");
  std::mt19937_64 rng(seed);
  std::vector<PairExample> out;
  out.reserve(positives.size());
  std::vector<std::size_t> eligible;
  for (const auto& pos : positives) {
    eligible.clear();
    for (std::size_t i = 0; i < pool.size(); ++i) {
      if (pool[i].id != pos.doc_b.id && pool[i].id != pos.doc_a.id) eligible.push_back(i);
    }
    if (eligible.empty()) throw DataError("no eligible negative document for pair '" + pos.id + "'");
    std::uniform_int_distribution<std::size_t> pick(0, eligible.size() - 1);
    PairExample neg;
    neg.id = pos.id + "-neg";
    neg.doc_a = pos.doc_a;
    neg.doc_b = pool[eligible[pick(rng)]];
    neg.label = 0;
    out.push_back(std::move(neg));
  }
  return out;
}

struct StrippedSentence {
  std::string sentence;
  /// False when nothing but white space remains; the pair must be discarded.
  bool gold = false;
};

/// Removes the character range [begin, end) (a citation marker) from a
/// sentence, collapses white space and drops spaces left before closing
/// punctuation.
inline StrippedSentence strip_citation_span(const std::string& sentence, std::size_t begin,
                                            std::size_t end) {
  if (begin > end || end > sentence.size()) {
    throw std::out_of_range("citation span [" + std::to_string(begin) + "," + std::to_string(end) +
                            ") outside sentence of length " + std::to_string(sentence.size()));
  }
  const std::string cut = sentence.substr(0, begin) + sentence.substr(end);
  std::string out;
  for (char c : cut) {
    const bool space = std::isspace(static_cast<unsigned char>(c)) != 0;
    if (space) {
      if (!out.empty() && out.back() != ' ') out.push_back(' ');
      continue;
    }
    if ((c == '.' || c == ',' || c == ';' || c == ':' || c == '!' || c == '?') && !out.empty() &&
        out.back() == ' ') {
      out.pop_back();
    }
    out.push_back(c);
  }
  while (!out.empty() && out.back() == ' ') out.pop_back();
  StrippedSentence r;
  r.gold = !out.empty();
  r.sentence = std::move(out);
  return r;
}

/// Fraction of a sentence's token types that also occur in `doc`.
inline double token_overlap(const std::vector<std::string>& sentence, const Document& doc) {
  std::set<std::string> doc_types;
  for (const auto& s : doc.tokens) doc_types.insert(s.begin(), s.end());
  std::set<std::string> types(sentence.begin(), sentence.end());
  if (types.empty()) return 0.0;
  std::size_t hit = 0;
  for (const auto& t : types) hit += doc_types.count(t);
  return static_cast<double>(hit) / static_cast<double>(types.size());
}

struct SyntheticSpec {
  std::size_t vocab_size = 2000;
  std::size_t n_topics = 8;
  std::size_t min_sentences = 5;
  std::size_t max_sentences = 10;
  std::size_t min_tokens = 4;
  std::size_t max_tokens = 10;
  double plant_dropout = 0.1;
  /// Probability that a token comes from the shared background distribution
  /// instead of the document's topic block.
  double background_mix = 0.2;
  double zipf_exponent = 1.0;
  std::size_t n_pairs = 6250;
  std::uint64_t seed = 1;

  void validate() const {
    if (!vocab_size || !n_topics || !min_sentences || !min_tokens || !n_pairs) {
      throw std::invalid_argument("synthetic spec counts must be positive");
    }
    if (min_sentences > max_sentences || min_tokens > max_tokens) {
      throw std::invalid_argument("synthetic spec ranges must satisfy min <= max");
    }
    if (vocab_size < n_topics) throw std::invalid_argument("vocab_size must be at least n_topics");
    if (n_topics < 2) throw std::invalid_argument("negative pairs need at least 2 topics");
    if (!(plant_dropout >= 0.0 && plant_dropout < 1.0)) {
      throw std::invalid_argument("plant_dropout must be in [0,1)");
    }
    if (!(background_mix >= 0.0 && background_mix < 1.0)) {
      throw std::invalid_argument("background_mix must be in [0,1)");
    }
  }
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(SyntheticSpec, vocab_size, n_topics, min_sentences, max_sentences,
                                   min_tokens, max_tokens, plant_dropout, background_mix,
                                   zipf_exponent, n_pairs, seed)

struct SyntheticData {
  std::vector<PairExample> train, dev, test;
  nlohmann::json metadata;
};

namespace detail {

class TopicSampler {
 public:
  TopicSampler(const SyntheticSpec& spec, std::mt19937_64& rng) : spec_(spec) {
    std::vector<std::size_t> ids(spec.vocab_size);
    std::iota(ids.begin(), ids.end(), 0);
    std::shuffle(ids.begin(), ids.end(), rng);
    background_ = zipf(ids);
    const std::size_t block = spec.vocab_size / spec.n_topics;
    for (std::size_t k = 0; k < spec.n_topics; ++k) {
      std::vector<std::size_t> words(ids.begin() + static_cast<std::ptrdiff_t>(k * block),
                                     ids.begin() + static_cast<std::ptrdiff_t>((k + 1) * block));
      std::shuffle(words.begin(), words.end(), rng);
      topics_.push_back(zipf(words));
    }
  }

  std::string sentence(std::size_t topic, std::mt19937_64& rng) {
    std::uniform_int_distribution<std::size_t> len(spec_.min_tokens, spec_.max_tokens);
    std::bernoulli_distribution from_background(spec_.background_mix);
    const std::size_t n = len(rng);
    std::string s;
    for (std::size_t i = 0; i < n; ++i) {
      auto& dist = from_background(rng) ? background_ : topics_[topic];
      if (i) s += ' ';
      s += "w" + std::to_string(dist.words[dist.pick(rng)]);
    }
    return s + " .";
  }

  std::vector<std::string> document(std::size_t topic, std::mt19937_64& rng) {
    std::uniform_int_distribution<std::size_t> len(spec_.min_sentences, spec_.max_sentences);
    std::vector<std::string> doc(len(rng));
    for (auto& s : doc) s = sentence(topic, rng);
    return doc;
  }

 private:
  struct Zipf {
    std::vector<std::size_t> words;
    std::discrete_distribution<std::size_t> pick;
  };

  Zipf zipf(const std::vector<std::size_t>& words) const {
    std::vector<double> w(words.size());
    for (std::size_t r = 0; r < words.size(); ++r) {
      w[r] = 1.0 / std::pow(static_cast<double>(r + 1), spec_.zipf_exponent);
    }
    return {words, std::discrete_distribution<std::size_t>(w.begin(), w.end())};
  }

  const SyntheticSpec& spec_;
  Zipf background_;
  std::vector<Zipf> topics_;
};

// Copy of a sentence with each word dropped with probability p (at least
// one word survives); the trailing " ." is kept.
inline std::string plant_copy(const std::string& source, double p, std::mt19937_64& rng) {
  std::vector<std::string> words;
  std::istringstream ss(source);
  for (std::string w; ss >> w;) {
    if (w != ".") words.push_back(w);
  }
  std::bernoulli_distribution drop(p);
  std::vector<std::string> kept;
  for (const auto& w : words) {
    if (!drop(rng)) kept.push_back(w);
  }
  if (kept.empty()) {
    std::uniform_int_distribution<std::size_t> pick(0, words.size() - 1);
    kept.push_back(words[pick(rng)]);
  }
  std::string s;
  for (std::size_t i = 0; i < kept.size(); ++i) s += (i ? " " : "") + kept[i];
  return s + " .";
}

}  // namespace detail

/// Desk-scale pair benchmark. Topics are Zipfian distributions over disjoint
/// vocabulary blocks mixed with a shared Zipfian background. Positive pairs
/// draw both documents from one topic and plant into doc_a a copy of a random
/// doc_b sentence (word dropout `plant_dropout`); its index is the gold
/// (gold_side "a"). Negatives draw the documents from two different topics.
/// Labels are balanced (n/2 positives), pairs are shuffled and split 80/10/10.
inline SyntheticData gen_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  detail::TopicSampler sampler(spec, rng);
  std::uniform_int_distribution<std::size_t> topic(0, spec.n_topics - 1);
  const std::size_t n_pos = spec.n_pairs / 2;

  std::vector<PairExample> pairs;
  pairs.reserve(spec.n_pairs);
  for (std::size_t i = 0; i < spec.n_pairs; ++i) {
    const std::string id = "syn-" + std::to_string(i);
    PairExample p;
    p.id = id;
    if (i < n_pos) {
      for (std::size_t attempt = 0;; ++attempt) {
        if (attempt == 1000) {
          throw std::invalid_argument("synthetic spec cannot plant a lexically distinct gold sentence");
        }
        const std::size_t k = topic(rng);
        auto b = sampler.document(k, rng);
        auto a = sampler.document(k, rng);
        std::uniform_int_distribution<std::size_t> pick_b(0, b.size() - 1), pick_a(0, a.size() - 1);
        const std::size_t src = pick_b(rng), gold = pick_a(rng);
        a[gold] = detail::plant_copy(b[src], spec.plant_dropout, rng);
        p.doc_a = make_document(id + "#a", std::move(a));
        p.doc_b = make_document(id + "#b", std::move(b));
        // The planted sentence must stand out lexically against doc_b.
        double mean = 0.0;
        for (const auto& s : p.doc_a.tokens) mean += token_overlap(s, p.doc_b);
        mean /= static_cast<double>(p.doc_a.tokens.size());
        if (token_overlap(p.doc_a.tokens[gold], p.doc_b) > mean) {
          p.label = 1;
          p.gold_side = 'a';
          p.gold_sentences = {gold};
          break;
        }
      }
    } else {
      const std::size_t ka = topic(rng);
      std::size_t kb = topic(rng);
      while (kb == ka) kb = topic(rng);
      p.doc_a = make_document(id + "#a", sampler.document(ka, rng));
      p.doc_b = make_document(id + "#b", sampler.document(kb, rng));
      p.label = 0;
    }
    pairs.push_back(std::move(p));
  }
  std::shuffle(pairs.begin(), pairs.end(), rng);

  SyntheticData out;
  const std::size_t n_train = spec.n_pairs * 8 / 10, n_dev = spec.n_pairs / 10;
  out.train.assign(pairs.begin(), pairs.begin() + static_cast<std::ptrdiff_t>(n_train));
  out.dev.assign(pairs.begin() + static_cast<std::ptrdiff_t>(n_train),
                 pairs.begin() + static_cast<std::ptrdiff_t>(n_train + n_dev));
  out.test.assign(pairs.begin() + static_cast<std::ptrdiff_t>(n_train + n_dev), pairs.end());
  out.metadata = {{"generator", "zipf-topic-blocks"},
                  {"spec", spec},
                  {"seed", spec.seed},
                  {"splits", {{"train", out.train.size()}, {"dev", out.dev.size()}, {"test", out.test.size()}}},
                  {"positives", n_pos},
                  {"negatives", spec.n_pairs - n_pos},
                  {"gold_side", "a"}};
  return out;
}

}  // namespace cda
