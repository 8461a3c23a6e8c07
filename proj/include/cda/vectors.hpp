// SPDX-License-Identifier: Apache-2.0
/**
 * @file   vectors.hpp
 * @brief  External vector files: precomputed sentence vectors (JSON lines,
 *         {"doc_id": str, "vectors": [[float]]}) and pretrained word
 *         embeddings (text, "token v1 ... vE" per line).
 */
#pragma once

#include <fstream>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "cda/model.hpp"
#include "cda/text.hpp"

namespace cda {

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Sentence vectors keyed by document id, all of one width.
class SentenceVectorStore {
 public:
  SentenceVectorStore() = default;
  explicit SentenceVectorStore(std::size_t width) : width_(width) {}

  static SentenceVectorStore load(const std::string& path, std::size_t expected_width) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open sentence-vector file '" + path + "'");
    SentenceVectorStore store(expected_width);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      try {
        const auto j = nlohmann::json::parse(line);
        store.add(j.at("doc_id").get<std::string>(),
                  j.at("vectors").get<std::vector<std::vector<double>>>());
      } catch (const nlohmann::json::exception& e) {
        throw DataError(path + ":" + std::to_string(lineno) + ": " + e.what());
      } catch (const DataError& e) {
        throw DataError(path + ":" + std::to_string(lineno) + ": " + e.what());
      }
    }
    return store;
  }

  void add(const std::string& doc_id, std::vector<std::vector<double>> vectors) {
    if (vectors.empty()) throw DataError("document '" + doc_id + "' has no sentence vectors");
    for (const auto& v : vectors) {
      if (v.size() != width_) {
        throw DataError("sentence vector width " + std::to_string(v.size()) + " for document '" +
                        doc_id + "' does not match configured width " + std::to_string(width_));
      }
    }
    docs_[doc_id] = std::move(vectors);
  }

  /// Vectors for a document that must have exactly `sentence_count` sentences.
  const std::vector<std::vector<double>>& get(const std::string& doc_id,
                                              std::size_t sentence_count) const {
    auto it = docs_.find(doc_id);
    if (it == docs_.end()) throw DataError("no sentence vectors for document '" + doc_id + "'");
    if (it->second.size() != sentence_count) {
      throw DataError("document '" + doc_id + "' has " + std::to_string(sentence_count) +
                      " sentences but " + std::to_string(it->second.size()) + " vectors");
    }
    return it->second;
  }

  bool contains(const std::string& doc_id) const { return docs_.count(doc_id) != 0; }
  std::size_t width() const { return width_; }
  std::size_t size() const { return docs_.size(); }

 private:
  std::size_t width_ = 0;
  std::unordered_map<std::string, std::vector<std::vector<double>>> docs_;
};

/// Overwrites embedding rows of tokens found in a pretrained text file.
/// Returns the number of rows replaced. Lines whose width differs from the
/// table's are rejected.
template <class T>
std::size_t load_pretrained_embeddings(const std::string& path, const Vocabulary& vocab,
                                       Parameter<T>& table) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open embedding file '" + path + "'");
  const std::size_t e = table.value.cols();
  std::size_t replaced = 0, lineno = 0;
  std::string line;
  while (std::getline(in, line)) {
    ++lineno;
    std::istringstream ss(line);
    std::string tok;
    if (!(ss >> tok)) continue;
    std::vector<double> vals;
    double v;
    while (ss >> v) vals.push_back(v);
    if (vals.size() != e) {
      throw DataError(path + ":" + std::to_string(lineno) + ": embedding width " +
                      std::to_string(vals.size()) + " does not match table width " + std::to_string(e));
    }
    const auto id = vocab.id(tok);
    if (id == kUnkId && tok != kUnkToken) continue;
    for (std::size_t j = 0; j < e; ++j) table.value.data[id * e + j] = static_cast<T>(vals[j]);
    ++replaced;
  }
  return replaced;
}

}  // namespace cda
