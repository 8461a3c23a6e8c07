// SPDX-License-Identifier: Apache-2.0
/**
 * @file   heatmap.hpp
 * @brief  Sentence-score heatmaps of the localization side, as ANSI terminal
 *         text or a standalone HTML page. Intensities are min-max normalized
 *         per document; gold sentences carry an asterisk.
 */
#pragma once

#include <algorithm>
#include <cmath>
#include <sstream>

#include "cda/align_eval.hpp"

namespace cda {

enum class HeatmapFormat { ansi, html };

/// Min-max normalization to [0, 1]; a constant (or single) score maps to 1.
inline std::vector<double> normalize_intensities(const std::vector<double>& scores) {
  if (scores.empty()) return {};
  const auto [lo, hi] = std::minmax_element(scores.begin(), scores.end());
  std::vector<double> out(scores.size(), 1.0);
  if (*hi > *lo) {
    for (std::size_t i = 0; i < scores.size(); ++i) out[i] = (scores[i] - *lo) / (*hi - *lo);
  }
  return out;
}

namespace detail {

inline std::string html_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

// White (0) to saturated blue (1).
inline int blue_channel(double intensity, int full) {
  return static_cast<int>(std::lround(255.0 - intensity * (255.0 - full)));
}

}  // namespace detail

inline std::string emit_heatmap(const AlignmentResult& result, const PairExample& pair, HeatmapFormat format) {
  if (!pair.gold_side) throw DataError("pair '" + pair.id + "' has no localization side");
  const auto& sents = (result.side == 'b' ? pair.doc_b : pair.doc_a).raw_sentences;
  if (result.sentence_scores.empty()) throw DataError("alignment result '" + result.pair_id + "' has no scores");
  if (result.sentence_scores.size() > sents.size()) {
    throw DataError("alignment result '" + result.pair_id + "' scores more sentences than the document has");
  }
  const auto level = normalize_intensities(result.sentence_scores);
  auto is_gold = [&](std::size_t i) {
    return std::find(result.gold.begin(), result.gold.end(), i) != result.gold.end();
  };
  std::ostringstream os;
  if (format == HeatmapFormat::ansi) {
    os << "pair " << result.pair_id << " (side " << result.side << ")\n";
    for (std::size_t i = 0; i < level.size(); ++i) {
      const int rg = detail::blue_channel(level[i], 40);
      os << "\x1b[48;2;" << rg << ';' << rg << ";255m\x1b[38;2;0;0;0m" << (is_gold(i) ? "*" : " ") << ' '
         << sents[i] << "\x1b[0m\n";
    }
    return os.str();
  }
  os << "<!DOCTYPE html>\n<html><head><meta charset=\"utf-8\"><title>" << detail::html_escape(result.pair_id)
     << "</title><style>body{font-family:sans-serif;max-width:48em;margin:2em auto}"
        "p{margin:0;padding:.3em .5em}</style></head><body>\n<h1>"
     << detail::html_escape(result.pair_id) << "</h1>\n";
  os << std::fixed;
  for (std::size_t i = 0; i < level.size(); ++i) {
    const int rg = detail::blue_channel(level[i], 40);
    os << "<p data-score=\"" << std::setprecision(6) << result.sentence_scores[i]
       << "\" style=\"background:rgb(" << rg << ',' << rg << ",255)\">" << (is_gold(i) ? "* " : "")
       << detail::html_escape(sents[i]) << "</p>\n";
  }
  os << "</body></html>\n";
  return os.str();
}

}  // namespace cda
