// SPDX-License-Identifier: Apache-2.0
/**
 * @file   cli.hpp
 * @brief  The `cda` command line: gen-synth, train, eval, localize, params.
 *
 * Settings come from an optional JSON file with flat dotted keys
 * ("model.hidden": 50, "train.learning_rate": 1e-3, ...) followed by
 * key=value overrides on the command line; dedicated flags (--seed,
 * --variant, ...) are applied last. Unknown keys are rejected.
 *
 * model.vocab_size only matters for `params`; training sizes the embedding
 * table from the vocabulary (train.max_vocab, train.min_count).
 *
 * Exit codes: 0 success, 1 usage or configuration error, 2 data error,
 * 3 numerical failure.
 */
#pragma once

#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "cda/checkpoint.hpp"
#include "cda/heatmap.hpp"

namespace cda {

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

NLOHMANN_JSON_SERIALIZE_ENUM(HeatmapFormat, {{HeatmapFormat::ansi, "ansi"}, {HeatmapFormat::html, "html"}})

/// Every setting reachable from a config file or key=value override.
struct RunSettings {
  ModelConfig model;
  TrainConfig train;
  SyntheticSpec synth;
  EvalOptions eval;
  std::string sentence_vectors;  ///< JSONL store for precomputed encoders
  std::string embeddings;        ///< pretrained word vectors (text format)
  std::optional<HeatmapFormat> heatmap;

  RunSettings() {
    train.threads = eval.threads = std::max(1u, std::thread::hardware_concurrency());
  }
};

namespace detail {

using Setter = std::function<void(RunSettings&, const nlohmann::json&)>;

template <class E>
E enum_value(const nlohmann::json& v, const char* what) {
  return parse_enum<E>(v.get<std::string>(), what);
}

inline const std::map<std::string, Setter>& setting_table() {
  static const std::map<std::string, Setter> table = {
      {"model.encoder", [](RunSettings& s, const nlohmann::json& v) { s.model.encoder = enum_value<EncoderKind>(v, "encoder"); }},
      {"model.vocab_size", [](RunSettings& s, const nlohmann::json& v) { v.get_to(s.model.vocab_size); }},
      {"model.embed_dim", [](RunSettings& s, const nlohmann::json& v) { v.get_to(s.model.embed_dim); }},
      {"model.hidden", [](RunSettings& s, const nlohmann::json& v) { v.get_to(s.model.hidden); }},
      {"model.input_dim", [](RunSettings& s, const nlohmann::json& v) { v.get_to(s.model.input_dim); }},
      {"model.max_tokens", [](RunSettings& s, const nlohmann::json& v) { v.get_to(s.model.max_tokens); }},
      {"model.max_sentences", [](RunSettings& s, const nlohmann::json& v) { v.get_to(s.model.max_sentences); }},
      {"model.threshold", [](RunSettings& s, const nlohmann::json& v) { v.get_to(s.model.threshold); }},
      {"model.s2d_target", [](RunSettings& s, const nlohmann::json& v) { s.model.s2d_target = enum_value<S2dTarget>(v, "s2d target"); }},
      {"model.seed", [](RunSettings& s, const nlohmann::json& v) { v.get_to(s.model.seed); }},
      {"cda.variant", [](RunSettings& s, const nlohmann::json& v) { s.model.cda.variant = enum_value<CdaVariant>(v, "cda variant"); }},
      {"cda.integration", [](RunSettings& s, const nlohmann::json& v) { s.model.cda.integration = enum_value<Integration>(v, "integration"); }},
      {"cda.candidate_source", [](RunSettings& s, const nlohmann::json& v) { s.model.cda.candidate_source = enum_value<CandidateSource>(v, "candidate source"); }},
      {"train.batch_size", [](RunSettings& s, const nlohmann::json& v) { v.get_to(s.train.batch_size); }},
      {"train.max_epochs", [](RunSettings& s, const nlohmann::json& v) { v.get_to(s.train.max_epochs); }},
      {"train.patience", [](RunSettings& s, const nlohmann::json& v) { v.get_to(s.train.patience); }},
      {"train.learning_rate", [](RunSettings& s, const nlohmann::json& v) { v.get_to(s.train.learning_rate); }},
      {"train.clip_norm", [](RunSettings& s, const nlohmann::json& v) { v.get_to(s.train.clip_norm); }},
      {"train.seed", [](RunSettings& s, const nlohmann::json& v) { v.get_to(s.train.seed); }},
      {"train.max_vocab", [](RunSettings& s, const nlohmann::json& v) { v.get_to(s.train.max_vocab); }},
      {"train.min_count", [](RunSettings& s, const nlohmann::json& v) { v.get_to(s.train.min_count); }},
      {"train.eval_batch_size", [](RunSettings& s, const nlohmann::json& v) { v.get_to(s.train.eval_batch_size); }},
      {"synth.vocab_size", [](RunSettings& s, const nlohmann::json& v) { v.get_to(s.synth.vocab_size); }},
      {"synth.n_topics", [](RunSettings& s, const nlohmann::json& v) { v.get_to(s.synth.n_topics); }},
      {"synth.min_sentences", [](RunSettings& s, const nlohmann::json& v) { v.get_to(s.synth.min_sentences); }},
      {"synth.max_sentences", [](RunSettings& s, const nlohmann::json& v) { v.get_to(s.synth.max_sentences); }},
      {"synth.min_tokens", [](RunSettings& s, const nlohmann::json& v) { v.get_to(s.synth.min_tokens); }},
      {"synth.max_tokens", [](RunSettings& s, const nlohmann::json& v) { v.get_to(s.synth.max_tokens); }},
      {"synth.plant_dropout", [](RunSettings& s, const nlohmann::json& v) { v.get_to(s.synth.plant_dropout); }},
      {"synth.background_mix", [](RunSettings& s, const nlohmann::json& v) { v.get_to(s.synth.background_mix); }},
      {"synth.zipf_exponent", [](RunSettings& s, const nlohmann::json& v) { v.get_to(s.synth.zipf_exponent); }},
      {"synth.n_pairs", [](RunSettings& s, const nlohmann::json& v) { v.get_to(s.synth.n_pairs); }},
      {"synth.seed", [](RunSettings& s, const nlohmann::json& v) { v.get_to(s.synth.seed); }},
      {"eval.scorer", [](RunSettings& s, const nlohmann::json& v) { s.eval.scorer = enum_value<Scorer>(v, "scorer"); }},
      {"eval.oracle", [](RunSettings& s, const nlohmann::json& v) { v.get_to(s.eval.oracle); }},
      {"eval.p_at_normalization", [](RunSettings& s, const nlohmann::json& v) { s.eval.p_norm = enum_value<PrecisionNorm>(v, "P@N normalization"); }},
      {"eval.batch_size", [](RunSettings& s, const nlohmann::json& v) { v.get_to(s.eval.batch_size); }},
      {"eval.seed", [](RunSettings& s, const nlohmann::json& v) { v.get_to(s.eval.seed); }},
      {"data.sentence_vectors", [](RunSettings& s, const nlohmann::json& v) { v.get_to(s.sentence_vectors); }},
      {"data.embeddings", [](RunSettings& s, const nlohmann::json& v) { v.get_to(s.embeddings); }},
      {"localize.heatmap", [](RunSettings& s, const nlohmann::json& v) { s.heatmap = enum_value<HeatmapFormat>(v, "heatmap format"); }},
  };
  return table;
}

}  // namespace detail

/// Applies one setting; throws UsageError for unknown keys or bad values.
inline void apply_setting(RunSettings& s, const std::string& key, const nlohmann::json& value) {
  const auto& table = detail::setting_table();
  auto it = table.find(key);
  if (it == table.end()) throw UsageError("unknown setting '" + key + "'");
  try {
    it->second(s, value);
  } catch (const nlohmann::json::exception& e) {
    throw UsageError("bad value " + value.dump() + " for '" + key + "': " + e.what());
  } catch (const std::invalid_argument& e) {
    throw UsageError("bad value for '" + key + "': " + e.what());
  }
}

/// Applies a flat JSON object of dotted keys.
inline void apply_config_json(RunSettings& s, const nlohmann::json& j) {
  if (!j.is_object()) throw UsageError("config must be a JSON object with dotted keys");
  for (const auto& [key, value] : j.items()) apply_setting(s, key, value);
}

/// Parses "key=value"; the value is read as JSON when possible, else as a string.
inline void apply_override(RunSettings& s, const std::string& text) {
  const auto eq = text.find('=');
  if (eq == std::string::npos || eq == 0) throw UsageError("override '" + text + "' is not key=value");
  const std::string key = text.substr(0, eq), raw = text.substr(eq + 1);
  nlohmann::json value = nlohmann::json::parse(raw, nullptr, false);
  if (value.is_discarded()) value = raw;
  apply_setting(s, key, value);
}

/// Sets every seed from the single --seed flag.
inline void apply_seed(RunSettings& s, std::uint64_t seed) {
  s.model.seed = s.train.seed = s.synth.seed = s.eval.seed = seed;
}

inline std::vector<std::string> setting_keys() {
  std::vector<std::string> keys;
  for (const auto& [k, v] : detail::setting_table()) keys.push_back(k);
  return keys;
}

// ---------------------------------------------------------------------------
// Subcommands as library calls. Each returns what it wrote.

struct GenSynthOutput {
  std::string train, dev, test, metadata;
};

inline GenSynthOutput gen_synth_command(const RunSettings& s, const std::filesystem::path& out_dir) {
  auto data = gen_synthetic(s.synth);
  std::filesystem::create_directories(out_dir);
  GenSynthOutput o{(out_dir / "train.jsonl").string(), (out_dir / "dev.jsonl").string(),
                   (out_dir / "test.jsonl").string(), (out_dir / "synth_meta.json").string()};
  write_pairs(o.train, data.train);
  write_pairs(o.dev, data.dev);
  write_pairs(o.test, data.test);
  std::ofstream(o.metadata) << data.metadata.dump(2) << '\n';
  return o;
}

inline std::optional<SentenceVectorStore> load_store(const RunSettings& s, const ModelConfig& model) {
  if (model.encoder == EncoderKind::gru) return std::nullopt;
  if (s.sentence_vectors.empty()) throw UsageError("precomputed encoders need data.sentence_vectors");
  return SentenceVectorStore::load(s.sentence_vectors, model.input_dim);
}

struct TrainOutput {
  std::string checkpoint, log;
  TrainResult result;
};

/// Builds the vocabulary from the training pairs, trains and writes
/// checkpoint.json and train_log.jsonl into out_dir.
inline TrainOutput train_command(const RunSettings& s, const std::string& train_path, const std::string& dev_path,
                                 const std::filesystem::path& out_dir) {
  s.train.validate();
  auto train = parse_pairs(train_path);
  auto dev = parse_pairs(dev_path);
  Checkpoint<float> ck{Model<float>(), build_vocabulary(train, s.train.max_vocab, s.train.min_count), s.train, {}};
  ModelConfig cfg = s.model;
  if (cfg.encoder == EncoderKind::gru) cfg.vocab_size = ck.vocab.size();
  cfg.validate();
  const auto store = load_store(s, cfg);
  index_pairs(train, ck.vocab, cfg);
  index_pairs(dev, ck.vocab, cfg);
  ck.model = Model<float>(cfg);
  if (!s.embeddings.empty()) load_pretrained_embeddings(s.embeddings, ck.vocab, ck.model.param("embedding"));
  std::filesystem::create_directories(out_dir);
  TrainOutput o{(out_dir / "checkpoint.json").string(), (out_dir / "train_log.jsonl").string(), {}};
  std::ofstream log(o.log);
  if (!log) throw DataError("cannot write training log '" + o.log + "'");
  TrainConfig tc = s.train;
  o.result = train_model(ck.model, train, dev, tc, &log, store ? &*store : nullptr);
  ck.info = {{"best_epoch", o.result.best_epoch},
             {"best_dev_loss", o.result.best_dev_loss},
             {"epochs_run", o.result.epochs.size()},
             {"early_stopped", o.result.early_stopped}};
  save_checkpoint(o.checkpoint, ck);
  return o;
}

/// Loads a checkpoint, optionally evaluating it under a reduced CDA variant
/// (deep -> shallow -> none); parameters the reduced model lacks are dropped.
inline Checkpoint<float> load_for_inference(const std::string& path, std::optional<CdaVariant> variant,
                                            std::optional<S2dTarget> target = std::nullopt) {
  auto ck = load_checkpoint<float>(path);
  if (!variant && !target) return ck;
  ModelConfig cfg = ck.model.config();
  if (variant) cfg.cda.variant = *variant;
  if (target) cfg.s2d_target = *target;
  Model<float> m(cfg);
  for (auto& p : m.params()) {
    if (!ck.model.has(p.name)) {
      throw UsageError("checkpoint was trained with cda.variant=" + enum_name(ck.model.config().cda.variant) +
                       " and has no parameter '" + p.name + "' needed for cda.variant=" +
                       enum_name(cfg.cda.variant));
    }
    p.value = ck.model.param(p.name).value;
  }
  ck.model = std::move(m);
  return ck;
}

inline std::vector<PairExample> load_indexed_pairs(const std::string& path, const Checkpoint<float>& ck) {
  auto pairs = parse_pairs(path);
  index_pairs(pairs, ck.vocab, ck.model.config());
  return pairs;
}

struct EvalOutput {
  std::string metrics;
  JointEvaluation evaluation;
};

inline EvalOutput eval_command(const RunSettings& s, Checkpoint<float>& ck, const std::string& test_path,
                               const std::filesystem::path& out_dir) {
  const auto pairs = load_indexed_pairs(test_path, ck);
  const auto store = load_store(s, ck.model.config());
  EvalOutput o;
  o.evaluation = joint_eval(ck.model, pairs, s.eval, store ? &*store : nullptr);
  std::filesystem::create_directories(out_dir);
  o.metrics = (out_dir / "metrics.json").string();
  std::ofstream(o.metrics) << to_json(o.evaluation.report).dump(2) << '\n';
  return o;
}

struct LocalizeOutput {
  std::string alignments;
  std::vector<std::string> heatmaps;
  std::vector<AlignmentResult> results;
};

inline LocalizeOutput localize_command(const RunSettings& s, Checkpoint<float>& ck, const std::string& test_path,
                                       const std::filesystem::path& out_dir, std::ostream& out) {
  const auto pairs = load_indexed_pairs(test_path, ck);
  const auto store = load_store(s, ck.model.config());
  auto ev = joint_eval(ck.model, pairs, s.eval, store ? &*store : nullptr);
  std::filesystem::create_directories(out_dir);
  LocalizeOutput o;
  o.alignments = (out_dir / "alignments.jsonl").string();
  std::ofstream f(o.alignments);
  for (const auto& r : ev.alignments) f << to_json(r).dump() << '\n';
  if (s.heatmap) {
    std::map<std::string, const PairExample*> by_id;
    for (const auto& p : pairs) by_id[p.id] = &p;
    if (*s.heatmap == HeatmapFormat::html) std::filesystem::create_directories(out_dir / "heatmaps");
    for (const auto& r : ev.alignments) {
      const auto text = emit_heatmap(r, *by_id.at(r.pair_id), *s.heatmap);
      if (*s.heatmap == HeatmapFormat::ansi) {
        out << text;
        continue;
      }
      auto name = r.pair_id;
      for (auto& c : name)
        if (!std::isalnum(static_cast<unsigned char>(c)) && c != '-' && c != '_') c = '_';
      const auto path = (out_dir / "heatmaps" / (name + ".html")).string();
      std::ofstream(path) << text;
      o.heatmaps.push_back(path);
    }
  }
  o.results = std::move(ev.alignments);
  return o;
}

inline std::string params_table(const ModelConfig& cfg) {
  const auto r = count_parameters(cfg);
  std::ostringstream os;
  os << std::left << std::setw(14) << "component" << std::right << std::setw(12) << "parameters" << '\n';
  for (const auto& [name, n] : r.components) os << std::left << std::setw(14) << name << std::right << std::setw(12) << n << '\n';
  os << std::left << std::setw(14) << "total" << std::right << std::setw(12) << r.total << '\n';
  os << std::left << std::setw(14) << "cda delta" << std::right << std::setw(12) << r.cda_delta << '\n';
  return os.str();
}

// ---------------------------------------------------------------------------

/// Runs the command line; returns the process exit code.
inline int run_cli(const std::vector<std::string>& args, std::ostream& out = std::cout,
                   std::ostream& err = std::cerr) {
  CLI::App app{"Cross-document attention for document and sentence alignment", "cda"};
  app.require_subcommand(1, 1);
  std::string config_path, out_dir, train_path, dev_path, test_path, checkpoint_path;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> threads;
  std::optional<std::string> variant, integration, scorer, heatmap, p_norm, s2d_target;
  bool oracle = false, as_json = false;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "JSON file with dotted-key settings")->check(CLI::ExistingFile);
    sub->add_option("overrides", overrides, "key=value settings");
    sub->add_option("--seed", seed, "seed for every random choice");
  };
  auto* gen = app.add_subcommand("gen-synth", "write synthetic train/dev/test pair files");
  common(gen);
  gen->add_option("--out-dir", out_dir, "output directory")->required();

  auto* train = app.add_subcommand("train", "train a model and write a checkpoint and training log");
  common(train);
  train->add_option("--train", train_path, "training pairs (JSON lines)")->required()->check(CLI::ExistingFile);
  train->add_option("--dev", dev_path, "validation pairs (JSON lines)")->required()->check(CLI::ExistingFile);
  train->add_option("--out-dir", out_dir, "output directory")->required();
  train->add_option("--variant", variant, "none|shallow|deep");
  train->add_option("--integration", integration, "concat|add");
  train->add_option("--threads", threads, "evaluation threads");

  auto eval_opts = [&](CLI::App* sub) {
    common(sub);
    sub->add_option("--checkpoint", checkpoint_path, "trained checkpoint")->required()->check(CLI::ExistingFile);
    sub->add_option("--test", test_path, "pairs to evaluate (JSON lines)")->required()->check(CLI::ExistingFile);
    sub->add_option("--out-dir", out_dir, "output directory")->required();
    sub->add_option("--scorer", scorer, "attention|cosine|random");
    sub->add_flag("--oracle", oracle, "score sentences as if the document prediction were correct");
    sub->add_option("--variant", variant, "evaluate with CDA reduced to none|shallow");
    sub->add_option("--s2d-target", s2d_target, "pre_cda|final");
    sub->add_option("--p-at-norm", p_norm, "min_gold|n");
    sub->add_option("--threads", threads, "worker threads");
  };
  auto* eval = app.add_subcommand("eval", "document and sentence alignment metrics");
  eval_opts(eval);
  auto* localize = app.add_subcommand("localize", "per-pair sentence rankings as JSON lines");
  eval_opts(localize);
  localize->add_option("--heatmap", heatmap, "ansi (stdout) or html (one file per pair)");

  auto* params = app.add_subcommand("params", "parameter counts per component");
  common(params);
  params->add_option("--variant", variant, "none|shallow|deep");
  params->add_option("--integration", integration, "concat|add");
  params->add_flag("--json", as_json, "print JSON instead of a table");

  try {
    std::vector<std::string> rev(args.rbegin(), args.rend());
    app.parse(rev);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "cda: " << e.what() << '\n';
    for (auto* sub : app.get_subcommands()) err << sub->help();
    return 1;
  }

  try {
    RunSettings s;
    if (!config_path.empty()) {
      std::ifstream in(config_path);
      const auto j = nlohmann::json::parse(in, nullptr, false);
      if (j.is_discarded()) throw UsageError("config '" + config_path + "' is not valid JSON");
      apply_config_json(s, j);
    }
    for (const auto& o : overrides) apply_override(s, o);
    if (seed) apply_seed(s, *seed);
    if (threads) s.train.threads = s.eval.threads = std::max<std::size_t>(1, *threads);
    if (variant) apply_setting(s, "cda.variant", *variant);
    if (integration) apply_setting(s, "cda.integration", *integration);
    if (scorer) apply_setting(s, "eval.scorer", *scorer);
    if (heatmap) apply_setting(s, "localize.heatmap", *heatmap);
    if (p_norm) apply_setting(s, "eval.p_at_normalization", *p_norm);
    if (s2d_target) apply_setting(s, "model.s2d_target", *s2d_target);
    if (oracle) s.eval.oracle = true;

    if (*gen) {
      s.synth.validate();
      const auto o = gen_synth_command(s, out_dir);
      out << "wrote " << o.train << ", " << o.dev << ", " << o.test << '\n';
    } else if (*train) {
      ModelConfig probe = s.model;
      probe.vocab_size = std::max<std::size_t>(probe.vocab_size, 2);
      probe.validate();
      const auto o = train_command(s, train_path, dev_path, out_dir);
      out << "best epoch " << o.result.best_epoch << " dev loss " << o.result.best_dev_loss << "; wrote "
          << o.checkpoint << '\n';
    } else if (*eval || *localize) {
      std::optional<CdaVariant> v;
      if (variant) v = s.model.cda.variant;
      std::optional<S2dTarget> t;
      if (s2d_target) t = s.model.s2d_target;
      auto ck = load_for_inference(checkpoint_path, v, t);
      if (*eval) {
        const auto o = eval_command(s, ck, test_path, out_dir);
        out << to_text(o.evaluation.report);
      } else {
        const auto o = localize_command(s, ck, test_path, out_dir, out);
        out << "wrote " << o.results.size() << " alignments to " << o.alignments << '\n';
      }
    } else if (*params) {
      ModelConfig cfg = s.model;
      cfg.vocab_size = std::max<std::size_t>(cfg.vocab_size, 2);
      cfg.validate();
      if (as_json) {
        const auto r = count_parameters(cfg);
        out << nlohmann::json{{"components", r.components}, {"total", r.total}, {"cda_delta", r.cda_delta}}.dump(2)
            << '\n';
      } else {
        out << params_table(cfg);
      }
    }
    return 0;
  } catch (const UsageError& e) {
    err << "cda: " << e.what() << '\n';
    return 1;
  } catch (const std::invalid_argument& e) {
    err << "cda: invalid configuration: " << e.what() << '\n';
    return 1;
  } catch (const NumericError& e) {
    err << "cda: numerical failure: " << e.what() << '\n';
    return 3;
  } catch (const DataError& e) {
    err << "cda: data error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << "cda: data error: " << e.what() << '\n';
    return 2;
  }
}

}  // namespace cda
