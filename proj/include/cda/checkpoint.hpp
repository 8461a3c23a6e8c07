// SPDX-License-Identifier: Apache-2.0
/**
 * @file   checkpoint.hpp
 * @brief  JSON checkpoints: model and training configuration, vocabulary and
 *         every named parameter tensor.
 */
#pragma once

#include <fstream>

#include <json.hpp>

#include "cda/train.hpp"

namespace cda {

inline constexpr int kCheckpointVersion = 1;

template <class T>
struct Checkpoint {
  Model<T> model;
  Vocabulary vocab;
  TrainConfig train;
  nlohmann::json info;  ///< free-form run summary (best epoch, dev loss, ...)
};

template <class T>
nlohmann::json checkpoint_to_json(const Checkpoint<T>& c) {
  nlohmann::json params = nlohmann::json::object();
  for (const auto& p : c.model.params()) {
    std::vector<double> data(p.value.data.begin(), p.value.data.end());
    params[p.name] = {{"shape", p.value.shape}, {"data", std::move(data)}};
  }
  return {{"format", "cda-checkpoint"}, {"version", kCheckpointVersion}, {"model", c.model.config()},
          {"train", c.train},           {"vocab", c.vocab.tokens()},      {"info", c.info},
          {"params", std::move(params)}};
}

template <class T>
Checkpoint<T> checkpoint_from_json(const nlohmann::json& j) {
  if (j.value("format", "") != "cda-checkpoint") throw DataError("not a checkpoint file");
  if (j.at("version").get<int>() != kCheckpointVersion) {
    throw DataError("unsupported checkpoint version " + j.at("version").dump());
  }
  Checkpoint<T> c{Model<T>(j.at("model").get<ModelConfig>()),
                  Vocabulary::from_tokens(j.at("vocab").get<std::vector<std::string>>()),
                  j.at("train").get<TrainConfig>(), j.value("info", nlohmann::json::object())};
  const auto& params = j.at("params");
  if (params.size() != c.model.params().size()) {
    throw DataError("checkpoint has " + std::to_string(params.size()) + " parameters, model expects " +
                    std::to_string(c.model.params().size()));
  }
  for (auto& p : c.model.params()) {
    if (!params.contains(p.name)) throw DataError("checkpoint lacks parameter '" + p.name + "'");
    const auto& e = params[p.name];
    const auto shape = e.at("shape").template get<Shape>();
    if (shape != p.value.shape) {
      throw DataError("parameter '" + p.name + "' has shape " + shape_str(shape) + " in the checkpoint, " +
                      shape_str(p.value.shape) + " in the model");
    }
    const auto data = e.at("data").template get<std::vector<double>>();
    if (data.size() != p.value.size()) throw DataError("parameter '" + p.name + "' has the wrong length");
    for (std::size_t i = 0; i < data.size(); ++i) p.value.data[i] = static_cast<T>(data[i]);
  }
  return c;
}

template <class T>
void save_checkpoint(const std::string& path, const Checkpoint<T>& c) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write checkpoint '" + path + "'");
  out << checkpoint_to_json(c).dump() << '\n';
}

template <class T>
Checkpoint<T> load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open checkpoint '" + path + "'");
  try {
    return checkpoint_from_json<T>(nlohmann::json::parse(in));
  } catch (const nlohmann::json::exception& e) {
    throw DataError("malformed checkpoint '" + path + "': " + e.what());
  }
}

}  // namespace cda
