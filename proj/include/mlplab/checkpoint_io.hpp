// Copyright 2026 The mlplab Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef MLPLAB_CHECKPOINT_IO_HPP
#define MLPLAB_CHECKPOINT_IO_HPP

// Checkpoint files are self-describing JSON documents holding the network
// config, the training schedule, the snapshot tag and metrics, and the
// weight matrices. Weights are stored as C99 hexadecimal float strings
// ("%a"), which round-trip 64-bit values losslessly.

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "mlplab/errors.hpp"
#include "mlplab/mlp.hpp"
#include "mlplab/train.hpp"

namespace mlplab {

namespace detail {

inline std::string double_to_hex(double v) {
  if (!std::isfinite(v)) throw NumericError("checkpoint: non-finite weight");
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%a", v);
  return buf;
}

inline double hex_to_double(const std::string& s) {
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end == s.c_str() || *end != '\0')
    throw FormatError("checkpoint: bad hex float '" + s + "'");
  return v;
}

}  // namespace detail

struct LoadedCheckpoint {
  MlpConfig config;
  TrainSchedule schedule;
  Checkpoint checkpoint;

  Mlp to_mlp() const { return Mlp{config, checkpoint.weights}; }
};

inline void save_checkpoint(const std::string& path, const MlpConfig& config,
                            const TrainSchedule& sched, const Checkpoint& ckpt) {
  nlohmann::json doc;
  doc["format"] = "mlplab-checkpoint";
  doc["version"] = 1;
  doc["tag"] = {{"kind", ckpt.tag.kind_name()}, {"index", ckpt.tag.index}};
  doc["config"] = {{"layer_sizes", config.layer_sizes},
                   {"hidden_activation", to_string(config.hidden_activation)},
                   {"loss", to_string(config.loss)},
                   {"feature_dim", config.feature_dim}};
  doc["schedule"] = {{"max_epochs", sched.max_epochs},
                     {"batch_size", sched.batch_size},
                     {"learning_rate", sched.learning_rate},
                     {"optimizer", to_string(sched.optimizer)},
                     {"adam_beta1", sched.adam_beta1},
                     {"adam_beta2", sched.adam_beta2},
                     {"adam_epsilon", sched.adam_epsilon},
                     {"seed", sched.seed},
                     {"checkpoint_epochs", sched.checkpoint_epochs},
                     {"checkpoint_batches", sched.checkpoint_batches}};
  doc["metrics"] = {{"train_error", ckpt.train_error},
                    {"val_error", ckpt.val_error},
                    {"test_error", ckpt.test_error}};

  nlohmann::json layers = nlohmann::json::array();
  for (const Matrix& w : ckpt.weights) {
    nlohmann::json rows = nlohmann::json::array();
    for (int r = 0; r < w.rows; ++r) {
      nlohmann::json row = nlohmann::json::array();
      for (int c = 0; c < w.cols; ++c)
        row.push_back(detail::double_to_hex(w(r, c)));
      rows.push_back(std::move(row));
    }
    layers.push_back(std::move(rows));
  }
  doc["weights"] = std::move(layers);

  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path);
  out << doc.dump(1) << "\n";
  if (!out) throw IoError("write failed for " + path);
}

inline LoadedCheckpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open for reading: " + path);
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("checkpoint: invalid JSON in " + path + ": " + e.what());
  }
  if (doc.value("format", "") != "mlplab-checkpoint")
    throw FormatError("checkpoint: unrecognized format in " + path);

  LoadedCheckpoint loaded;
  const auto& cfg = doc.at("config");
  loaded.config.layer_sizes = cfg.at("layer_sizes").get<std::vector<int>>();
  loaded.config.hidden_activation =
      cfg.at("hidden_activation").get<std::string>() == "relu"
          ? Activation::relu
          : Activation::sigmoid;
  loaded.config.loss = cfg.at("loss").get<std::string>() == "mse_linear"
                           ? Loss::mse_linear
                           : Loss::ce_softmax;
  loaded.config.feature_dim = cfg.at("feature_dim").get<int>();

  const auto& sch = doc.at("schedule");
  loaded.schedule.max_epochs = sch.at("max_epochs").get<int>();
  loaded.schedule.batch_size = sch.at("batch_size").get<int>();
  loaded.schedule.learning_rate = sch.at("learning_rate").get<double>();
  loaded.schedule.optimizer = sch.at("optimizer").get<std::string>() == "adam"
                                  ? Optimizer::adam
                                  : Optimizer::sgd;
  loaded.schedule.adam_beta1 = sch.at("adam_beta1").get<double>();
  loaded.schedule.adam_beta2 = sch.at("adam_beta2").get<double>();
  loaded.schedule.adam_epsilon = sch.at("adam_epsilon").get<double>();
  loaded.schedule.seed = sch.at("seed").get<std::uint64_t>();
  loaded.schedule.checkpoint_epochs =
      sch.at("checkpoint_epochs").get<std::vector<int>>();
  loaded.schedule.checkpoint_batches =
      sch.at("checkpoint_batches").get<std::vector<int>>();

  const auto& tag = doc.at("tag");
  loaded.checkpoint.tag.kind = tag.at("kind").get<std::string>() == "epoch"
                                   ? CheckpointTag::Kind::epoch
                                   : CheckpointTag::Kind::batch;
  loaded.checkpoint.tag.index = tag.at("index").get<int>();

  const auto& metrics = doc.at("metrics");
  loaded.checkpoint.train_error = metrics.at("train_error").get<double>();
  loaded.checkpoint.val_error = metrics.at("val_error").get<double>();
  loaded.checkpoint.test_error = metrics.at("test_error").get<double>();

  for (const auto& layer : doc.at("weights")) {
    const int rows = static_cast<int>(layer.size());
    const int cols = rows > 0 ? static_cast<int>(layer.at(0).size()) : 0;
    Matrix w(rows, cols);
    for (int r = 0; r < rows; ++r) {
      const auto& row = layer.at(r);
      if (static_cast<int>(row.size()) != cols)
        throw FormatError("checkpoint: ragged weight matrix in " + path);
      for (int c = 0; c < cols; ++c)
        w(r, c) = detail::hex_to_double(row.at(c).get<std::string>());
    }
    loaded.checkpoint.weights.push_back(std::move(w));
  }
  return loaded;
}

}  // namespace mlplab

#endif  // MLPLAB_CHECKPOINT_IO_HPP
