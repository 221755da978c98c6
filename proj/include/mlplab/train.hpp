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

#ifndef MLPLAB_TRAIN_HPP
#define MLPLAB_TRAIN_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "mlplab/dataset.hpp"
#include "mlplab/errors.hpp"
#include "mlplab/mlp.hpp"

namespace mlplab {

enum class Optimizer { adam, sgd };

inline std::string to_string(Optimizer o) {
  return o == Optimizer::adam ? "adam" : "sgd";
}

struct TrainSchedule {
  int max_epochs = 50;
  int batch_size = 64;
  double learning_rate = 1e-3;
  Optimizer optimizer = Optimizer::adam;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;
  std::uint64_t seed = 1;
  std::vector<int> checkpoint_epochs;   // 0 means the initialized network
  std::vector<int> checkpoint_batches;  // update indices within epoch 1

  void validate() const {
    if (max_epochs < 0) throw std::invalid_argument("TrainSchedule: max_epochs < 0");
    if (batch_size < 1) throw std::invalid_argument("TrainSchedule: batch_size < 1");
    if (!(learning_rate > 0.0))
      throw std::invalid_argument("TrainSchedule: learning_rate must be > 0");
  }
};

struct CheckpointTag {
  enum class Kind { epoch, batch } kind = Kind::epoch;
  int index = 0;

  std::string kind_name() const {
    return kind == Kind::epoch ? "epoch" : "batch";
  }
  bool operator==(const CheckpointTag&) const = default;
};

/// Frozen weight snapshot with the split errors measured at snapshot time.
struct Checkpoint {
  CheckpointTag tag;
  std::vector<Matrix> weights;  // deep copy, never aliased by training
  double train_error = 0.0;
  double val_error = 0.0;
  double test_error = 0.0;
};

struct EpochStats {
  int epoch = 0;
  double train_error = 0.0;
  double val_error = 0.0;
  double test_error = 0.0;
};

struct TrainResult {
  Mlp best;        // minimum-validation-error snapshot
  int best_epoch = 0;
  std::vector<Checkpoint> checkpoints;
  std::vector<EpochStats> history;  // one row per completed epoch
};

struct EvalResult {
  double accuracy = 0.0;
  double error = 0.0;
};

struct OptimizerState {
  long step = 0;
  std::vector<Matrix> m;  // first moments (adam)
  std::vector<Matrix> v;  // second moments (adam)
};

inline OptimizerState make_optimizer_state(const MlpConfig& config) {
  OptimizerState st;
  st.m = make_zero_gradients(config);
  st.v = make_zero_gradients(config);
  return st;
}

/// Applies one update in place. sgd: w -= lr*g. adam: bias-corrected
/// first/second moment update, epsilon added to the square root.
inline void optimizer_step(Mlp& mlp, const GradientSet& grads,
                           OptimizerState& state, const TrainSchedule& sched) {
  if (grads.size() != mlp.weights.size())
    throw std::invalid_argument("optimizer_step: gradient shape mismatch");
  for (std::size_t i = 0; i < grads.size(); ++i) {
    if (!grads[i].same_shape(mlp.weights[i]))
      throw std::invalid_argument("optimizer_step: gradient shape mismatch");
    if (!grads[i].all_finite())
      throw NumericError("optimizer_step: non-finite gradient at layer " +
                         std::to_string(i + 1));
  }

  if (sched.optimizer == Optimizer::sgd) {
    for (std::size_t i = 0; i < grads.size(); ++i) {
      auto& w = mlp.weights[i].data;
      const auto& g = grads[i].data;
      for (std::size_t k = 0; k < w.size(); ++k)
        w[k] -= sched.learning_rate * g[k];
    }
    return;
  }

  state.step += 1;
  const double b1 = sched.adam_beta1;
  const double b2 = sched.adam_beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < grads.size(); ++i) {
    auto& w = mlp.weights[i].data;
    auto& m = state.m[i].data;
    auto& v = state.v[i].data;
    const auto& g = grads[i].data;
    for (std::size_t k = 0; k < w.size(); ++k) {
      m[k] = b1 * m[k] + (1.0 - b1) * g[k];
      v[k] = b2 * v[k] + (1.0 - b2) * g[k] * g[k];
      const double m_hat = m[k] / c1;
      const double v_hat = v[k] / c2;
      w[k] -= sched.learning_rate * m_hat / (std::sqrt(v_hat) + sched.adam_epsilon);
    }
  }
}

/// Argmax prediction with ties broken toward the lowest class index.
inline int predict(const ForwardTrace& trace) {
  const std::vector<double>& out = trace.output();
  int best = 0;
  for (int j = 1; j < static_cast<int>(out.size()); ++j)
    if (out[j] > out[best]) best = j;
  return best;
}

inline EvalResult evaluate(const Mlp& mlp, const Dataset& data) {
  if (data.feature_dim != mlp.config.feature_dim)
    throw std::invalid_argument("evaluate: feature_dim mismatch");
  std::size_t correct = 0;
  ForwardTrace trace;
  for (const Sample& s : data.samples) {
    forward_into(mlp, s.features, trace);
    if (predict(trace) == s.label) ++correct;
  }
  EvalResult r;
  r.accuracy = data.samples.empty()
                   ? 0.0
                   : static_cast<double>(correct) / data.samples.size();
  r.error = 1.0 - r.accuracy;
  return r;
}

namespace detail {

inline Checkpoint snapshot(const Mlp& mlp, CheckpointTag tag,
                           const Dataset& train_ds, const Dataset& val_ds,
                           const Dataset& test_ds) {
  Checkpoint c;
  c.tag = tag;
  c.weights = mlp.weights;
  c.train_error = evaluate(mlp, train_ds).error;
  c.val_error = evaluate(mlp, val_ds).error;
  c.test_error = evaluate(mlp, test_ds).error;
  return c;
}

inline bool contains(const std::vector<int>& v, int x) {
  return std::find(v.begin(), v.end(), x) != v.end();
}

}  // namespace detail

/// Mini-batch training with per-epoch reshuffling under the schedule seed.
/// Gradients are averaged over the batch. Snapshots are captured at the
/// requested epoch indices and (within epoch 1) batch indices; the returned
/// best network is the epoch snapshot with the smallest validation error,
/// the initialized network counting as epoch 0.
inline TrainResult train(const MlpConfig& config, const Dataset& train_ds,
                         const Dataset& val_ds, const Dataset& test_ds,
                         const TrainSchedule& sched) {
  config.validate();
  sched.validate();
  if (train_ds.samples.empty() || val_ds.samples.empty() ||
      test_ds.samples.empty())
    throw std::invalid_argument("train: all splits must be non-empty");
  if (train_ds.feature_dim != config.feature_dim)
    throw std::invalid_argument("train: feature_dim mismatch");

  TrainResult result;
  Mlp mlp = init_normalized_uniform(config, sched.seed);
  OptimizerState opt = make_optimizer_state(config);
  // Separate stream so the shuffle order is independent of how many draws
  // initialization consumed.
  Rng shuffle_rng(sched.seed * 0x9E3779B97F4A7C15ULL + 0xD1B54A32D192ED03ULL);

  double best_val = evaluate(mlp, val_ds).error;
  result.best = mlp;
  result.best_epoch = 0;

  if (detail::contains(sched.checkpoint_epochs, 0))
    result.checkpoints.push_back(detail::snapshot(
        mlp, {CheckpointTag::Kind::epoch, 0}, train_ds, val_ds, test_ds));
  if (detail::contains(sched.checkpoint_batches, 0))
    result.checkpoints.push_back(detail::snapshot(
        mlp, {CheckpointTag::Kind::batch, 0}, train_ds, val_ds, test_ds));

  std::vector<std::size_t> order(train_ds.samples.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  GradientSet batch_grads = make_zero_gradients(config);
  std::vector<std::vector<double>> scratch;
  ForwardTrace trace;

  for (int epoch = 1; epoch <= sched.max_epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    const std::size_t n = order.size();
    int batch_index = 0;
    for (std::size_t start = 0; start < n; start += sched.batch_size) {
      const std::size_t end =
          std::min(n, start + static_cast<std::size_t>(sched.batch_size));
      const double inv = 1.0 / static_cast<double>(end - start);
      for (auto& g : batch_grads) g.fill(0.0);
      double batch_loss = 0.0;
      try {
        for (std::size_t s = start; s < end; ++s) {
          const Sample& sample = train_ds.samples[order[s]];
          forward_into(mlp, sample.features, trace);
          batch_loss += sample_loss(trace, sample.one_hot, config.loss);
          detail::backprop_accumulate(mlp, trace, sample.one_hot, batch_grads,
                                      scratch);
        }
        batch_loss *= inv / config.class_count();
        if (!std::isfinite(batch_loss))
          throw NumericError("loss is non-finite");
        for (auto& g : batch_grads)
          for (double& x : g.data) x *= inv;
        optimizer_step(mlp, batch_grads, opt, sched);
      } catch (const NumericError& e) {
        throw TrainingError("train: diverged at epoch " +
                            std::to_string(epoch) + ", batch " +
                            std::to_string(batch_index + 1) + " (" + e.what() +
                            ")");
      }
      ++batch_index;
      if (epoch == 1 && detail::contains(sched.checkpoint_batches, batch_index)) {
        try {
          result.checkpoints.push_back(
              detail::snapshot(mlp, {CheckpointTag::Kind::batch, batch_index},
                               train_ds, val_ds, test_ds));
        } catch (const NumericError& e) {
          throw TrainingError("train: diverged at epoch " +
                              std::to_string(epoch) + ", batch " +
                              std::to_string(batch_index) + " (" + e.what() +
                              ")");
        }
      }
    }

    EpochStats stats;
    stats.epoch = epoch;
    try {
      stats.train_error = evaluate(mlp, train_ds).error;
      stats.val_error = evaluate(mlp, val_ds).error;
      stats.test_error = evaluate(mlp, test_ds).error;
    } catch (const NumericError& e) {
      throw TrainingError("train: diverged at epoch " + std::to_string(epoch) +
                          " (" + e.what() + ")");
    }
    result.history.push_back(stats);

    if (detail::contains(sched.checkpoint_epochs, epoch))
      result.checkpoints.push_back(detail::snapshot(
          mlp, {CheckpointTag::Kind::epoch, epoch}, train_ds, val_ds, test_ds));

    if (stats.val_error < best_val) {
      best_val = stats.val_error;
      result.best = mlp;
      result.best_epoch = epoch;
    }
  }
  return result;
}

}  // namespace mlplab

#endif  // MLPLAB_TRAIN_HPP
