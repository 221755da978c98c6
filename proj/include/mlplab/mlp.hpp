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

#ifndef MLPLAB_MLP_HPP
#define MLPLAB_MLP_HPP

// Fully-connected feedforward networks in 64-bit floats. Layers are stored
// 0-based; layer_sizes[0] is the first hidden layer and layer_sizes.back()
// the output layer. The bias lives in the first layer only, as one extra
// input column fed by a constant-1 feature appended to every input vector.

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "mlplab/errors.hpp"
#include "mlplab/matrix.hpp"
#include "mlplab/rng.hpp"

namespace mlplab {

enum class Activation { relu, sigmoid };
enum class Loss { mse_linear, ce_softmax };

inline std::string to_string(Activation a) {
  return a == Activation::relu ? "relu" : "sigmoid";
}
inline std::string to_string(Loss l) {
  return l == Loss::mse_linear ? "mse_linear" : "ce_softmax";
}

struct MlpConfig {
  std::vector<int> layer_sizes;  // hidden layers then output layer
  Activation hidden_activation = Activation::relu;
  Loss loss = Loss::mse_linear;
  int feature_dim = 0;

  int layer_count() const { return static_cast<int>(layer_sizes.size()); }
  int class_count() const { return layer_sizes.back(); }

  /// Input width of layer i (0-based); layer 0 carries the bias column.
  int fan_in(int layer) const {
    return layer == 0 ? feature_dim + 1 : layer_sizes[layer - 1];
  }

  void validate() const {
    if (layer_sizes.empty())
      throw std::invalid_argument("MlpConfig: layer_sizes must be non-empty");
    for (int s : layer_sizes)
      if (s < 1) throw std::invalid_argument("MlpConfig: layer sizes must be positive");
    if (feature_dim < 1)
      throw std::invalid_argument("MlpConfig: feature_dim must be positive");
  }

  bool operator==(const MlpConfig&) const = default;
};

struct Mlp {
  MlpConfig config;
  std::vector<Matrix> weights;  // weights[i]: layer_sizes[i] x fan_in(i)
};

/// Per-layer gradients, shape-congruent with Mlp::weights.
using GradientSet = std::vector<Matrix>;

/// Everything one forward pass produces: the augmented input, and per layer
/// the pre-activations, activations and binary switch states. For ReLU a
/// switch is on iff the pre-activation is strictly positive; for sigmoid
/// iff the activation exceeds 0.5; for the output layer, linear outputs
/// switch on pre-activation > 0 and softmax outputs on probability > 0.5.
struct ForwardTrace {
  std::vector<double> augmented_input;               // features + trailing 1
  std::vector<std::vector<double>> pre_activations;  // per layer
  std::vector<std::vector<double>> activations;      // per layer
  std::vector<std::vector<std::uint8_t>> switches;   // per layer

  int layer_count() const { return static_cast<int>(pre_activations.size()); }
  const std::vector<double>& output() const { return activations.back(); }
};

inline GradientSet make_zero_gradients(const MlpConfig& config) {
  GradientSet g;
  g.reserve(config.layer_sizes.size());
  for (int i = 0; i < config.layer_count(); ++i)
    g.emplace_back(config.layer_sizes[i], config.fan_in(i));
  return g;
}

/// Normalized uniform (Glorot) initialization: each non-bias weight of
/// layer i is drawn from U(-b, b) with b = sqrt(6 / (fan_in + fan_out)),
/// fan_in counted without the bias column. Bias weights start at 0.
inline Mlp init_normalized_uniform(const MlpConfig& config, std::uint64_t seed) {
  config.validate();
  Mlp mlp;
  mlp.config = config;
  mlp.weights.reserve(config.layer_sizes.size());
  Rng rng(seed);
  for (int i = 0; i < config.layer_count(); ++i) {
    const int rows = config.layer_sizes[i];
    const int cols = config.fan_in(i);
    const int real_inputs = (i == 0) ? config.feature_dim : cols;
    const double bound = std::sqrt(6.0 / (real_inputs + rows));
    Matrix w(rows, cols);
    for (int r = 0; r < rows; ++r) {
      for (int c = 0; c < cols; ++c) {
        const bool bias = (i == 0 && c == config.feature_dim);
        w(r, c) = bias ? 0.0 : rng.uniform(-bound, bound);
      }
    }
    mlp.weights.push_back(std::move(w));
  }
  return mlp;
}

/// Numerically stable softmax; forward() and output_delta() share this
/// exact arithmetic path.
inline std::vector<double> softmax(std::span<const double> logits) {
  double m = logits[0];
  for (double v : logits) m = std::max(m, v);
  std::vector<double> p(logits.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    p[i] = std::exp(logits[i] - m);
    sum += p[i];
  }
  for (double& v : p) v /= sum;
  return p;
}

inline double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

/// Forward pass writing into a reusable trace (the hot path in training).
inline void forward_into(const Mlp& mlp, std::span<const double> features,
                         ForwardTrace& trace) {
  const MlpConfig& cfg = mlp.config;
  if (static_cast<int>(features.size()) != cfg.feature_dim)
    throw std::invalid_argument(
        "forward: expected " + std::to_string(cfg.feature_dim) +
        " features, got " + std::to_string(features.size()));

  const int layers = cfg.layer_count();
  trace.augmented_input.resize(cfg.feature_dim + 1);
  std::copy(features.begin(), features.end(), trace.augmented_input.begin());
  trace.augmented_input.back() = 1.0;
  trace.pre_activations.resize(layers);
  trace.activations.resize(layers);
  trace.switches.resize(layers);

  const std::vector<double>* prev = &trace.augmented_input;
  for (int i = 0; i < layers; ++i) {
    const int width = cfg.layer_sizes[i];
    auto& z = trace.pre_activations[i];
    auto& a = trace.activations[i];
    auto& on = trace.switches[i];
    z.resize(width);
    a.resize(width);
    on.resize(width);
    matvec(mlp.weights[i], *prev, z);

    const bool is_output = (i == layers - 1);
    if (!is_output) {
      if (cfg.hidden_activation == Activation::relu) {
        for (int j = 0; j < width; ++j) {
          const bool active = z[j] > 0.0;
          on[j] = active ? 1 : 0;
          a[j] = active ? z[j] : 0.0;
        }
      } else {
        for (int j = 0; j < width; ++j) {
          a[j] = sigmoid(z[j]);
          on[j] = a[j] > 0.5 ? 1 : 0;
        }
      }
    } else {
      if (cfg.loss == Loss::mse_linear) {
        for (int j = 0; j < width; ++j) {
          a[j] = z[j];
          on[j] = z[j] > 0.0 ? 1 : 0;
        }
      } else {
        a = softmax(z);
        for (int j = 0; j < width; ++j) on[j] = a[j] > 0.5 ? 1 : 0;
      }
    }

    for (int j = 0; j < width; ++j) {
      if (!std::isfinite(z[j]) || !std::isfinite(a[j]))
        throw NumericError("forward: non-finite value at layer " +
                           std::to_string(i + 1));
    }
    prev = &a;
  }
}

inline ForwardTrace forward(const Mlp& mlp, std::span<const double> features) {
  ForwardTrace trace;
  forward_into(mlp, features, trace);
  return trace;
}

namespace detail {
inline void require_one_hot(std::span<const double> target) {
  int ones = 0;
  for (double v : target) {
    if (v == 1.0) {
      ++ones;
    } else if (v != 0.0) {
      throw std::invalid_argument(
          "output_delta: ce_softmax requires a one-hot target");
    }
  }
  if (ones != 1)
    throw std::invalid_argument(
        "output_delta: ce_softmax requires a one-hot target");
}
}  // namespace detail

/// The classification gap at the output layer: output minus target. For
/// mse_linear this is z_out - y; for ce_softmax it is softmax(z_out) - y,
/// which takes the same form when targets are one-hot.
inline std::vector<double> output_delta(const ForwardTrace& trace,
                                        std::span<const double> target,
                                        Loss loss) {
  const std::vector<double>& out = trace.activations.back();
  if (target.size() != out.size())
    throw std::invalid_argument("output_delta: target size mismatch");
  if (loss == Loss::ce_softmax) detail::require_one_hot(target);
  std::vector<double> delta(out.size());
  for (std::size_t j = 0; j < out.size(); ++j) delta[j] = out[j] - target[j];
  return delta;
}

namespace detail {

inline void check_trace_shape(const Mlp& mlp, const ForwardTrace& trace) {
  const MlpConfig& cfg = mlp.config;
  if (trace.layer_count() != cfg.layer_count() ||
      static_cast<int>(trace.augmented_input.size()) != cfg.feature_dim + 1)
    throw std::invalid_argument("backprop: trace does not match network shape");
  for (int i = 0; i < cfg.layer_count(); ++i)
    if (static_cast<int>(trace.pre_activations[i].size()) != cfg.layer_sizes[i])
      throw std::invalid_argument("backprop: trace does not match network shape");
}

/// Accumulates this sample's gradient contribution into `grads`.
/// scratch_dz holds one dE/dz vector per layer and is resized as needed.
inline void backprop_accumulate(const Mlp& mlp, const ForwardTrace& trace,
                                std::span<const double> target,
                                GradientSet& grads,
                                std::vector<std::vector<double>>& scratch_dz) {
  const MlpConfig& cfg = mlp.config;
  const int layers = cfg.layer_count();
  scratch_dz.resize(layers);

  // Output layer: for linear outputs the activation derivative is 1, and
  // for softmax+CE the Jacobian folds into the same output-minus-target
  // form, so dE/dz_out is exactly the classification gap.
  scratch_dz[layers - 1] = output_delta(trace, target, cfg.loss);

  for (int i = layers - 2; i >= 0; --i) {
    const int width = cfg.layer_sizes[i];
    auto& dz = scratch_dz[i];
    dz.assign(width, 0.0);
    const Matrix& w_next = mlp.weights[i + 1];
    const auto& dz_next = scratch_dz[i + 1];
    for (int n = 0; n < w_next.rows; ++n) {
      const double g = dz_next[n];
      if (g == 0.0) continue;
      const double* row = w_next.data.data() +
                          static_cast<std::size_t>(n) * w_next.cols;
      for (int j = 0; j < width; ++j) dz[j] += row[j] * g;
    }
    if (cfg.hidden_activation == Activation::relu) {
      const auto& on = trace.switches[i];
      for (int j = 0; j < width; ++j)
        if (!on[j]) dz[j] = 0.0;
    } else {
      const auto& a = trace.activations[i];
      for (int j = 0; j < width; ++j) dz[j] *= a[j] * (1.0 - a[j]);
    }
  }

  for (int i = 0; i < layers; ++i) {
    const std::vector<double>& in =
        (i == 0) ? trace.augmented_input : trace.activations[i - 1];
    Matrix& g = grads[i];
    const auto& dz = scratch_dz[i];
    for (int j = 0; j < g.rows; ++j) {
      const double d = dz[j];
      if (d == 0.0) continue;
      double* row = g.data.data() + static_cast<std::size_t>(j) * g.cols;
      for (int k = 0; k < g.cols; ++k) row[k] += d * in[k];
    }
  }
}

}  // namespace detail

/// Recursive backpropagation: dE/dz at the output is the classification
/// gap; each hidden node folds the weighted sum of its forward connections
/// through its activation derivative (the switch state, for ReLU); the
/// gradient for weight (i,j,k) is dE/dz_{i,j} times the feeding activation.
inline GradientSet backprop(const Mlp& mlp, const ForwardTrace& trace,
                            std::span<const double> target) {
  detail::check_trace_shape(mlp, trace);
  GradientSet grads = make_zero_gradients(mlp.config);
  std::vector<std::vector<double>> scratch;
  detail::backprop_accumulate(mlp, trace, target, grads, scratch);
  return grads;
}

/// Per-sample loss matching the gradient convention: 0.5*sum((out-y)^2)
/// for mse_linear, -sum(y*log(p)) for ce_softmax.
inline double sample_loss(const ForwardTrace& trace,
                          std::span<const double> target, Loss loss) {
  const std::vector<double>& out = trace.activations.back();
  double e = 0.0;
  if (loss == Loss::mse_linear) {
    for (std::size_t j = 0; j < out.size(); ++j) {
      const double d = out[j] - target[j];
      e += 0.5 * d * d;
    }
  } else {
    for (std::size_t j = 0; j < out.size(); ++j)
      if (target[j] != 0.0) e -= target[j] * std::log(out[j]);
  }
  return e;
}

}  // namespace mlplab

#endif  // MLPLAB_MLP_HPP
