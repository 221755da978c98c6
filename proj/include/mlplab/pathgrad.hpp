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

#ifndef MLPLAB_PATHGRAD_HPP
#define MLPLAB_PATHGRAD_HPP

// Iterative path-enumeration form of the error gradient, and its
// certification against recursive backpropagation.
//
// In a ReLU network, the derivative of the error with respect to a single
// weight can be written as a sum over every forward path from that weight's
// destination node to the output layer: each path contributes the product
// of the switch states it crosses, the weights along it, and the
// classification gap at its endpoint, all scaled by the activation feeding
// the weight. Enumerating those paths is exponential in depth -- this
// module exists to verify backpropagation at small scale, not to train.
//
// Layer indices in this module are 1-based (layer N is the output layer),
// matching the mixed-radix path indexing; node indices are 0-based.

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "mlplab/dataset.hpp"
#include "mlplab/errors.hpp"
#include "mlplab/mlp.hpp"

namespace mlplab {
namespace pathgrad {

namespace detail {
inline std::uint64_t saturating_mul(std::uint64_t a, std::uint64_t b) {
  if (b != 0 && a > std::numeric_limits<std::uint64_t>::max() / b)
    return std::numeric_limits<std::uint64_t>::max();
  return a * b;
}
}  // namespace detail

/// Number of distinct paths from any node in layer `layer` to the output
/// layer: the product of the downstream layer widths (1 for the output
/// layer itself). Saturates at uint64 max rather than overflowing.
inline std::uint64_t path_count(const std::vector<int>& layer_sizes, int layer) {
  const int n = static_cast<int>(layer_sizes.size());
  if (layer < 1 || layer > n)
    throw std::invalid_argument("path_count: layer " + std::to_string(layer) +
                                " out of range 1.." + std::to_string(n));
  std::uint64_t p = 1;
  for (int m = layer + 1; m <= n; ++m)
    p = detail::saturating_mul(p, static_cast<std::uint64_t>(layer_sizes[m - 1]));
  return p;
}

/// Mixed-radix decoder for path ids anchored at one node.
///
/// A path id b in [0, path_count(i)) encodes one node choice per layer
/// downstream of the anchor: the node visited in layer r is
/// (b / path_count(r)) mod s_r, and the anchor layer always maps to the
/// anchor node. Sweeping b enumerates the Cartesian product of downstream
/// node ranges exactly once, with the output layer varying fastest.
struct PathIndexer {
  std::vector<int> layer_sizes;
  int anchor_layer = 1;  // 1-based
  int anchor_node = 0;
  std::vector<std::uint64_t> strides;  // strides[r-1] = path_count(r)
  std::uint64_t paths = 1;             // path_count(anchor_layer)

  PathIndexer(std::vector<int> sizes, int layer, int node)
      : layer_sizes(std::move(sizes)), anchor_layer(layer), anchor_node(node) {
    const int n = static_cast<int>(layer_sizes.size());
    if (layer < 1 || layer > n)
      throw std::invalid_argument("PathIndexer: anchor layer out of range");
    if (node < 0 || node >= layer_sizes[layer - 1])
      throw std::invalid_argument("PathIndexer: anchor node out of range");
    strides.resize(n);
    for (int r = 1; r <= n; ++r) strides[r - 1] = path_count(layer_sizes, r);
    paths = strides[layer - 1];
  }

  /// Node index visited in layer r by path b.
  int node_at(int r, std::uint64_t b) const {
    const int n = static_cast<int>(layer_sizes.size());
    if (r < anchor_layer || r > n)
      throw std::invalid_argument("PathIndexer: layer out of range");
    if (b >= paths)
      throw std::invalid_argument("PathIndexer: path id out of range");
    if (r == anchor_layer) return anchor_node;
    return static_cast<int>((b / strides[r - 1]) %
                            static_cast<std::uint64_t>(layer_sizes[r - 1]));
  }
};

/// One switched-on path from the anchor node to an output node.
struct ActivePath {
  std::uint64_t path_id = 0;    // canonical mixed-radix id of this path
  std::vector<int> nodes;       // visited nodes, one per layer past the anchor
  double weight_product = 1.0;  // product of the weights along the path
  double terminal_gap = 0.0;    // target minus output at the endpoint
};

/// Sample ids active at both endpoints of a weight coordinate.
struct SampleActivitySet {
  int layer = 1;  // 1-based
  int node_j = 0;
  int node_k = 0;
  std::vector<std::size_t> samples;
};

namespace detail {
inline void require_relu(const Mlp& mlp, const char* op) {
  if (mlp.config.hidden_activation != Activation::relu)
    throw UnsupportedError(std::string(op) +
                           ": the switch factorization only applies to ReLU "
                           "hidden activations");
}
}  // namespace detail

/// Brute-force dE/dw_{i,j,k} for one sample, summed over every downstream
/// path: the feeding activation times, per path id, the classification gap
/// at the endpoint, the switch states of layers i..N-1 along the path, and
/// the weights along the path. Positive gradient convention: the -eta of a
/// gradient-descent step is the optimizer's business.
inline double path_sum_gradient(const Mlp& mlp, const ForwardTrace& trace,
                                std::span<const double> target, int layer,
                                int node_j, int node_k) {
  detail::require_relu(mlp, "path_sum_gradient");
  const int n = mlp.config.layer_count();
  if (layer < 1 || layer > n)
    throw std::invalid_argument("path_sum_gradient: layer out of range");
  if (node_j < 0 || node_j >= mlp.config.layer_sizes[layer - 1])
    throw std::invalid_argument("path_sum_gradient: node_j out of range");
  if (node_k < 0 || node_k >= mlp.config.fan_in(layer - 1))
    throw std::invalid_argument("path_sum_gradient: node_k out of range");

  const std::vector<double>& feed =
      (layer == 1) ? trace.augmented_input : trace.activations[layer - 2];
  const double source = feed[node_k];

  const std::vector<double> delta = output_delta(trace, target, mlp.config.loss);
  PathIndexer idx(mlp.config.layer_sizes, layer, node_j);

  double sum = 0.0;
  for (std::uint64_t b = 0; b < idx.paths; ++b) {
    bool active = true;
    for (int g = layer; g <= n - 1; ++g) {
      if (!trace.switches[g - 1][idx.node_at(g, b)]) {
        active = false;
        break;
      }
    }
    if (!active) continue;
    double term = delta[idx.node_at(n, b)];
    for (int r = layer + 1; r <= n; ++r)
      term *= mlp.weights[r - 1](idx.node_at(r, b), idx.node_at(r - 1, b));
    sum += term;
  }
  return source * sum;
}

/// Every path from the anchor node whose switches (layers i..N-1) are all
/// on for this trace, in canonical path-id order. Each carries its weight
/// product and the target-minus-output gap at its endpoint; summing
/// weight_product * terminal_gap over the list and scaling by the feeding
/// activation gives the negated path-sum gradient.
inline std::vector<ActivePath> enumerate_active_paths(
    const Mlp& mlp, const ForwardTrace& trace, std::span<const double> target,
    int layer, int node_j) {
  detail::require_relu(mlp, "enumerate_active_paths");
  const int n = mlp.config.layer_count();
  if (layer < 1 || layer > n)
    throw std::invalid_argument("enumerate_active_paths: layer out of range");
  if (node_j < 0 || node_j >= mlp.config.layer_sizes[layer - 1])
    throw std::invalid_argument("enumerate_active_paths: node out of range");

  const std::vector<double> delta = output_delta(trace, target, mlp.config.loss);
  std::vector<ActivePath> out;

  if (layer == n) {
    // Zero-length path: the anchor is an output node.
    ActivePath p;
    p.terminal_gap = -delta[node_j];
    out.push_back(std::move(p));
    return out;
  }
  if (!trace.switches[layer - 1][node_j]) return out;

  const PathIndexer indexer(mlp.config.layer_sizes, layer, node_j);
  std::vector<int> nodes(n - layer);
  auto descend = [&](auto&& self, int r, int prev_node, double product,
                     std::uint64_t id) -> void {
    if (r == n) {
      for (int q = 0; q < mlp.config.layer_sizes[n - 1]; ++q) {
        ActivePath p;
        nodes[r - layer - 1] = q;
        p.path_id = id + static_cast<std::uint64_t>(q);
        p.nodes = nodes;
        p.weight_product = product * mlp.weights[n - 1](q, prev_node);
        p.terminal_gap = -delta[q];
        out.push_back(std::move(p));
      }
      return;
    }
    for (int q = 0; q < mlp.config.layer_sizes[r - 1]; ++q) {
      if (!trace.switches[r - 1][q]) continue;
      nodes[r - layer - 1] = q;
      self(self, r + 1, q, product * mlp.weights[r - 1](q, prev_node),
           id + static_cast<std::uint64_t>(q) * indexer.strides[r - 1]);
    }
  };
  descend(descend, layer + 1, node_j, 1.0, 0);
  return out;
}

/// Samples active at the weight coordinate (layer, j, k): switched on at
/// node j, and at node k of the previous layer (for layer 1, a nonzero
/// augmented input feature counts as active).
inline SampleActivitySet active_sample_set(
    const std::vector<ForwardTrace>& traces, int layer, int node_j, int node_k) {
  SampleActivitySet set;
  set.layer = layer;
  set.node_j = node_j;
  set.node_k = node_k;
  for (std::size_t s = 0; s < traces.size(); ++s) {
    const ForwardTrace& t = traces[s];
    if (!t.switches[layer - 1][node_j]) continue;
    if (layer == 1) {
      if (t.augmented_input[node_k] == 0.0) continue;
    } else {
      if (!t.switches[layer - 2][node_k]) continue;
    }
    set.samples.push_back(s);
  }
  return set;
}

struct CoordDiff {
  std::size_t sample = 0;
  int layer = 1;
  int node_j = 0;
  int node_k = 0;
  double backprop_value = 0.0;
  double path_sum_value = 0.0;
  double abs_diff = 0.0;
};

struct EquivalenceReport {
  double max_abs_diff = 0.0;
  double max_rel_diff = 0.0;
  std::uint64_t total_paths = 0;  // path count from layer 1
  std::size_t samples_checked = 0;
  std::size_t coords_checked = 0;  // coordinate-sample pairs compared
  std::vector<CoordDiff> exceeding;  // pairs above tolerance (capped)
};

struct EquivalenceOptions {
  std::uint64_t path_budget = 1'000'000;
  double tolerance = 1e-10;
  std::size_t max_reported = 1000;
};

/// Compares every weight coordinate's backpropagation derivative against
/// the path-sum derivative, per sample. Refuses nets whose layer-1 path
/// count exceeds the budget.
inline EquivalenceReport gradient_equivalence_report(
    const Mlp& mlp, const std::vector<Sample>& samples,
    const EquivalenceOptions& opts = {}) {
  detail::require_relu(mlp, "gradient_equivalence_report");
  const std::uint64_t b1 = path_count(mlp.config.layer_sizes, 1);
  if (b1 > opts.path_budget)
    throw PathBudgetError(
        "gradient_equivalence_report: path count " + std::to_string(b1) +
            " exceeds budget " + std::to_string(opts.path_budget),
        b1);

  EquivalenceReport report;
  report.total_paths = b1;
  const int n = mlp.config.layer_count();
  for (std::size_t s = 0; s < samples.size(); ++s) {
    const Sample& sample = samples[s];
    const ForwardTrace trace = forward(mlp, sample.features);
    const GradientSet grads = backprop(mlp, trace, sample.one_hot);
    for (int layer = 1; layer <= n; ++layer) {
      const Matrix& g = grads[layer - 1];
      for (int j = 0; j < g.rows; ++j) {
        for (int k = 0; k < g.cols; ++k) {
          const double bp = g(j, k);
          const double ps =
              path_sum_gradient(mlp, trace, sample.one_hot, layer, j, k);
          const double abs_diff = std::abs(bp - ps);
          const double scale = std::max(std::abs(bp), std::abs(ps));
          const double rel = scale > 0.0 ? abs_diff / scale : 0.0;
          report.max_abs_diff = std::max(report.max_abs_diff, abs_diff);
          report.max_rel_diff = std::max(report.max_rel_diff, rel);
          ++report.coords_checked;
          if (abs_diff > opts.tolerance &&
              report.exceeding.size() < opts.max_reported)
            report.exceeding.push_back({s, layer, j, k, bp, ps, abs_diff});
        }
      }
    }
    ++report.samples_checked;
  }
  return report;
}

}  // namespace pathgrad
}  // namespace mlplab

#endif  // MLPLAB_PATHGRAD_HPP
