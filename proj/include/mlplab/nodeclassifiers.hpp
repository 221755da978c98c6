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

#ifndef MLPLAB_NODECLASSIFIERS_HPP
#define MLPLAB_NODECLASSIFIERS_HPP

// Per-node likelihood estimators over pre-activation values, composed into
// naive-Bayes layer classifiers. Three systems share one fit:
//   discrete   -- switch-state ratio per class: P(on|class), clamped;
//   continuous -- Gaussian KDE over the class's pre-activations;
//   combined   -- discrete estimate for z <= 0, continuous for z > 0.
// A layer classifier sums per-node log likelihoods, adds the log class
// prior once, and normalizes with log-sum-exp.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>
#include <vector>

#include "mlplab/csv.hpp"
#include "mlplab/dataset.hpp"
#include "mlplab/errors.hpp"
#include "mlplab/mlp.hpp"
#include "mlplab/perplexity.hpp"
#include "mlplab/train.hpp"

namespace mlplab {
namespace nodecls {

enum class System { discrete, continuous, combined };

inline std::string to_string(System s) {
  switch (s) {
    case System::discrete: return "discrete";
    case System::continuous: return "continuous";
    default: return "combined";
  }
}

inline constexpr double kInvSqrt2Pi = 0.3989422804014327;

/// Gaussian kernel density estimate over a fixed sample store.
struct Kde {
  std::vector<double> values;  // sorted ascending
  double bandwidth = 1.0;

  /// Exact density at z. Kernels further than 10 bandwidths contribute
  /// below 2e-22 of their mass and are skipped.
  double density(double z) const {
    if (values.empty() || bandwidth <= 0.0)
      throw StateError("Kde: not fitted");
    const double window = 10.0 * bandwidth;
    auto lo = std::lower_bound(values.begin(), values.end(), z - window);
    auto hi = std::upper_bound(values.begin(), values.end(), z + window);
    double sum = 0.0;
    for (auto it = lo; it != hi; ++it) {
      const double u = (z - *it) / bandwidth;
      sum += std::exp(-0.5 * u * u);
    }
    return sum * kInvSqrt2Pi / (bandwidth * static_cast<double>(values.size()));
  }
};

/// Silverman's rule on a sorted sample: 0.9 * min(sd, IQR/1.34) * m^(-1/5),
/// floored so degenerate all-equal stores still get a usable bandwidth.
inline double silverman_bandwidth(const std::vector<double>& sorted,
                                  double floor_value = 1e-3) {
  const std::size_t m = sorted.size();
  if (m < 2) return floor_value;
  double mean = 0.0;
  for (double v : sorted) mean += v;
  mean /= static_cast<double>(m);
  double ss = 0.0;
  for (double v : sorted) ss += (v - mean) * (v - mean);
  const double sd = std::sqrt(ss / static_cast<double>(m - 1));

  auto quantile = [&](double q) {
    const double pos = q * static_cast<double>(m - 1);
    const std::size_t i = static_cast<std::size_t>(pos);
    const double frac = pos - static_cast<double>(i);
    return i + 1 < m ? sorted[i] * (1.0 - frac) + sorted[i + 1] * frac
                     : sorted[i];
  };
  const double iqr = quantile(0.75) - quantile(0.25);

  const double spread = std::min(sd, iqr / 1.34);
  const double h = 0.9 * spread * std::pow(static_cast<double>(m), -0.2);
  return std::max(h, floor_value);
}

/// Precomputed density grid for bulk scoring. Sources are linearly binned
/// onto a grid at most bandwidth/20 apart and convolved with a sampled
/// kernel; queries interpolate linearly. Relative error is a few 1e-3,
/// well below the accuracy scales these classifiers are compared at. Falls
/// back to exact evaluation when a degenerate spread would need an
/// enormous grid.
struct KdeTable {
  double lo = 0.0;
  double step = 1.0;
  std::vector<double> grid;
  bool exact_fallback = true;  // an unbuilt table defers to Kde::density

  static KdeTable build(const Kde& kde) {
    if (kde.values.empty() || kde.bandwidth <= 0.0)
      throw StateError("KdeTable: not fitted");
    KdeTable t;
    t.exact_fallback = false;
    const double h = kde.bandwidth;
    const double vmin = kde.values.front();
    const double vmax = kde.values.back();
    const double span = (vmax - vmin) + 16.0 * h;
    const double target_step = h / 20.0;
    const double points = span / target_step + 2.0;
    if (points > 65536.0) {
      t.exact_fallback = true;
      return t;
    }
    const int g = std::max(64, static_cast<int>(points));
    t.lo = vmin - 8.0 * h;
    t.step = span / static_cast<double>(g - 1);
    t.grid.assign(g, 0.0);

    std::vector<double> mass(g, 0.0);
    for (double v : kde.values) {
      const double x = (v - t.lo) / t.step;
      const int i = std::min(g - 2, std::max(0, static_cast<int>(x)));
      const double frac = std::min(1.0, std::max(0.0, x - i));
      mass[i] += 1.0 - frac;
      mass[i + 1] += frac;
    }

    const int taps = static_cast<int>(std::ceil(8.0 * h / t.step));
    std::vector<double> kernel(taps + 1);
    const double norm =
        kInvSqrt2Pi / (h * static_cast<double>(kde.values.size()));
    for (int d = 0; d <= taps; ++d) {
      const double u = static_cast<double>(d) * t.step / h;
      kernel[d] = norm * std::exp(-0.5 * u * u);
    }
    for (int i = 0; i < g; ++i) {
      if (mass[i] == 0.0) continue;
      const double m = mass[i];
      const int dlo = std::max(-taps, -i);
      const int dhi = std::min(taps, g - 1 - i);
      for (int d = dlo; d <= dhi; ++d)
        t.grid[i + d] += m * kernel[d < 0 ? -d : d];
    }
    return t;
  }

  double density(const Kde& kde, double z) const {
    if (exact_fallback) return kde.density(z);
    const double x = (z - lo) / step;
    if (x <= 0.0 || x >= static_cast<double>(grid.size() - 1)) return 0.0;
    const int i = static_cast<int>(x);
    const double frac = x - i;
    return grid[i] * (1.0 - frac) + grid[i + 1] * frac;
  }
};

/// One (node, class) model: the switch ratio plus the KDE store.
struct NodeClassModel {
  double on_ratio = 0.5;  // clamped P(switch on | class)
  Kde kde;
  KdeTable table;
};

struct FitOptions {
  bool include_output_layer = false;
  double likelihood_floor = 1e-6;   // also the on_ratio clamp
  double bandwidth_floor = 1e-3;
};

/// All per-node estimators fitted from one frozen network, plus the class
/// priors. Immutable after fitting; safe for concurrent classification.
struct NodeEstimators {
  std::vector<int> layer_sizes;  // covered layers, starting at hidden layer 1
  int class_count = 0;
  double likelihood_floor = 1e-6;
  std::vector<double> priors;
  // models[layer][node][class], layer 0-based over covered layers
  std::vector<std::vector<std::vector<NodeClassModel>>> models;

  int covered_layers() const { return static_cast<int>(layer_sizes.size()); }

  /// Likelihood P(z | class) under one system. `layer` is 1-based.
  double likelihood(System system, int layer, int node, int klass, double z,
                    bool use_table = false) const {
    const NodeClassModel& m = models[layer - 1][node][klass];
    switch (system) {
      case System::discrete:
        return z > 0.0 ? m.on_ratio : 1.0 - m.on_ratio;
      case System::continuous: {
        const double d = use_table ? m.table.density(m.kde, z) : m.kde.density(z);
        return std::max(d, likelihood_floor);
      }
      default:
        if (z <= 0.0) return 1.0 - m.on_ratio;
        const double d = use_table ? m.table.density(m.kde, z) : m.kde.density(z);
        return std::max(d, likelihood_floor);
    }
  }
};

/// Fits the discrete ratios and KDE stores for every covered node and
/// class from the training split's pre-activations.
inline NodeEstimators fit_estimators(const Mlp& mlp, const Dataset& train,
                                     const FitOptions& opts = {}) {
  const MlpConfig& cfg = mlp.config;
  const int covered =
      cfg.layer_count() - (opts.include_output_layer ? 0 : 1);

  std::vector<long long> class_counts(train.class_count, 0);
  for (const Sample& s : train.samples) ++class_counts[s.label];
  for (int c = 0; c < train.class_count; ++c)
    if (class_counts[c] < 2)
      throw FitError("fit_estimators: class " + std::to_string(c) + " has " +
                     std::to_string(class_counts[c]) +
                     " training samples; at least 2 are required");

  NodeEstimators est;
  est.layer_sizes.assign(cfg.layer_sizes.begin(),
                         cfg.layer_sizes.begin() + covered);
  est.class_count = train.class_count;
  est.likelihood_floor = opts.likelihood_floor;
  est.priors = train.class_priors;
  est.models.resize(covered);
  for (int l = 0; l < covered; ++l)
    est.models[l].assign(cfg.layer_sizes[l],
                         std::vector<NodeClassModel>(train.class_count));

  // Gather pre-activations and switch counts in one pass.
  std::vector<std::vector<std::vector<std::vector<double>>>> values(covered);
  std::vector<std::vector<std::vector<long long>>> on_counts(covered);
  for (int l = 0; l < covered; ++l) {
    values[l].assign(cfg.layer_sizes[l],
                     std::vector<std::vector<double>>(train.class_count));
    on_counts[l].assign(cfg.layer_sizes[l],
                        std::vector<long long>(train.class_count, 0));
    for (int j = 0; j < cfg.layer_sizes[l]; ++j)
      for (int c = 0; c < train.class_count; ++c)
        values[l][j][c].reserve(class_counts[c]);
  }
  ForwardTrace trace;
  for (const Sample& s : train.samples) {
    forward_into(mlp, s.features, trace);
    for (int l = 0; l < covered; ++l) {
      const auto& z = trace.pre_activations[l];
      const auto& on = trace.switches[l];
      for (int j = 0; j < cfg.layer_sizes[l]; ++j) {
        values[l][j][s.label].push_back(z[j]);
        if (on[j]) ++on_counts[l][j][s.label];
      }
    }
  }

  const double eps = opts.likelihood_floor;
  for (int l = 0; l < covered; ++l) {
    for (int j = 0; j < cfg.layer_sizes[l]; ++j) {
      for (int c = 0; c < train.class_count; ++c) {
        NodeClassModel& m = est.models[l][j][c];
        const double ratio = static_cast<double>(on_counts[l][j][c]) /
                             static_cast<double>(class_counts[c]);
        m.on_ratio = std::min(1.0 - eps, std::max(eps, ratio));
        m.kde.values = std::move(values[l][j][c]);
        std::sort(m.kde.values.begin(), m.kde.values.end());
        m.kde.bandwidth =
            silverman_bandwidth(m.kde.values, opts.bandwidth_floor);
        m.table = KdeTable::build(m.kde);
      }
    }
  }
  return est;
}

/// Non-owning view: one layer, one system, over a fitted estimator set.
struct LayerClassifier {
  const NodeEstimators* fitted = nullptr;
  int layer = 1;  // 1-based
  System system = System::discrete;
  bool use_tables = false;

  /// Posterior per class for one trace (Bayes over the layer's nodes).
  std::vector<double> posterior(const ForwardTrace& trace) const {
    if (!fitted) throw StateError("LayerClassifier: no fitted estimators");
    const int k = fitted->class_count;
    const auto& z = trace.pre_activations[layer - 1];
    std::vector<double> score(k);
    for (int c = 0; c < k; ++c) {
      double s = std::log(fitted->priors[c]);
      for (int j = 0; j < fitted->layer_sizes[layer - 1]; ++j)
        s += std::log(
            fitted->likelihood(system, layer, j, c, z[j], use_tables));
      score[c] = s;
    }
    double m = score[0];
    for (double v : score) m = std::max(m, v);
    double sum = 0.0;
    for (int c = 0; c < k; ++c) {
      score[c] = std::exp(score[c] - m);
      sum += score[c];
    }
    for (double& v : score) v /= sum;
    return score;
  }

  int classify(const ForwardTrace& trace) const {
    const std::vector<double> p = posterior(trace);
    int best = 0;
    for (int c = 1; c < static_cast<int>(p.size()); ++c)
      if (p[c] > p[best]) best = c;
    return best;
  }
};

struct SystemsRow {
  CheckpointTag tag;
  int layer = 0;        // 0 marks the whole-network reference row
  std::string system;   // discrete | continuous | combined | network
  std::string split;    // train | test
  double accuracy = 0.0;
};

struct SystemsAccuracyTable {
  std::vector<SystemsRow> rows;
};

namespace detail {

struct LayerHits {
  long long discrete = 0;
  long long continuous = 0;
  long long combined = 0;
};

inline void score_split(const Mlp& mlp, const NodeEstimators& est,
                        const Dataset& data, std::vector<LayerHits>& hits,
                        long long& network_hits) {
  const int covered = est.covered_layers();
  const int k = est.class_count;
  ForwardTrace trace;
  std::vector<double> sd(k), sc(k), sm(k);
  for (const Sample& sample : data.samples) {
    forward_into(mlp, sample.features, trace);
    if (predict(trace) == sample.label) ++network_hits;
    for (int l = 0; l < covered; ++l) {
      const auto& z = trace.pre_activations[l];
      for (int c = 0; c < k; ++c) {
        const double lp = std::log(est.priors[c]);
        sd[c] = lp;
        sc[c] = lp;
        sm[c] = lp;
      }
      for (int j = 0; j < est.layer_sizes[l]; ++j) {
        const double zj = z[j];
        const auto& node_models = est.models[l][j];
        for (int c = 0; c < k; ++c) {
          const NodeClassModel& m = node_models[c];
          const double disc = zj > 0.0 ? m.on_ratio : 1.0 - m.on_ratio;
          const double dens =
              std::max(m.table.density(m.kde, zj), est.likelihood_floor);
          sd[c] += std::log(disc);
          sc[c] += std::log(dens);
          sm[c] += std::log(zj > 0.0 ? dens : disc);
        }
      }
      auto argmax = [&](const std::vector<double>& s) {
        int best = 0;
        for (int c = 1; c < k; ++c)
          if (s[c] > s[best]) best = c;
        return best;
      };
      if (argmax(sd) == sample.label) ++hits[l].discrete;
      if (argmax(sc) == sample.label) ++hits[l].continuous;
      if (argmax(sm) == sample.label) ++hits[l].combined;
    }
  }
}

}  // namespace detail

/// Re-fits the estimators at every checkpoint and records train/test
/// accuracy for each (layer, system), plus the network's own accuracy as a
/// reference row (layer 0, system "network").
inline SystemsAccuracyTable evaluate_systems(const MlpConfig& config,
                                             const std::vector<Checkpoint>& checkpoints,
                                             const Dataset& train,
                                             const Dataset& test,
                                             const FitOptions& opts = {}) {
  for (const Checkpoint& c : checkpoints) {
    if (c.weights.size() != static_cast<std::size_t>(config.layer_count()))
      throw std::invalid_argument("evaluate_systems: checkpoint architecture mismatch");
    for (int i = 0; i < config.layer_count(); ++i)
      if (c.weights[i].rows != config.layer_sizes[i] ||
          c.weights[i].cols != config.fan_in(i))
        throw std::invalid_argument("evaluate_systems: checkpoint architecture mismatch");
  }

  SystemsAccuracyTable table;
  for (const Checkpoint& ckpt : checkpoints) {
    const Mlp mlp{config, ckpt.weights};
    const NodeEstimators est = fit_estimators(mlp, train, opts);
    const int covered = est.covered_layers();

    struct SplitRef {
      const char* name;
      const Dataset* data;
    };
    const SplitRef splits[2] = {{"train", &train}, {"test", &test}};
    for (const SplitRef& split : splits) {
      std::vector<detail::LayerHits> hits(covered);
      long long network_hits = 0;
      detail::score_split(mlp, est, *split.data, hits, network_hits);
      const double n = static_cast<double>(split.data->samples.size());
      table.rows.push_back({ckpt.tag, 0, "network", split.name,
                            static_cast<double>(network_hits) / n});
      for (int l = 0; l < covered; ++l) {
        table.rows.push_back({ckpt.tag, l + 1, "discrete", split.name,
                              static_cast<double>(hits[l].discrete) / n});
        table.rows.push_back({ckpt.tag, l + 1, "continuous", split.name,
                              static_cast<double>(hits[l].continuous) / n});
        table.rows.push_back({ckpt.tag, l + 1, "combined", split.name,
                              static_cast<double>(hits[l].combined) / n});
      }
    }
  }
  return table;
}

inline void write_systems_csv(const SystemsAccuracyTable& table,
                              const patterns::RunAttribution& attr,
                              const std::string& path) {
  CsvWriter csv(path);
  std::vector<std::string> header = {"depth", "width", "seed",
                                     "checkpoint_kind", "checkpoint_index",
                                     "layer", "system", "split", "accuracy"};
  csv.row(header);
  for (const SystemsRow& r : table.rows) {
    csv.row({std::to_string(attr.depth), std::to_string(attr.width),
             std::to_string(attr.seed), r.tag.kind_name(),
             std::to_string(r.tag.index), std::to_string(r.layer), r.system,
             r.split, csv_double(r.accuracy)});
  }
}

}  // namespace nodecls
}  // namespace mlplab

#endif  // MLPLAB_NODECLASSIFIERS_HPP
