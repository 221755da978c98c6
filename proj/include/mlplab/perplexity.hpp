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

#ifndef MLPLAB_PERPLEXITY_HPP
#define MLPLAB_PERPLEXITY_HPP

// Binary activation patterns per hidden layer, and the entropy/perplexity
// of their per-class distributions. A layer that maps every sample of a
// class to one pattern has perplexity 1; a layer that gives every sample
// its own pattern has perplexity equal to the class sample count.

#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "mlplab/csv.hpp"
#include "mlplab/dataset.hpp"
#include "mlplab/errors.hpp"
#include "mlplab/mlp.hpp"

namespace mlplab {
namespace patterns {

/// Binary on/off vector of one hidden layer for one sample.
struct ActivationPattern {
  int layer = 1;  // 1-based
  std::vector<std::uint8_t> bits;

  /// Canonical '0'/'1' key; distinct patterns always get distinct keys.
  std::string key() const {
    std::string s(bits.size(), '0');
    for (std::size_t i = 0; i < bits.size(); ++i)
      if (bits[i]) s[i] = '1';
    return s;
  }
};

/// One pattern per (sample, hidden layer); the output layer is excluded.
inline std::vector<std::vector<ActivationPattern>> extract_patterns(
    const Mlp& mlp, const Dataset& data) {
  const int hidden = mlp.config.layer_count() - 1;
  std::vector<std::vector<ActivationPattern>> out(data.samples.size());
  ForwardTrace trace;
  for (std::size_t s = 0; s < data.samples.size(); ++s) {
    forward_into(mlp, data.samples[s].features, trace);
    out[s].resize(hidden);
    for (int l = 0; l < hidden; ++l) {
      out[s][l].layer = l + 1;
      out[s][l].bits = trace.switches[l];
    }
  }
  return out;
}

/// Pattern occurrence counts per (class, hidden layer). std::map keys keep
/// iteration deterministic.
struct PatternTable {
  int class_count = 0;
  int hidden_layer_count = 0;
  std::vector<long long> class_totals;  // N_c
  // counts[c][l]: pattern key -> occurrences
  std::vector<std::vector<std::map<std::string, long long>>> counts;
};

inline PatternTable build_pattern_table(const Mlp& mlp, const Dataset& data) {
  PatternTable table;
  table.class_count = data.class_count;
  table.hidden_layer_count = mlp.config.layer_count() - 1;
  table.class_totals.assign(data.class_count, 0);
  table.counts.assign(
      data.class_count,
      std::vector<std::map<std::string, long long>>(table.hidden_layer_count));

  ForwardTrace trace;
  std::string key;
  for (const Sample& s : data.samples) {
    forward_into(mlp, s.features, trace);
    ++table.class_totals[s.label];
    for (int l = 0; l < table.hidden_layer_count; ++l) {
      const auto& on = trace.switches[l];
      key.assign(on.size(), '0');
      for (std::size_t j = 0; j < on.size(); ++j)
        if (on[j]) key[j] = '1';
      ++table.counts[s.label][l][key];
    }
  }
  return table;
}

/// Shannon entropy (natural log) of a pattern count multiset.
inline double entropy(const std::vector<long long>& counts, long long total) {
  long long sum = 0;
  for (long long n : counts) {
    if (n <= 0) throw std::invalid_argument("entropy: counts must be positive");
    sum += n;
  }
  if (sum != total)
    throw std::invalid_argument("entropy: counts must sum to the class total");
  double h = 0.0;
  for (long long n : counts) {
    const double p = static_cast<double>(n) / static_cast<double>(total);
    h -= p * std::log(p);
  }
  return h;
}

inline double perplexity(double entropy_value) {
  if (entropy_value < 0.0)
    throw std::invalid_argument("perplexity: entropy must be non-negative");
  return std::exp(entropy_value);
}

/// Mean perplexity over the classes present at a layer. Classes with no
/// samples are excluded and reported through `warnings`.
inline double layer_mean_perplexity(const PatternTable& table, int layer,
                                    std::vector<std::string>* warnings = nullptr) {
  double sum = 0.0;
  int present = 0;
  for (int c = 0; c < table.class_count; ++c) {
    if (table.class_totals[c] == 0) {
      if (warnings)
        warnings->push_back("class " + std::to_string(c) +
                            " absent from split; mean computed over present classes");
      continue;
    }
    std::vector<long long> counts;
    counts.reserve(table.counts[c][layer - 1].size());
    for (const auto& [key, n] : table.counts[c][layer - 1]) counts.push_back(n);
    sum += perplexity(entropy(counts, table.class_totals[c]));
    ++present;
  }
  if (present == 0)
    throw std::invalid_argument("layer_mean_perplexity: no classes present");
  return sum / present;
}

struct PerplexityRow {
  int layer = 1;  // 1-based hidden layer
  int klass = 0;
  double entropy = 0.0;
  double perplexity = 1.0;
};

struct PerplexityReport {
  std::string split_name;
  std::string model_tag;
  std::vector<PerplexityRow> rows;        // per (layer, present class)
  std::vector<double> layer_means;        // per hidden layer
  std::vector<long long> class_totals;
  std::vector<std::string> warnings;
};

inline PerplexityReport compute_perplexity_report(const Mlp& mlp,
                                                  const Dataset& data,
                                                  std::string split_name,
                                                  std::string model_tag) {
  const PatternTable table = build_pattern_table(mlp, data);
  PerplexityReport report;
  report.split_name = std::move(split_name);
  report.model_tag = std::move(model_tag);
  report.class_totals = table.class_totals;
  for (int l = 1; l <= table.hidden_layer_count; ++l) {
    for (int c = 0; c < table.class_count; ++c) {
      if (table.class_totals[c] == 0) continue;
      std::vector<long long> counts;
      counts.reserve(table.counts[c][l - 1].size());
      for (const auto& [key, n] : table.counts[c][l - 1]) counts.push_back(n);
      PerplexityRow row;
      row.layer = l;
      row.klass = c;
      row.entropy = entropy(counts, table.class_totals[c]);
      row.perplexity = perplexity(row.entropy);
      report.rows.push_back(row);
    }
    report.layer_means.push_back(
        layer_mean_perplexity(table, l, &report.warnings));
  }
  return report;
}

/// Fraction of each class's samples that switch each node on. Covers the
/// hidden layers and the output layer, ordered input to output; output
/// activity is pre-activation > 0 for linear outputs and probability > 0.5
/// for softmax (the rule is recorded when the profile is emitted).
struct ActivationFractionProfile {
  int class_count = 0;
  std::vector<int> node_layer;            // per global node, 1-based layer
  std::vector<std::vector<double>> fraction;  // [node][class]
  std::string output_rule;
};

inline ActivationFractionProfile activation_fractions(const Mlp& mlp,
                                                      const Dataset& data) {
  const MlpConfig& cfg = mlp.config;
  int node_count = 0;
  for (int s : cfg.layer_sizes) node_count += s;

  ActivationFractionProfile profile;
  profile.class_count = data.class_count;
  profile.node_layer.reserve(node_count);
  for (int l = 0; l < cfg.layer_count(); ++l)
    for (int j = 0; j < cfg.layer_sizes[l]; ++j)
      profile.node_layer.push_back(l + 1);
  profile.fraction.assign(node_count,
                          std::vector<double>(data.class_count, 0.0));
  profile.output_rule = cfg.loss == Loss::mse_linear
                            ? "output active iff pre-activation > 0"
                            : "output active iff probability > 0.5";

  std::vector<long long> class_totals(data.class_count, 0);
  ForwardTrace trace;
  for (const Sample& s : data.samples) {
    forward_into(mlp, s.features, trace);
    ++class_totals[s.label];
    int base = 0;
    for (int l = 0; l < cfg.layer_count(); ++l) {
      const auto& on = trace.switches[l];
      for (std::size_t j = 0; j < on.size(); ++j)
        if (on[j]) profile.fraction[base + static_cast<int>(j)][s.label] += 1.0;
      base += cfg.layer_sizes[l];
    }
  }
  for (auto& row : profile.fraction)
    for (int c = 0; c < data.class_count; ++c)
      if (class_totals[c] > 0) row[c] /= static_cast<double>(class_totals[c]);
  return profile;
}

/// CSV attribution columns shared by all emitted tables.
struct RunAttribution {
  int depth = 0;
  int width = 0;
  std::uint64_t seed = 0;
  std::string checkpoint_kind = "best";
  int checkpoint_index = 0;

  std::vector<std::string> cells() const {
    return {std::to_string(depth), std::to_string(width), std::to_string(seed),
            checkpoint_kind, std::to_string(checkpoint_index)};
  }
  static std::vector<std::string> header() {
    return {"depth", "width", "seed", "checkpoint_kind", "checkpoint_index"};
  }
};

inline void write_perplexity_csv(const PerplexityReport& report,
                                 const RunAttribution& attr,
                                 const std::string& path) {
  CsvWriter csv(path);
  csv.comment("split=" + report.split_name);
  for (const std::string& w : report.warnings) csv.comment("warning: " + w);
  auto header = RunAttribution::header();
  header.insert(header.end(), {"layer", "class", "entropy", "perplexity"});
  csv.row(header);
  for (const PerplexityRow& r : report.rows) {
    auto cells = attr.cells();
    cells.push_back(std::to_string(r.layer));
    cells.push_back(std::to_string(r.klass));
    cells.push_back(csv_double(r.entropy));
    cells.push_back(csv_double(r.perplexity));
    csv.row(cells);
  }
}

inline void write_layer_mean_csv(const PerplexityReport& report,
                                 const RunAttribution& attr,
                                 const std::string& path) {
  CsvWriter csv(path);
  csv.comment("split=" + report.split_name);
  auto header = RunAttribution::header();
  header.insert(header.end(), {"layer", "mean_perplexity"});
  csv.row(header);
  for (std::size_t l = 0; l < report.layer_means.size(); ++l) {
    auto cells = attr.cells();
    cells.push_back(std::to_string(l + 1));
    cells.push_back(csv_double(report.layer_means[l]));
    csv.row(cells);
  }
}

inline void write_fractions_csv(const ActivationFractionProfile& profile,
                                const RunAttribution& attr,
                                const std::string& path) {
  CsvWriter csv(path);
  csv.comment(profile.output_rule);
  auto header = RunAttribution::header();
  header.insert(header.end(), {"node_global_index", "layer", "class", "fraction"});
  csv.row(header);
  for (std::size_t node = 0; node < profile.fraction.size(); ++node) {
    for (int c = 0; c < profile.class_count; ++c) {
      auto cells = attr.cells();
      cells.push_back(std::to_string(node));
      cells.push_back(std::to_string(profile.node_layer[node]));
      cells.push_back(std::to_string(c));
      cells.push_back(csv_double(profile.fraction[node][c]));
      csv.row(cells);
    }
  }
}

}  // namespace patterns
}  // namespace mlplab

#endif  // MLPLAB_PERPLEXITY_HPP
