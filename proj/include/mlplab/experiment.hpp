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

#ifndef MLPLAB_EXPERIMENT_HPP
#define MLPLAB_EXPERIMENT_HPP

// Config-driven experiment grids: train every (architecture, seed) cell,
// run the requested analyses, and persist checkpoints, tidy CSVs and a
// manifest under one output directory. Specs are flat key = value text
// files with whitespace-separated list values; see parse_spec_text for the
// full key set.

#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "mlplab/checkpoint_io.hpp"
#include "mlplab/csv.hpp"
#include "mlplab/dataset.hpp"
#include "mlplab/errors.hpp"
#include "mlplab/idx.hpp"
#include "mlplab/mlp.hpp"
#include "mlplab/nodeclassifiers.hpp"
#include "mlplab/pathgrad.hpp"
#include "mlplab/perplexity.hpp"
#include "mlplab/train.hpp"

namespace mlplab {
namespace expt {

enum class Analysis { perplexity, fractions, systems, gradcheck };

inline std::string to_string(Analysis a) {
  switch (a) {
    case Analysis::perplexity: return "perplexity";
    case Analysis::fractions: return "fractions";
    case Analysis::systems: return "systems";
    default: return "gradcheck";
  }
}

struct SyntheticParams {
  int classes = 10;
  int per_class = 500;
  int feature_dim = 32;
  double separation = 4.0;
  std::uint64_t seed = 97;
};

struct IdxParams {
  std::string images;
  std::string labels;
  std::string test_images;
  std::string test_labels;
  std::size_t limit = 0;  // 0 = use everything
};

struct ExperimentSpec {
  int spec_version = 1;
  std::string dataset_kind = "synthetic";  // synthetic | idx
  SyntheticParams synthetic;
  IdxParams idx;

  double train_fraction = 0.0;  // 0 = kind-dependent default
  double val_fraction = 0.0;
  std::uint64_t split_seed = 1234;

  std::vector<int> depths = {2};    // hidden layer counts
  std::vector<int> widths = {100};  // nodes per hidden layer
  Activation activation = Activation::relu;
  Loss loss = Loss::mse_linear;

  int max_epochs = 50;
  int batch_size = 64;
  double learning_rate = 0.0;  // 0 = kind-dependent default
  Optimizer optimizer = Optimizer::adam;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;
  std::vector<int> checkpoint_epochs;
  std::vector<int> checkpoint_batches;

  std::vector<std::uint64_t> seeds = {1, 2, 3};
  std::vector<Analysis> analyses;

  std::string perplexity_split = "test";  // test | train
  bool systems_include_output = false;

  std::vector<int> gradcheck_sizes = {5, 4, 3};
  int gradcheck_feature_dim = 4;
  int gradcheck_samples = 20;
  double gradcheck_tolerance = 1e-10;
  std::uint64_t gradcheck_budget = 1'000'000;

  /// Effective values once kind-dependent defaults are applied.
  double effective_train_fraction() const {
    if (train_fraction > 0.0) return train_fraction;
    return dataset_kind == "idx" ? 5.0 / 6.0 : 0.6;
  }
  double effective_val_fraction() const {
    if (val_fraction > 0.0) return val_fraction;
    return dataset_kind == "idx" ? 1.0 / 6.0 : 0.2;
  }
  double effective_learning_rate() const {
    if (learning_rate > 0.0) return learning_rate;
    return dataset_kind == "idx" ? 1e-3 : 1e-2;
  }
};

namespace detail {

inline std::vector<std::string> tokenize(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string tok;
  while (ss >> tok) out.push_back(tok);
  return out;
}

inline std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r");
  std::size_t e = s.find_last_not_of(" \t\r");
  if (b == std::string::npos) return "";
  return s.substr(b, e - b + 1);
}

template <class T>
T parse_number(const std::string& key, const std::string& value) {
  std::stringstream ss(value);
  T v{};
  if (!(ss >> v) || !(ss >> std::ws).eof())
    throw ConfigError("spec: bad value '" + value + "' for key " + key);
  return v;
}

template <class T>
std::vector<T> parse_list(const std::string& key, const std::string& value) {
  std::vector<T> out;
  for (const std::string& tok : tokenize(value))
    out.push_back(parse_number<T>(key, tok));
  return out;
}

}  // namespace detail

/// Parses the flat key = value spec format. '#' starts a comment; list
/// values are whitespace separated; unknown keys are configuration errors.
inline ExperimentSpec parse_spec_text(const std::string& text) {
  ExperimentSpec spec;
  bool version_seen = false;
  std::map<std::string, bool> seen;

  std::stringstream lines(text);
  std::string line;
  int line_no = 0;
  while (std::getline(lines, line)) {
    ++line_no;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("spec line " + std::to_string(line_no) +
                        ": expected key = value");
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string value = detail::trim(line.substr(eq + 1));
    if (seen[key])
      throw ConfigError("spec: duplicate key " + key);
    seen[key] = true;

    using detail::parse_list;
    using detail::parse_number;
    if (key == "spec_version") {
      spec.spec_version = parse_number<int>(key, value);
      version_seen = true;
    } else if (key == "dataset") {
      if (value != "synthetic" && value != "idx")
        throw ConfigError("spec: dataset must be synthetic or idx");
      spec.dataset_kind = value;
    } else if (key == "synthetic.classes") {
      spec.synthetic.classes = parse_number<int>(key, value);
    } else if (key == "synthetic.per_class") {
      spec.synthetic.per_class = parse_number<int>(key, value);
    } else if (key == "synthetic.feature_dim") {
      spec.synthetic.feature_dim = parse_number<int>(key, value);
    } else if (key == "synthetic.separation") {
      spec.synthetic.separation = parse_number<double>(key, value);
    } else if (key == "synthetic.seed") {
      spec.synthetic.seed = parse_number<std::uint64_t>(key, value);
    } else if (key == "idx.images") {
      spec.idx.images = value;
    } else if (key == "idx.labels") {
      spec.idx.labels = value;
    } else if (key == "idx.test_images") {
      spec.idx.test_images = value;
    } else if (key == "idx.test_labels") {
      spec.idx.test_labels = value;
    } else if (key == "idx.limit") {
      spec.idx.limit = parse_number<std::size_t>(key, value);
    } else if (key == "split.train_fraction") {
      spec.train_fraction = parse_number<double>(key, value);
    } else if (key == "split.val_fraction") {
      spec.val_fraction = parse_number<double>(key, value);
    } else if (key == "split.seed") {
      spec.split_seed = parse_number<std::uint64_t>(key, value);
    } else if (key == "arch.depths") {
      spec.depths = parse_list<int>(key, value);
    } else if (key == "arch.widths") {
      spec.widths = parse_list<int>(key, value);
    } else if (key == "activation") {
      if (value == "relu") spec.activation = Activation::relu;
      else if (value == "sigmoid") spec.activation = Activation::sigmoid;
      else throw ConfigError("spec: activation must be relu or sigmoid");
    } else if (key == "loss") {
      if (value == "mse_linear") spec.loss = Loss::mse_linear;
      else if (value == "ce_softmax") spec.loss = Loss::ce_softmax;
      else throw ConfigError("spec: loss must be mse_linear or ce_softmax");
    } else if (key == "train.max_epochs") {
      spec.max_epochs = parse_number<int>(key, value);
    } else if (key == "train.batch_size") {
      spec.batch_size = parse_number<int>(key, value);
    } else if (key == "train.learning_rate") {
      spec.learning_rate = parse_number<double>(key, value);
    } else if (key == "train.optimizer") {
      if (value == "adam") spec.optimizer = Optimizer::adam;
      else if (value == "sgd") spec.optimizer = Optimizer::sgd;
      else throw ConfigError("spec: optimizer must be adam or sgd");
    } else if (key == "train.adam_beta1") {
      spec.adam_beta1 = parse_number<double>(key, value);
    } else if (key == "train.adam_beta2") {
      spec.adam_beta2 = parse_number<double>(key, value);
    } else if (key == "train.adam_epsilon") {
      spec.adam_epsilon = parse_number<double>(key, value);
    } else if (key == "train.checkpoint_epochs") {
      spec.checkpoint_epochs = parse_list<int>(key, value);
    } else if (key == "train.checkpoint_batches") {
      spec.checkpoint_batches = parse_list<int>(key, value);
    } else if (key == "seeds") {
      spec.seeds = parse_list<std::uint64_t>(key, value);
    } else if (key == "analyses") {
      spec.analyses.clear();
      for (const std::string& tok : detail::tokenize(value)) {
        if (tok == "perplexity") spec.analyses.push_back(Analysis::perplexity);
        else if (tok == "fractions") spec.analyses.push_back(Analysis::fractions);
        else if (tok == "systems") spec.analyses.push_back(Analysis::systems);
        else if (tok == "gradcheck") spec.analyses.push_back(Analysis::gradcheck);
        else throw ConfigError("spec: unknown analysis '" + tok + "'");
      }
    } else if (key == "perplexity.split") {
      if (value != "test" && value != "train")
        throw ConfigError("spec: perplexity.split must be test or train");
      spec.perplexity_split = value;
    } else if (key == "systems.include_output_layer") {
      if (value != "true" && value != "false")
        throw ConfigError("spec: systems.include_output_layer must be true or false");
      spec.systems_include_output = (value == "true");
    } else if (key == "gradcheck.sizes") {
      spec.gradcheck_sizes = parse_list<int>(key, value);
    } else if (key == "gradcheck.feature_dim") {
      spec.gradcheck_feature_dim = parse_number<int>(key, value);
    } else if (key == "gradcheck.samples") {
      spec.gradcheck_samples = parse_number<int>(key, value);
    } else if (key == "gradcheck.tolerance") {
      spec.gradcheck_tolerance = parse_number<double>(key, value);
    } else if (key == "gradcheck.budget") {
      spec.gradcheck_budget = parse_number<std::uint64_t>(key, value);
    } else {
      throw ConfigError("spec: unknown key '" + key + "'");
    }
  }

  if (!version_seen) throw ConfigError("spec: missing spec_version");
  if (spec.spec_version != 1)
    throw ConfigError("spec: unsupported spec_version " +
                      std::to_string(spec.spec_version));
  if (spec.depths.empty() || spec.widths.empty())
    throw ConfigError("spec: arch.depths and arch.widths must be non-empty");
  if (spec.seeds.empty()) throw ConfigError("spec: seeds must be non-empty");
  if (spec.dataset_kind == "idx" &&
      (spec.idx.images.empty() || spec.idx.labels.empty()))
    throw ConfigError("spec: idx dataset requires idx.images and idx.labels");
  return spec;
}

inline ExperimentSpec parse_spec(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open spec file: " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_spec_text(buf.str());
}

/// FNV-1a over a canonical serialization of the effective spec; stable
/// under key reordering in the source file.
inline std::string spec_hash(const ExperimentSpec& s) {
  std::map<std::string, std::string> kv;
  auto put = [&](const std::string& k, const std::string& v) { kv[k] = v; };
  auto join = [](const auto& list) {
    std::string out;
    for (const auto& v : list) {
      if (!out.empty()) out += ' ';
      if constexpr (std::is_same_v<std::decay_t<decltype(v)>, Analysis>)
        out += to_string(v);
      else
        out += std::to_string(v);
    }
    return out;
  };
  put("spec_version", std::to_string(s.spec_version));
  put("dataset", s.dataset_kind);
  put("synthetic.classes", std::to_string(s.synthetic.classes));
  put("synthetic.per_class", std::to_string(s.synthetic.per_class));
  put("synthetic.feature_dim", std::to_string(s.synthetic.feature_dim));
  put("synthetic.separation", csv_double(s.synthetic.separation));
  put("synthetic.seed", std::to_string(s.synthetic.seed));
  put("idx.images", s.idx.images);
  put("idx.labels", s.idx.labels);
  put("idx.test_images", s.idx.test_images);
  put("idx.test_labels", s.idx.test_labels);
  put("idx.limit", std::to_string(s.idx.limit));
  put("split.train_fraction", csv_double(s.effective_train_fraction()));
  put("split.val_fraction", csv_double(s.effective_val_fraction()));
  put("split.seed", std::to_string(s.split_seed));
  put("arch.depths", join(s.depths));
  put("arch.widths", join(s.widths));
  put("activation", to_string(s.activation));
  put("loss", to_string(s.loss));
  put("train.max_epochs", std::to_string(s.max_epochs));
  put("train.batch_size", std::to_string(s.batch_size));
  put("train.learning_rate", csv_double(s.effective_learning_rate()));
  put("train.optimizer", to_string(s.optimizer));
  put("train.adam_beta1", csv_double(s.adam_beta1));
  put("train.adam_beta2", csv_double(s.adam_beta2));
  put("train.adam_epsilon", csv_double(s.adam_epsilon));
  put("train.checkpoint_epochs", join(s.checkpoint_epochs));
  put("train.checkpoint_batches", join(s.checkpoint_batches));
  put("seeds", join(s.seeds));
  put("analyses", join(s.analyses));
  put("perplexity.split", s.perplexity_split);
  put("systems.include_output_layer", s.systems_include_output ? "true" : "false");
  put("gradcheck.sizes", join(s.gradcheck_sizes));
  put("gradcheck.feature_dim", std::to_string(s.gradcheck_feature_dim));
  put("gradcheck.samples", std::to_string(s.gradcheck_samples));
  put("gradcheck.tolerance", csv_double(s.gradcheck_tolerance));
  put("gradcheck.budget", std::to_string(s.gradcheck_budget));

  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&](const std::string& str) {
    for (unsigned char ch : str) {
      h ^= ch;
      h *= 0x100000001b3ULL;
    }
  };
  for (const auto& [k, v] : kv) {
    mix(k);
    mix("=");
    mix(v);
    mix("\n");
  }
  char buf[20];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

struct RunRecord {
  int depth = 0;
  int width = 0;
  std::uint64_t seed = 0;
  std::string status = "ok";  // ok | diverged | error
  std::string error;
  double wall_seconds = 0.0;
  int best_epoch = 0;
  double train_error = 0.0;
  double val_error = 0.0;
  double test_error = 0.0;
  std::vector<std::string> checkpoint_files;
  std::vector<std::string> result_files;
  bool reused = false;
};

struct RunManifest {
  std::string spec_hash;
  std::vector<RunRecord> runs;
};

namespace detail {

inline nlohmann::json record_to_json(const RunRecord& r) {
  return {{"depth", r.depth},
          {"width", r.width},
          {"seed", r.seed},
          {"status", r.status},
          {"error", r.error},
          {"wall_seconds", r.wall_seconds},
          {"best_epoch", r.best_epoch},
          {"train_error", r.train_error},
          {"val_error", r.val_error},
          {"test_error", r.test_error},
          {"checkpoint_files", r.checkpoint_files},
          {"result_files", r.result_files},
          {"reused", r.reused}};
}

inline RunRecord record_from_json(const nlohmann::json& j) {
  RunRecord r;
  r.depth = j.at("depth").get<int>();
  r.width = j.at("width").get<int>();
  r.seed = j.at("seed").get<std::uint64_t>();
  r.status = j.at("status").get<std::string>();
  r.error = j.at("error").get<std::string>();
  r.wall_seconds = j.at("wall_seconds").get<double>();
  r.best_epoch = j.at("best_epoch").get<int>();
  r.train_error = j.at("train_error").get<double>();
  r.val_error = j.at("val_error").get<double>();
  r.test_error = j.at("test_error").get<double>();
  r.checkpoint_files = j.at("checkpoint_files").get<std::vector<std::string>>();
  r.result_files = j.at("result_files").get<std::vector<std::string>>();
  r.reused = j.at("reused").get<bool>();
  return r;
}

}  // namespace detail

inline void save_manifest(const RunManifest& manifest, const std::string& dir) {
  nlohmann::json doc;
  doc["format"] = "mlplab-manifest";
  doc["version"] = 1;
  doc["spec_hash"] = manifest.spec_hash;
  nlohmann::json runs = nlohmann::json::array();
  for (const RunRecord& r : manifest.runs) runs.push_back(detail::record_to_json(r));
  doc["runs"] = std::move(runs);

  const std::filesystem::path path = std::filesystem::path(dir) / "manifest.json";
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw IoError("cannot open for writing: " + tmp.string());
    out << doc.dump(1) << "\n";
    if (!out) throw IoError("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

inline std::optional<RunManifest> load_manifest(const std::string& dir) {
  const std::filesystem::path path = std::filesystem::path(dir) / "manifest.json";
  std::ifstream in(path, std::ios::binary);
  if (!in) return std::nullopt;
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception&) {
    return std::nullopt;
  }
  if (doc.value("format", "") != "mlplab-manifest") return std::nullopt;
  RunManifest m;
  m.spec_hash = doc.value("spec_hash", "");
  for (const auto& j : doc.at("runs")) m.runs.push_back(detail::record_from_json(j));
  return m;
}

/// Train/val/test assembly per the spec's dataset selector.
inline std::tuple<Dataset, Dataset, Dataset> build_splits(const ExperimentSpec& spec) {
  if (spec.dataset_kind == "synthetic") {
    const Dataset all = synthetic_gaussians(
        spec.synthetic.classes, spec.synthetic.per_class,
        spec.synthetic.feature_dim, spec.synthetic.separation,
        spec.synthetic.seed);
    return split(all, {spec.effective_train_fraction(),
                       spec.effective_val_fraction(), spec.split_seed});
  }
  Dataset full = load_idx(spec.idx.images, spec.idx.labels);
  if (spec.idx.limit > 0) full = head(full, spec.idx.limit);
  if (!spec.idx.test_images.empty()) {
    const Dataset test = load_idx(spec.idx.test_images, spec.idx.test_labels);
    const double tf = spec.effective_train_fraction() /
                      (spec.effective_train_fraction() + spec.effective_val_fraction());
    auto [train, val] = split_train_val(full, tf, spec.split_seed);
    return {std::move(train), std::move(val), test};
  }
  return split(full, {spec.effective_train_fraction(),
                      spec.effective_val_fraction(), spec.split_seed});
}

namespace detail {

inline std::string cell_stem(int depth, int width, std::uint64_t seed) {
  return "d" + std::to_string(depth) + "_w" + std::to_string(width) + "_s" +
         std::to_string(seed);
}

inline bool has_analysis(const ExperimentSpec& spec, Analysis a) {
  return std::find(spec.analyses.begin(), spec.analyses.end(), a) !=
         spec.analyses.end();
}

inline std::vector<Sample> random_samples(int feature_dim, int class_count,
                                          int count, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Sample> samples;
  samples.reserve(count);
  for (int i = 0; i < count; ++i) {
    Sample s;
    s.features.resize(feature_dim);
    for (double& f : s.features) f = rng.normal();
    s.label = static_cast<int>(rng.below(class_count));
    s.one_hot = one_hot(s.label, class_count);
    samples.push_back(std::move(s));
  }
  return samples;
}

inline void write_gradcheck_csv(
    const std::string& path, const std::vector<int>& sizes,
    const std::vector<std::tuple<std::uint64_t, pathgrad::EquivalenceReport>>& reports,
    const std::vector<std::pair<std::uint64_t, std::string>>& skipped,
    double tolerance) {
  CsvWriter csv(path);
  std::string arch;
  for (int s : sizes) arch += (arch.empty() ? "" : "x") + std::to_string(s);
  csv.comment("architecture=" + arch + " tolerance=" + csv_double(tolerance));
  csv.row({"row_kind", "seed", "layer", "node_j", "node_k", "backprop",
           "path_sum", "abs_diff", "max_abs_diff", "max_rel_diff", "status"});
  for (const auto& [seed, report] : reports) {
    for (const auto& d : report.exceeding) {
      csv.row({"detail", std::to_string(seed), std::to_string(d.layer),
               std::to_string(d.node_j), std::to_string(d.node_k),
               csv_double(d.backprop_value), csv_double(d.path_sum_value),
               csv_double(d.abs_diff), "", "", "exceeds"});
    }
    csv.row({"summary", std::to_string(seed), "", "", "", "", "",
             "", csv_double(report.max_abs_diff),
             csv_double(report.max_rel_diff),
             report.exceeding.empty() ? "ok" : "exceeds"});
  }
  for (const auto& [seed, reason] : skipped)
    csv.row({"summary", std::to_string(seed), "", "", "", "", "", "", "", "",
             "skipped: " + reason});
}

}  // namespace detail

struct GradcheckResult {
  bool any_exceeds = false;
  double max_abs_diff = 0.0;
  int nets_checked = 0;
  int nets_skipped = 0;
  std::string report_file;
};

/// Fresh random nets and samples per seed, each certified by the dual
/// gradient computation. Budget-exceeding architectures are skipped with a
/// reason rather than failing the run.
inline GradcheckResult gradcheck(const ExperimentSpec& spec,
                                 const std::string& out_dir) {
  std::filesystem::create_directories(out_dir);
  MlpConfig config;
  config.layer_sizes = spec.gradcheck_sizes;
  config.hidden_activation = Activation::relu;
  config.loss = spec.loss == Loss::ce_softmax ? Loss::ce_softmax : Loss::mse_linear;
  config.feature_dim = spec.gradcheck_feature_dim;
  config.validate();

  pathgrad::EquivalenceOptions opts;
  opts.path_budget = spec.gradcheck_budget;
  opts.tolerance = spec.gradcheck_tolerance;

  GradcheckResult result;
  std::vector<std::tuple<std::uint64_t, pathgrad::EquivalenceReport>> reports;
  std::vector<std::pair<std::uint64_t, std::string>> skipped;
  for (std::uint64_t seed : spec.seeds) {
    const Mlp mlp = init_normalized_uniform(config, seed);
    const auto samples = detail::random_samples(
        config.feature_dim, config.class_count(), spec.gradcheck_samples,
        seed ^ 0xA5A5A5A5ULL);
    try {
      auto report = pathgrad::gradient_equivalence_report(mlp, samples, opts);
      result.max_abs_diff = std::max(result.max_abs_diff, report.max_abs_diff);
      if (!report.exceeding.empty()) result.any_exceeds = true;
      ++result.nets_checked;
      reports.emplace_back(seed, std::move(report));
    } catch (const PathBudgetError& e) {
      ++result.nets_skipped;
      skipped.emplace_back(seed, e.what());
    }
  }
  const std::filesystem::path path =
      std::filesystem::path(out_dir) / "gradcheck_report.csv";
  detail::write_gradcheck_csv(path.string(), spec.gradcheck_sizes, reports,
                              skipped, spec.gradcheck_tolerance);
  result.report_file = path.string();
  return result;
}

namespace detail {

struct CellOutputs {
  RunRecord record;
};

inline RunRecord run_cell(const ExperimentSpec& spec, int depth, int width,
                          std::uint64_t seed, const Dataset& train_ds,
                          const Dataset& val_ds, const Dataset& test_ds,
                          const std::string& out_dir) {
  RunRecord rec;
  rec.depth = depth;
  rec.width = width;
  rec.seed = seed;
  const auto t0 = std::chrono::steady_clock::now();

  MlpConfig config;
  config.layer_sizes.assign(depth, width);
  config.layer_sizes.push_back(train_ds.class_count);
  config.hidden_activation = spec.activation;
  config.loss = spec.loss;
  config.feature_dim = train_ds.feature_dim;

  TrainSchedule sched;
  sched.max_epochs = spec.max_epochs;
  sched.batch_size = spec.batch_size;
  sched.learning_rate = spec.effective_learning_rate();
  sched.optimizer = spec.optimizer;
  sched.adam_beta1 = spec.adam_beta1;
  sched.adam_beta2 = spec.adam_beta2;
  sched.adam_epsilon = spec.adam_epsilon;
  sched.seed = seed;
  sched.checkpoint_epochs = spec.checkpoint_epochs;
  sched.checkpoint_batches = spec.checkpoint_batches;

  const std::string stem = cell_stem(depth, width, seed);
  const std::filesystem::path dir(out_dir);

  const TrainResult tr = train(config, train_ds, val_ds, test_ds, sched);
  rec.best_epoch = tr.best_epoch;
  rec.train_error = evaluate(tr.best, train_ds).error;
  rec.val_error = evaluate(tr.best, val_ds).error;
  rec.test_error = evaluate(tr.best, test_ds).error;

  // Persist the scheduled snapshots and the best network.
  for (const Checkpoint& c : tr.checkpoints) {
    const std::string name = "ckpt_" + stem + "_" + c.tag.kind_name() +
                             std::to_string(c.tag.index) + ".json";
    save_checkpoint((dir / name).string(), config, sched, c);
    rec.checkpoint_files.push_back(name);
  }
  {
    Checkpoint best;
    best.tag = {CheckpointTag::Kind::epoch, tr.best_epoch};
    best.weights = tr.best.weights;
    best.train_error = rec.train_error;
    best.val_error = rec.val_error;
    best.test_error = rec.test_error;
    const std::string name = "ckpt_" + stem + "_best.json";
    save_checkpoint((dir / name).string(), config, sched, best);
    rec.checkpoint_files.push_back(name);
  }

  patterns::RunAttribution attr;
  attr.depth = depth;
  attr.width = width;
  attr.seed = seed;
  attr.checkpoint_kind = "best";
  attr.checkpoint_index = tr.best_epoch;

  if (has_analysis(spec, Analysis::perplexity)) {
    const Dataset& target =
        spec.perplexity_split == "train" ? train_ds : test_ds;
    const auto report = patterns::compute_perplexity_report(
        tr.best, target, spec.perplexity_split, "best_epoch" + std::to_string(tr.best_epoch));
    const std::string f1 = "perplexity_" + stem + ".csv";
    const std::string f2 = "perplexity_mean_" + stem + ".csv";
    patterns::write_perplexity_csv(report, attr, (dir / f1).string());
    patterns::write_layer_mean_csv(report, attr, (dir / f2).string());
    rec.result_files.push_back(f1);
    rec.result_files.push_back(f2);
  }

  if (has_analysis(spec, Analysis::fractions)) {
    const auto profile = patterns::activation_fractions(tr.best, test_ds);
    const std::string f = "fractions_" + stem + ".csv";
    patterns::write_fractions_csv(profile, attr, (dir / f).string());
    rec.result_files.push_back(f);
  }

  if (has_analysis(spec, Analysis::systems)) {
    nodecls::FitOptions fit_opts;
    fit_opts.include_output_layer = spec.systems_include_output;
    std::vector<Checkpoint> targets = tr.checkpoints;
    if (targets.empty()) {
      Checkpoint best;
      best.tag = {CheckpointTag::Kind::epoch, tr.best_epoch};
      best.weights = tr.best.weights;
      targets.push_back(std::move(best));
    }
    const auto table =
        nodecls::evaluate_systems(config, targets, train_ds, test_ds, fit_opts);
    const std::string f = "systems_" + stem + ".csv";
    nodecls::write_systems_csv(table, attr, (dir / f).string());
    rec.result_files.push_back(f);
  }

  if (has_analysis(spec, Analysis::gradcheck)) {
    pathgrad::EquivalenceOptions opts;
    opts.path_budget = spec.gradcheck_budget;
    opts.tolerance = spec.gradcheck_tolerance;
    const Mlp fresh = init_normalized_uniform(config, seed);
    const auto samples =
        random_samples(config.feature_dim, config.class_count(),
                       spec.gradcheck_samples, seed ^ 0xA5A5A5A5ULL);
    std::vector<std::tuple<std::uint64_t, pathgrad::EquivalenceReport>> reports;
    std::vector<std::pair<std::uint64_t, std::string>> skipped;
    try {
      reports.emplace_back(
          seed, pathgrad::gradient_equivalence_report(fresh, samples, opts));
    } catch (const PathBudgetError& e) {
      skipped.emplace_back(seed, e.what());
    }
    const std::string f = "gradcheck_" + stem + ".csv";
    write_gradcheck_csv((dir / f).string(), config.layer_sizes, reports,
                        skipped, spec.gradcheck_tolerance);
    rec.result_files.push_back(f);
  }

  const auto t1 = std::chrono::steady_clock::now();
  rec.wall_seconds = std::chrono::duration<double>(t1 - t0).count();
  rec.status = "ok";
  return rec;
}

}  // namespace detail

/// Trains every (depth, width, seed) cell and runs the requested analyses.
/// Cells already completed under the same spec hash are skipped; a
/// diverging cell is recorded and does not stop the others. Cells may run
/// concurrently; every cell's outputs depend only on its own seeds.
inline RunManifest run(const ExperimentSpec& spec, const std::string& out_dir,
                       int workers = 1) {
  std::filesystem::create_directories(out_dir);
  RunManifest manifest;
  manifest.spec_hash = spec_hash(spec);

  std::map<std::tuple<int, int, std::uint64_t>, RunRecord> previous;
  if (auto existing = load_manifest(out_dir);
      existing && existing->spec_hash == manifest.spec_hash) {
    for (const RunRecord& r : existing->runs) {
      bool files_ok = r.status == "ok";
      for (const std::string& f : r.checkpoint_files)
        files_ok = files_ok &&
                   std::filesystem::exists(std::filesystem::path(out_dir) / f);
      for (const std::string& f : r.result_files)
        files_ok = files_ok &&
                   std::filesystem::exists(std::filesystem::path(out_dir) / f);
      if (files_ok) previous[{r.depth, r.width, r.seed}] = r;
    }
  }

  auto [train_ds, val_ds, test_ds] = build_splits(spec);

  struct Cell {
    int depth;
    int width;
    std::uint64_t seed;
  };
  std::vector<Cell> cells;
  for (int depth : spec.depths)
    for (int width : spec.widths)
      for (std::uint64_t seed : spec.seeds) cells.push_back({depth, width, seed});

  std::vector<RunRecord> records(cells.size());
  std::vector<char> done(cells.size(), 0);
  std::atomic<std::size_t> next{0};
  std::mutex manifest_mutex;

  auto worker = [&]() {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= cells.size()) return;
      const Cell& cell = cells[i];
      if (auto it = previous.find({cell.depth, cell.width, cell.seed});
          it != previous.end()) {
        records[i] = it->second;
        records[i].reused = true;
        done[i] = 1;
        continue;
      }
      try {
        records[i] = detail::run_cell(spec, cell.depth, cell.width, cell.seed,
                                      train_ds, val_ds, test_ds, out_dir);
      } catch (const TrainingError& e) {
        records[i].depth = cell.depth;
        records[i].width = cell.width;
        records[i].seed = cell.seed;
        records[i].status = "diverged";
        records[i].error = e.what();
      } catch (const std::exception& e) {
        records[i].depth = cell.depth;
        records[i].width = cell.width;
        records[i].seed = cell.seed;
        records[i].status = "error";
        records[i].error = e.what();
      }
      {
        // Keep a partial manifest on disk as cells finish.
        std::lock_guard<std::mutex> lock(manifest_mutex);
        done[i] = 1;
        RunManifest partial;
        partial.spec_hash = manifest.spec_hash;
        for (std::size_t k = 0; k < records.size(); ++k)
          if (done[k]) partial.runs.push_back(records[k]);
        save_manifest(partial, out_dir);
      }
    }
  };

  const int n_workers = std::max(1, workers);
  if (n_workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < n_workers; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  manifest.runs = std::move(records);
  save_manifest(manifest, out_dir);
  return manifest;
}

// ---------------------------------------------------------------------------
// Figure data emission

enum class Figure { fig1, fig2, fig3, fig4, fig5, fig6, fig9, fig10, fig11 };

inline Figure parse_figure(const std::string& name) {
  if (name == "fig1") return Figure::fig1;
  if (name == "fig2") return Figure::fig2;
  if (name == "fig3") return Figure::fig3;
  if (name == "fig4") return Figure::fig4;
  if (name == "fig5") return Figure::fig5;
  if (name == "fig6") return Figure::fig6;
  if (name == "fig9") return Figure::fig9;
  if (name == "fig10") return Figure::fig10;
  if (name == "fig11") return Figure::fig11;
  throw ConfigError("unknown figure '" + name +
                    "' (expected fig1..fig6, fig9, fig10 or fig11)");
}

struct EmitOptions {
  int node_global_index = 0;  // fig11 only
  int bins = 50;              // fig11 only
};

namespace detail {

inline void require_result(const std::filesystem::path& path,
                           const std::string& analysis) {
  if (!std::filesystem::exists(path))
    throw ConfigError("missing analysis output " + path.string() +
                      "; add '" + analysis + "' to analyses and re-run sweep");
}

}  // namespace detail

/// Writes one tidy CSV per figure under out_dir, aggregated across the
/// manifest's completed cells:
///   fig1  fraction per node (wide per-class columns, input-to-output order)
///   fig2  final split errors per architecture and seed
///   fig3  mean perplexity per layer
///   fig4/fig5/fig9/fig10  system accuracies at epoch-tagged checkpoints
///   fig6  system accuracies at batch-tagged checkpoints
///   fig11 per-class pre-activation histogram at one node
inline std::string emit_figure_data(const ExperimentSpec& spec,
                                    const RunManifest& manifest,
                                    const std::string& out_dir, Figure figure,
                                    const EmitOptions& opts = {}) {
  const std::filesystem::path dir(out_dir);
  std::vector<const RunRecord*> ok_runs;
  for (const RunRecord& r : manifest.runs)
    if (r.status == "ok") ok_runs.push_back(&r);

  auto figure_name = [&] {
    switch (figure) {
      case Figure::fig1: return "fig1";
      case Figure::fig2: return "fig2";
      case Figure::fig3: return "fig3";
      case Figure::fig4: return "fig4";
      case Figure::fig5: return "fig5";
      case Figure::fig6: return "fig6";
      case Figure::fig9: return "fig9";
      case Figure::fig10: return "fig10";
      default: return "fig11";
    }
  }();
  const std::filesystem::path out_path = dir / (std::string(figure_name) + ".csv");

  if (figure == Figure::fig2) {
    CsvWriter csv(out_path.string());
    csv.row({"depth", "width", "seed", "split", "error"});
    for (const RunRecord* r : ok_runs) {
      csv.row({std::to_string(r->depth), std::to_string(r->width),
               std::to_string(r->seed), "train", csv_double(r->train_error)});
      csv.row({std::to_string(r->depth), std::to_string(r->width),
               std::to_string(r->seed), "val", csv_double(r->val_error)});
      csv.row({std::to_string(r->depth), std::to_string(r->width),
               std::to_string(r->seed), "test", csv_double(r->test_error)});
    }
    return out_path.string();
  }

  if (figure == Figure::fig3) {
    CsvWriter csv(out_path.string());
    csv.row({"depth", "width", "seed", "checkpoint_kind", "checkpoint_index",
             "layer", "mean_perplexity"});
    for (const RunRecord* r : ok_runs) {
      const auto src = dir / ("perplexity_mean_" +
                              detail::cell_stem(r->depth, r->width, r->seed) +
                              ".csv");
      detail::require_result(src, "perplexity");
      for (const auto& row : read_csv(src.string()).rows) csv.row(row);
    }
    return out_path.string();
  }

  if (figure == Figure::fig1) {
    CsvWriter csv(out_path.string());
    std::vector<std::string> header = {"depth", "width", "seed",
                                       "checkpoint_kind", "checkpoint_index",
                                       "node_global_index", "layer"};
    int class_count = 0;
    bool header_written = false;
    for (const RunRecord* r : ok_runs) {
      const auto src = dir / ("fractions_" +
                              detail::cell_stem(r->depth, r->width, r->seed) +
                              ".csv");
      detail::require_result(src, "fractions");
      const CsvTable table = read_csv(src.string());
      // rows: depth,width,seed,kind,index,node,layer,class,fraction
      std::map<long long, std::vector<std::string>> nodes;
      for (const auto& row : table.rows) {
        const long long node = std::stoll(row.at(5));
        const int klass = std::stoi(row.at(7));
        class_count = std::max(class_count, klass + 1);
        auto& cells = nodes[node];
        if (cells.empty())
          cells = {row.at(0), row.at(1), row.at(2), row.at(3),
                   row.at(4), row.at(5), row.at(6)};
        cells.push_back(row.at(8));
      }
      if (!header_written) {
        for (int c = 0; c < class_count; ++c)
          header.push_back("fraction_class_" + std::to_string(c));
        csv.row(header);
        header_written = true;
      }
      for (const auto& [node, cells] : nodes) csv.row(cells);
    }
    if (!header_written) csv.row(header);
    return out_path.string();
  }

  if (figure == Figure::fig4 || figure == Figure::fig5 ||
      figure == Figure::fig6 || figure == Figure::fig9 ||
      figure == Figure::fig10) {
    const std::string wanted = figure == Figure::fig6 ? "batch" : "epoch";
    CsvWriter csv(out_path.string());
    csv.row({"depth", "width", "seed", "checkpoint_kind", "checkpoint_index",
             "layer", "system", "split", "accuracy"});
    for (const RunRecord* r : ok_runs) {
      const auto src = dir / ("systems_" +
                              detail::cell_stem(r->depth, r->width, r->seed) +
                              ".csv");
      detail::require_result(src, "systems");
      for (const auto& row : read_csv(src.string()).rows)
        if (row.at(3) == wanted) csv.row(row);
    }
    return out_path.string();
  }

  // fig11: per-class histogram of pre-activations at one node, recomputed
  // from each cell's best checkpoint over the training split.
  auto [train_ds, val_ds, test_ds] = build_splits(spec);
  CsvWriter csv(out_path.string());
  csv.row({"depth", "width", "seed", "node_global_index", "layer", "node",
           "class", "bin_lo", "bin_hi", "count"});
  for (const RunRecord* r : ok_runs) {
    const auto ckpt_path =
        dir / ("ckpt_" + detail::cell_stem(r->depth, r->width, r->seed) +
               "_best.json");
    detail::require_result(ckpt_path, "train");
    const Mlp mlp = load_checkpoint(ckpt_path.string()).to_mlp();

    int layer = 0, node = opts.node_global_index;
    for (int l = 0; l < mlp.config.layer_count(); ++l) {
      if (node < mlp.config.layer_sizes[l]) {
        layer = l;
        break;
      }
      node -= mlp.config.layer_sizes[l];
    }
    if (node >= mlp.config.layer_sizes[layer])
      throw ConfigError("fig11: node index out of range for this architecture");

    std::vector<std::vector<double>> per_class(train_ds.class_count);
    ForwardTrace trace;
    for (const Sample& s : train_ds.samples) {
      forward_into(mlp, s.features, trace);
      per_class[s.label].push_back(trace.pre_activations[layer][node]);
    }
    double lo = 0.0, hi = 0.0;
    bool any = false;
    for (const auto& v : per_class)
      for (double z : v) {
        if (!any) {
          lo = hi = z;
          any = true;
        }
        lo = std::min(lo, z);
        hi = std::max(hi, z);
      }
    if (hi <= lo) hi = lo + 1.0;
    const int bins = std::max(1, opts.bins);
    const double width = (hi - lo) / bins;
    for (int c = 0; c < train_ds.class_count; ++c) {
      std::vector<long long> counts(bins, 0);
      for (double z : per_class[c]) {
        int b = static_cast<int>((z - lo) / width);
        b = std::min(bins - 1, std::max(0, b));
        ++counts[b];
      }
      for (int b = 0; b < bins; ++b)
        csv.row({std::to_string(r->depth), std::to_string(r->width),
                 std::to_string(r->seed),
                 std::to_string(opts.node_global_index),
                 std::to_string(layer + 1), std::to_string(node),
                 std::to_string(c), csv_double(lo + b * width),
                 csv_double(lo + (b + 1) * width), std::to_string(counts[b])});
    }
  }
  return out_path.string();
}

}  // namespace expt
}  // namespace mlplab

#endif  // MLPLAB_EXPERIMENT_HPP
