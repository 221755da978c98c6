#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <map>

#include "mlplab/perplexity.hpp"

using namespace mlplab;
using namespace mlplab::patterns;

namespace {

// Exhaustive grouping by pairwise comparison: the brute-force oracle for
// the pattern histogram and its entropy.
double brute_force_entropy(const std::vector<std::vector<std::uint8_t>>& pats) {
  std::vector<bool> used(pats.size(), false);
  std::vector<long long> counts;
  for (std::size_t i = 0; i < pats.size(); ++i) {
    if (used[i]) continue;
    long long n = 1;
    for (std::size_t j = i + 1; j < pats.size(); ++j) {
      if (!used[j] && pats[i] == pats[j]) {
        used[j] = true;
        ++n;
      }
    }
    counts.push_back(n);
  }
  double h = 0.0;
  for (long long n : counts) {
    const double p = static_cast<double>(n) / pats.size();
    h -= p * std::log(p);
  }
  return h;
}

Mlp diag_first_layer(const std::vector<double>& z_targets, int out_classes,
                     Activation act) {
  MlpConfig cfg;
  const int width = static_cast<int>(z_targets.size());
  cfg.layer_sizes = {width, out_classes};
  cfg.feature_dim = 1;
  cfg.hidden_activation = act;
  Mlp mlp;
  mlp.config = cfg;
  Matrix w0(width, 2, 0.0);
  for (int j = 0; j < width; ++j) w0(j, 0) = z_targets[j];
  mlp.weights.push_back(w0);
  mlp.weights.emplace_back(out_classes, width, 0.1);
  return mlp;
}

Dataset one_sample_dataset(int classes = 2) {
  Sample s;
  s.features = {1.0};
  s.label = 0;
  s.one_hot = one_hot(0, classes);
  return make_dataset({s}, classes, 1);
}

}  // namespace

TEST_CASE("entropy of count multisets") {
  CHECK(entropy({4}, 4) == 0.0);
  CHECK(entropy({2, 2}, 4) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  CHECK(entropy({1, 1, 1, 1}, 4) ==
        doctest::Approx(std::log(4.0)).epsilon(1e-12));
  CHECK_THROWS_AS(entropy({0, 4}, 4), std::invalid_argument);
  CHECK_THROWS_AS(entropy({-1, 5}, 4), std::invalid_argument);
  CHECK_THROWS_AS(entropy({2, 3}, 4), std::invalid_argument);
}

TEST_CASE("perplexity is exp(entropy)") {
  CHECK(perplexity(0.0) == 1.0);
  CHECK(perplexity(std::log(2.0)) == doctest::Approx(2.0).epsilon(1e-12));
  CHECK_THROWS_AS(perplexity(-0.1), std::invalid_argument);
}

TEST_CASE("extract_patterns thresholds ReLU at zero, z = 0 counts as off") {
  const Mlp mlp = diag_first_layer({0.3, 0.0, -1.2}, 2, Activation::relu);
  const Dataset ds = one_sample_dataset();
  const auto pats = extract_patterns(mlp, ds);
  REQUIRE(pats.size() == 1);
  REQUIRE(pats[0].size() == 1);  // hidden layers only
  CHECK(pats[0][0].key() == "100");
}

TEST_CASE("extract_patterns thresholds sigmoid strictly above one half") {
  // Pre-activations chosen so the activations land at 0.51, 0.5, 0.49.
  const double z_hi = std::log(0.51 / 0.49);
  const Mlp mlp = diag_first_layer({z_hi, 0.0, -z_hi}, 2, Activation::sigmoid);
  const Dataset ds = one_sample_dataset();
  const auto pats = extract_patterns(mlp, ds);
  CHECK(pats[0][0].key() == "100");
}

TEST_CASE("identical samples produce identical patterns") {
  const Mlp mlp = diag_first_layer({0.4, -0.2, 0.9}, 2, Activation::relu);
  Sample s;
  s.features = {0.7};
  s.label = 1;
  s.one_hot = one_hot(1, 2);
  const Dataset ds = make_dataset({s, s, s}, 2, 1);
  const auto pats = extract_patterns(mlp, ds);
  CHECK(pats[0][0].key() == pats[1][0].key());
  CHECK(pats[1][0].key() == pats[2][0].key());
}

TEST_CASE("pattern table entropy matches the brute-force oracle") {
  Rng rng(61);
  for (int trial = 0; trial < 12; ++trial) {
    MlpConfig cfg;
    cfg.layer_sizes = {2 + static_cast<int>(rng.below(7)), 2};
    cfg.feature_dim = 3;
    const Mlp mlp = init_normalized_uniform(cfg, rng.next());
    std::vector<Sample> samples;
    const int n = 4 + static_cast<int>(rng.below(13));  // up to 16
    for (int i = 0; i < n; ++i) {
      Sample s;
      s.features = {rng.normal(), rng.normal(), rng.normal()};
      s.label = 0;
      s.one_hot = one_hot(0, 2);
      samples.push_back(std::move(s));
    }
    const Dataset ds = make_dataset(samples, 2, 3);
    const PatternTable table = build_pattern_table(mlp, ds);
    std::vector<long long> counts;
    for (const auto& [key, cnt] : table.counts[0][0]) counts.push_back(cnt);
    const double h = entropy(counts, table.class_totals[0]);

    std::vector<std::vector<std::uint8_t>> raw;
    for (const Sample& s : ds.samples)
      raw.push_back(forward(mlp, s.features).switches[0]);
    CHECK(h == doctest::Approx(brute_force_entropy(raw)).epsilon(1e-12));
    CHECK(perplexity(h) >= 1.0 - 1e-12);
    CHECK(perplexity(h) <=
          static_cast<double>(table.class_totals[0]) + 1e-9);
  }
}

TEST_CASE("permuting sample order changes nothing") {
  Rng rng(8);
  MlpConfig cfg;
  cfg.layer_sizes = {5, 3, 2};
  cfg.feature_dim = 3;
  const Mlp mlp = init_normalized_uniform(cfg, 2);
  std::vector<Sample> samples;
  for (int i = 0; i < 30; ++i) {
    Sample s;
    s.features = {rng.normal(), rng.normal(), rng.normal()};
    s.label = static_cast<int>(rng.below(2));
    s.one_hot = one_hot(s.label, 2);
    samples.push_back(std::move(s));
  }
  const Dataset ds = make_dataset(samples, 2, 3);
  auto shuffled = samples;
  rng.shuffle(shuffled);
  const Dataset ds2 = make_dataset(shuffled, 2, 3);

  const auto r1 = compute_perplexity_report(mlp, ds, "test", "t");
  const auto r2 = compute_perplexity_report(mlp, ds2, "test", "t");
  REQUIRE(r1.rows.size() == r2.rows.size());
  for (std::size_t i = 0; i < r1.rows.size(); ++i) {
    CHECK(r1.rows[i].entropy == r2.rows[i].entropy);
    CHECK(r1.rows[i].perplexity == r2.rows[i].perplexity);
  }
  CHECK(r1.layer_means == r2.layer_means);

  const auto f1 = activation_fractions(mlp, ds);
  const auto f2 = activation_fractions(mlp, ds2);
  CHECK(f1.fraction == f2.fraction);
}

TEST_CASE("concatenating consecutive layers never lowers perplexity") {
  Rng rng(123);
  for (int trial = 0; trial < 8; ++trial) {
    MlpConfig cfg;
    cfg.layer_sizes = {4, 4, 4, 2};
    cfg.feature_dim = 3;
    const Mlp mlp = init_normalized_uniform(cfg, rng.next());
    std::vector<Sample> samples;
    for (int i = 0; i < 40; ++i) {
      Sample s;
      s.features = {rng.normal(), rng.normal(), rng.normal()};
      s.label = 0;
      s.one_hot = one_hot(0, 2);
      samples.push_back(std::move(s));
    }
    const Dataset ds = make_dataset(samples, 2, 3);
    const auto pats = extract_patterns(mlp, ds);
    for (int l = 0; l + 1 < 3; ++l) {
      std::map<std::string, long long> joint, left, right;
      for (const auto& per_sample : pats) {
        ++left[per_sample[l].key()];
        ++right[per_sample[l + 1].key()];
        ++joint[per_sample[l].key() + per_sample[l + 1].key()];
      }
      auto perp = [&](const std::map<std::string, long long>& m) {
        std::vector<long long> counts;
        for (const auto& [k, n] : m) counts.push_back(n);
        return perplexity(entropy(counts, 40));
      };
      CHECK(perp(joint) >= std::max(perp(left), perp(right)) - 1e-9);
    }
  }
}

TEST_CASE("layer_mean_perplexity averages classes and warns on absent ones") {
  // Two classes engineered to perplexity 1 and 3: class 0 always produces
  // one pattern, class 1 three equiprobable patterns.
  PatternTable table;
  table.class_count = 2;
  table.hidden_layer_count = 1;
  table.class_totals = {6, 6};
  table.counts.assign(2, std::vector<std::map<std::string, long long>>(1));
  table.counts[0][0]["1100"] = 6;
  table.counts[1][0]["0011"] = 2;
  table.counts[1][0]["0101"] = 2;
  table.counts[1][0]["0110"] = 2;
  CHECK(layer_mean_perplexity(table, 1) == doctest::Approx(2.0).epsilon(1e-12));

  table.class_totals[1] = 0;
  table.counts[1][0].clear();
  std::vector<std::string> warnings;
  CHECK(layer_mean_perplexity(table, 1, &warnings) == doctest::Approx(1.0));
  REQUIRE(warnings.size() == 1);
  CHECK(warnings[0].find("class 1") != std::string::npos);
}

TEST_CASE("activation fractions count class activity per node") {
  // Single hidden node, z = x - 0.5: active for 19 of 20 class-0 samples.
  const Mlp mlp = [] {
    MlpConfig cfg;
    cfg.layer_sizes = {1, 2};
    cfg.feature_dim = 1;
    Mlp m;
    m.config = cfg;
    Matrix w0(1, 2);
    w0(0, 0) = 1.0;
    w0(0, 1) = -0.5;
    m.weights.push_back(w0);
    m.weights.emplace_back(2, 1, 1.0);
    return m;
  }();
  std::vector<Sample> samples;
  for (int i = 0; i < 20; ++i) {
    Sample s;
    s.features = {i == 0 ? 0.1 : 1.0};  // one sample below the threshold
    s.label = 0;
    s.one_hot = one_hot(0, 2);
    samples.push_back(std::move(s));
  }
  const Dataset ds = make_dataset(samples, 2, 1);
  const auto profile = activation_fractions(mlp, ds);
  REQUIRE(profile.fraction.size() == 3);  // 1 hidden + 2 output nodes
  CHECK(profile.fraction[0][0] == doctest::Approx(0.95));
  CHECK(profile.fraction[0][1] == 0.0);  // no class-1 samples
  CHECK(profile.node_layer == std::vector<int>{1, 2, 2});

  // A dead node reports zero for every class.
  Mlp dead = mlp;
  dead.weights[0](0, 0) = -1.0;
  dead.weights[0](0, 1) = -1.0;
  const auto dead_profile = activation_fractions(dead, ds);
  CHECK(dead_profile.fraction[0][0] == 0.0);
}

TEST_CASE("perplexity and fraction CSVs have the documented shape") {
  MlpConfig cfg;
  cfg.layer_sizes = {3, 2};
  cfg.feature_dim = 2;
  const Mlp mlp = init_normalized_uniform(cfg, 4);
  const Dataset ds = synthetic_gaussians(2, 10, 2, 2.0, 6);
  const auto report = compute_perplexity_report(mlp, ds, "test", "tag");
  const auto profile = activation_fractions(mlp, ds);

  const auto dir = std::filesystem::temp_directory_path();
  RunAttribution attr{1, 3, 7, "best", 2};
  const std::string p1 = (dir / "mlplab_perp.csv").string();
  const std::string p2 = (dir / "mlplab_mean.csv").string();
  const std::string p3 = (dir / "mlplab_frac.csv").string();
  write_perplexity_csv(report, attr, p1);
  write_layer_mean_csv(report, attr, p2);
  write_fractions_csv(profile, attr, p3);

  const CsvTable t1 = read_csv(p1);
  CHECK(t1.header == std::vector<std::string>{"depth", "width", "seed",
                                              "checkpoint_kind",
                                              "checkpoint_index", "layer",
                                              "class", "entropy", "perplexity"});
  CHECK(t1.rows.size() == 2);  // 1 hidden layer x 2 classes
  const CsvTable t2 = read_csv(p2);
  CHECK(t2.rows.size() == 1);
  const CsvTable t3 = read_csv(p3);
  CHECK(t3.rows.size() == 5 * 2);  // (3 hidden + 2 output) x 2 classes
}
