#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "mlplab/experiment.hpp"

using namespace mlplab;
using namespace mlplab::expt;
namespace fs = std::filesystem;

namespace {

const char* kTinySpec = R"(
spec_version = 1
dataset = synthetic
synthetic.classes = 3
synthetic.per_class = 40
synthetic.feature_dim = 4
synthetic.separation = 4.0
synthetic.seed = 5
split.train_fraction = 0.6
split.val_fraction = 0.2
split.seed = 11
arch.depths = 1 2
arch.widths = 6
activation = relu
loss = mse_linear
train.max_epochs = 3
train.batch_size = 16
train.learning_rate = 0.01
train.checkpoint_epochs = 1
train.checkpoint_batches = 1
seeds = 1 2
analyses = perplexity fractions systems
)";

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in);
  return std::string((std::istreambuf_iterator<char>(in)),
                     std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("spec parsing: values, defaults and errors") {
  const ExperimentSpec spec = parse_spec_text(kTinySpec);
  CHECK(spec.synthetic.classes == 3);
  CHECK(spec.depths == std::vector<int>{1, 2});
  CHECK(spec.seeds == std::vector<std::uint64_t>{1, 2});
  CHECK(spec.analyses.size() == 3);
  CHECK(spec.effective_learning_rate() == 0.01);

  // Kind-dependent defaults.
  ExperimentSpec bare = parse_spec_text("spec_version = 1\n");
  CHECK(bare.effective_learning_rate() == 1e-2);
  CHECK(bare.effective_train_fraction() == 0.6);
  bare.dataset_kind = "idx";
  CHECK(bare.effective_learning_rate() == 1e-3);
  CHECK(bare.effective_train_fraction() == doctest::Approx(5.0 / 6.0));

  CHECK_THROWS_AS(parse_spec_text("spec_version = 1\nbogus_key = 3\n"),
                  ConfigError);
  CHECK_THROWS_AS(parse_spec_text("dataset = synthetic\n"), ConfigError);
  CHECK_THROWS_AS(parse_spec_text("spec_version = 2\n"), ConfigError);
  CHECK_THROWS_AS(parse_spec_text("spec_version = 1\nseeds = \n"), ConfigError);
  CHECK_THROWS_AS(
      parse_spec_text("spec_version = 1\ndataset = idx\n"), ConfigError);
  CHECK_THROWS_AS(parse_spec_text("spec_version = 1\nanalyses = nonsense\n"),
                  ConfigError);
}

TEST_CASE("spec hash is stable under reordering and sensitive to values") {
  const ExperimentSpec a = parse_spec_text(
      "spec_version = 1\nseeds = 1 2\narch.depths = 3\n");
  const ExperimentSpec b = parse_spec_text(
      "arch.depths = 3\nseeds = 1 2\nspec_version = 1\n");
  CHECK(spec_hash(a) == spec_hash(b));

  ExperimentSpec c = a;
  c.seeds = {1, 3};
  CHECK(spec_hash(a) != spec_hash(c));
}

TEST_CASE("run trains the grid and writes everything the manifest names") {
  const fs::path dir = fresh_dir("mlplab_run_test");
  const ExperimentSpec spec = parse_spec_text(kTinySpec);
  const RunManifest manifest = run(spec, dir.string());

  REQUIRE(manifest.runs.size() == 4);  // 2 depths x 1 width x 2 seeds
  for (const RunRecord& rec : manifest.runs) {
    CHECK(rec.status == "ok");
    CHECK(!rec.reused);
    // checkpoint epoch 1, batch 1, best; result CSVs for three analyses.
    CHECK(rec.checkpoint_files.size() == 3);
    CHECK(rec.result_files.size() == 4);  // 2 perplexity + fractions + systems
    for (const std::string& f : rec.checkpoint_files) CHECK(fs::exists(dir / f));
    for (const std::string& f : rec.result_files) CHECK(fs::exists(dir / f));
  }
  CHECK(fs::exists(dir / "manifest.json"));
}

TEST_CASE("rerunning an unchanged spec reuses every cell byte-for-byte") {
  const fs::path dir = fresh_dir("mlplab_rerun_test");
  const ExperimentSpec spec = parse_spec_text(kTinySpec);
  const RunManifest first = run(spec, dir.string());

  std::map<std::string, std::string> before;
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.path().extension() == ".csv")
      before[entry.path().filename().string()] = slurp(entry.path());
  REQUIRE(!before.empty());

  const RunManifest second = run(spec, dir.string());
  for (const RunRecord& rec : second.runs) CHECK(rec.reused);
  for (const auto& [name, bytes] : before) CHECK(slurp(dir / name) == bytes);
}

TEST_CASE("two runs of one spec into different directories match exactly") {
  const fs::path dir_a = fresh_dir("mlplab_det_a");
  const fs::path dir_b = fresh_dir("mlplab_det_b");
  const ExperimentSpec spec = parse_spec_text(kTinySpec);
  run(spec, dir_a.string());
  run(spec, dir_b.string());
  int compared = 0;
  for (const auto& entry : fs::directory_iterator(dir_a)) {
    if (entry.path().extension() != ".csv") continue;
    CHECK(slurp(entry.path()) == slurp(dir_b / entry.path().filename()));
    ++compared;
  }
  CHECK(compared > 0);
}

TEST_CASE("a diverging cell is recorded without poisoning the others") {
  const fs::path dir = fresh_dir("mlplab_diverge_test");
  ExperimentSpec spec = parse_spec_text(kTinySpec);
  spec.analyses = {};
  spec.activation = Activation::sigmoid;  // cannot dead-end at zero
  spec.optimizer = Optimizer::sgd;
  spec.learning_rate = 1e14;
  spec.max_epochs = 50;
  spec.depths = {2};
  spec.seeds = {1};
  const RunManifest manifest = run(spec, dir.string());
  REQUIRE(manifest.runs.size() == 1);
  CHECK(manifest.runs[0].status == "diverged");

  // Same grid with a sane sibling cell: the sane cell still completes.
  const fs::path dir2 = fresh_dir("mlplab_diverge_test2");
  ExperimentSpec mixed = parse_spec_text(kTinySpec);
  mixed.analyses = {};
  mixed.seeds = {1};
  mixed.depths = {1, 2};
  mixed.learning_rate = 0.01;
  RunManifest ok = run(mixed, dir2.string());
  for (const RunRecord& rec : ok.runs) CHECK(rec.status == "ok");
}

TEST_CASE("gradcheck certifies small nets and honors the budget") {
  const fs::path dir = fresh_dir("mlplab_gradcheck_test");
  ExperimentSpec spec = parse_spec_text("spec_version = 1\nseeds = 1 2 3\n");
  spec.gradcheck_sizes = {5, 4, 3};
  spec.gradcheck_samples = 10;
  const GradcheckResult r = gradcheck(spec, dir.string());
  CHECK(r.nets_checked == 3);
  CHECK(r.nets_skipped == 0);
  CHECK_FALSE(r.any_exceeds);
  CHECK(r.max_abs_diff < 1e-10);
  CHECK(fs::exists(r.report_file));

  // Impossible tolerance: floating-point noise must trip it.
  spec.gradcheck_tolerance = 0.0;
  const GradcheckResult strict = gradcheck(spec, dir.string());
  CHECK(strict.any_exceeds);

  // Over-budget architectures are skipped with a reason, not failed.
  spec.gradcheck_tolerance = 1e-10;
  spec.gradcheck_sizes = {40, 40, 40, 40, 40, 10};  // 40^4 * 10 paths
  const GradcheckResult big = gradcheck(spec, dir.string());
  CHECK(big.nets_checked == 0);
  CHECK(big.nets_skipped == 3);
  CHECK_FALSE(big.any_exceeds);
}

TEST_CASE("emit aggregates figure CSVs and names missing analyses") {
  const fs::path dir = fresh_dir("mlplab_emit_test");
  ExperimentSpec spec = parse_spec_text(kTinySpec);
  const RunManifest manifest = run(spec, dir.string());

  const std::string fig2 = emit_figure_data(spec, manifest, dir.string(),
                                            Figure::fig2);
  const CsvTable t2 = read_csv(fig2);
  CHECK(t2.rows.size() == 4 * 3);  // per cell: train/val/test

  const std::string fig3 = emit_figure_data(spec, manifest, dir.string(),
                                            Figure::fig3);
  const CsvTable t3 = read_csv(fig3);
  CHECK(t3.rows.size() == 2 + 2 + 1 + 1);  // depth-2 cells have 2 layers

  const std::string fig1 = emit_figure_data(spec, manifest, dir.string(),
                                            Figure::fig1);
  const CsvTable t1 = read_csv(fig1);
  // One row per node: depth 1 -> 6+3 nodes, depth 2 -> 12+3, two seeds each.
  CHECK(t1.rows.size() == 2 * (9 + 15));
  CHECK(t1.header.back() == "fraction_class_2");

  const std::string fig6 = emit_figure_data(spec, manifest, dir.string(),
                                            Figure::fig6);
  for (const auto& row : read_csv(fig6).rows) CHECK(row.at(3) == "batch");

  const std::string fig11 = emit_figure_data(spec, manifest, dir.string(),
                                             Figure::fig11, {0, 10});
  CHECK(read_csv(fig11).rows.size() == 4 * 3 * 10);  // cells x classes x bins

  // Figure needing an analysis that was never run.
  const fs::path dir2 = fresh_dir("mlplab_emit_missing");
  ExperimentSpec bare = parse_spec_text(kTinySpec);
  bare.analyses = {};
  const RunManifest m2 = run(bare, dir2.string());
  try {
    emit_figure_data(bare, m2, dir2.string(), Figure::fig3);
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("perplexity") != std::string::npos);
  }

  CHECK_THROWS_AS(parse_figure("fig7"), ConfigError);
}
