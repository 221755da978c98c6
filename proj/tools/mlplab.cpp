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

// mlplab command line. Subcommands:
//   train       train every grid cell, write checkpoints + manifest
//   perplexity  train (or reuse) cells and emit layer perplexity CSVs
//   fractions   train (or reuse) cells and emit activation-fraction CSVs
//   systems     train (or reuse) cells and emit three-system accuracy CSVs
//   gradcheck   certify backprop against the path-sum gradient
//   sweep       run the spec's own analyses list
//   emit        aggregate per-cell results into per-figure CSVs
// Exit codes: 0 success, 2 config error, 3 training/numeric failure,
// 4 gradcheck tolerance failure.

#include <cstdio>
#include <exception>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mlplab/mlplab.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitTraining = 3;
constexpr int kExitTolerance = 4;

struct CommonArgs {
  std::string spec_path;
  std::string out_dir = "out";
  int workers = 1;
  std::vector<std::uint64_t> seed_override;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--spec", args.spec_path, "experiment spec file")->required();
  cmd->add_option("--out", args.out_dir, "output directory");
  cmd->add_option("--workers", args.workers, "concurrent grid cells");
  cmd->add_option("--seed-override", args.seed_override,
                  "replace the spec's seed list");
}

mlplab::expt::ExperimentSpec load_spec(const CommonArgs& args) {
  auto spec = mlplab::expt::parse_spec(args.spec_path);
  if (!args.seed_override.empty()) spec.seeds = args.seed_override;
  return spec;
}

int run_with_analyses(const CommonArgs& args,
                      std::vector<mlplab::expt::Analysis> analyses,
                      bool keep_spec_analyses) {
  auto spec = load_spec(args);
  if (!keep_spec_analyses) spec.analyses = std::move(analyses);
  const auto manifest = mlplab::expt::run(spec, args.out_dir, args.workers);
  int failures = 0;
  for (const auto& rec : manifest.runs) {
    std::printf("cell d%d w%d seed %llu: %s%s%s (%.1fs)%s\n", rec.depth,
                rec.width, static_cast<unsigned long long>(rec.seed),
                rec.status.c_str(), rec.error.empty() ? "" : " - ",
                rec.error.c_str(), rec.wall_seconds,
                rec.reused ? " [reused]" : "");
    if (rec.status != "ok") ++failures;
  }
  std::printf("manifest: %s/manifest.json (%zu cells)\n", args.out_dir.c_str(),
              manifest.runs.size());
  return failures == 0 ? kExitOk : kExitTraining;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"train fully-connected nets and reproduce the layer analyses"};
  app.require_subcommand(1);

  CommonArgs train_args, perp_args, frac_args, sys_args, grad_args, sweep_args,
      emit_args;
  std::string emit_figure;
  int emit_node = 0;
  int emit_bins = 50;

  add_common(app.add_subcommand("train", "train the grid, no analyses"),
             train_args);
  add_common(app.add_subcommand("perplexity", "layer perplexity analysis"),
             perp_args);
  add_common(app.add_subcommand("fractions", "activation-fraction analysis"),
             frac_args);
  add_common(app.add_subcommand("systems", "three-system accuracy analysis"),
             sys_args);
  add_common(app.add_subcommand("gradcheck",
                                "verify backprop against path enumeration"),
             grad_args);
  add_common(app.add_subcommand("sweep", "run the spec's analyses list"),
             sweep_args);
  auto* emit_cmd =
      app.add_subcommand("emit", "aggregate results into figure CSVs");
  add_common(emit_cmd, emit_args);
  emit_cmd->add_option("--figure", emit_figure, "fig1..fig6, fig9, fig10, fig11")
      ->required();
  emit_cmd->add_option("--node", emit_node, "global node index (fig11)");
  emit_cmd->add_option("--bins", emit_bins, "histogram bins (fig11)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (app.got_subcommand("train"))
      return run_with_analyses(train_args, {}, false);
    if (app.got_subcommand("perplexity"))
      return run_with_analyses(perp_args,
                               {mlplab::expt::Analysis::perplexity}, false);
    if (app.got_subcommand("fractions"))
      return run_with_analyses(frac_args,
                               {mlplab::expt::Analysis::fractions}, false);
    if (app.got_subcommand("systems"))
      return run_with_analyses(sys_args, {mlplab::expt::Analysis::systems},
                               false);
    if (app.got_subcommand("sweep"))
      return run_with_analyses(sweep_args, {}, true);

    if (app.got_subcommand("gradcheck")) {
      const auto spec = load_spec(grad_args);
      const auto result = mlplab::expt::gradcheck(spec, grad_args.out_dir);
      std::printf("gradcheck: %d nets checked, %d skipped, max_abs_diff=%.3e\n",
                  result.nets_checked, result.nets_skipped,
                  result.max_abs_diff);
      std::printf("report: %s\n", result.report_file.c_str());
      return result.any_exceeds ? kExitTolerance : kExitOk;
    }

    if (app.got_subcommand("emit")) {
      const auto spec = load_spec(emit_args);
      const auto manifest = mlplab::expt::load_manifest(emit_args.out_dir);
      if (!manifest)
        throw mlplab::ConfigError("no manifest in " + emit_args.out_dir +
                                  "; run sweep first");
      mlplab::expt::EmitOptions opts;
      opts.node_global_index = emit_node;
      opts.bins = emit_bins;
      const std::string path = mlplab::expt::emit_figure_data(
          spec, *manifest, emit_args.out_dir,
          mlplab::expt::parse_figure(emit_figure), opts);
      std::printf("wrote %s\n", path.c_str());
      return kExitOk;
    }
  } catch (const mlplab::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitConfig;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitConfig;
  } catch (const mlplab::TrainingError& e) {
    std::fprintf(stderr, "training error: %s\n", e.what());
    return kExitTraining;
  } catch (const mlplab::NumericError& e) {
    std::fprintf(stderr, "numeric error: %s\n", e.what());
    return kExitTraining;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitTraining;
  }
  return kExitConfig;
}
