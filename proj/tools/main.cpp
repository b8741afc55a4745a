// Command-line front end: dataset preparation, continual training runs,
// ablation grids and report aggregation.
//
// Exit codes: 0 success, 1 runtime failure, 2 usage or config error.

#include <iostream>

#include "CLI11.hpp"
#include "cladnet/experiment.hpp"

namespace {

int guarded(const std::function<void()>& body) {
  try {
    body();
    return 0;
  } catch (const cladnet::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"continual activity-recognition experiments"};
  app.require_subcommand(1);

  std::string config_path;
  std::string dataset, root, out, cache, strategy, axis, runs_dir;
  std::uint64_t seed = 0;
  double phi = 0.0;

  auto* prepare = app.add_subcommand("prepare", "parse, window, split and cache a dataset");
  prepare->add_option("--config", config_path, "experiment config (json)")->required();
  prepare->add_option("--dataset", dataset, "override dataset kind (synthetic|pamap2|dsa)");
  prepare->add_option("--root", root, "override dataset root directory");
  prepare->add_option("--out", out, "cache output directory");

  auto* train = app.add_subcommand("train", "run the subject-sequential training protocol");
  train->add_option("--config", config_path, "experiment config (json)")->required();
  auto* strat_opt = train->add_option("--strategy", strategy,
                                      "override strategy (clad|lwf|ewc|er|naive|clad_no_distill)");
  auto* seed_opt = train->add_option("--seed", seed, "override run.seeds with a single seed");
  auto* out_opt = train->add_option("--out", out, "override output directory");
  auto* cache_opt = train->add_option("--cache", cache, "override prepared cache path");
  auto* phi_opt = train->add_option("--phi", phi, "override labeled fraction in (0, 1]");

  auto* ablate = app.add_subcommand("ablate", "run an ablation grid");
  ablate->add_option("--config", config_path, "experiment config (json)")->required();
  ablate->add_option("--axis", axis, "components|ssl_loss|augmentation|attention|labels")
      ->required();
  auto* aout_opt = ablate->add_option("--out", out, "override output directory");
  auto* acache_opt = ablate->add_option("--cache", cache, "override prepared cache path");

  auto* report = app.add_subcommand("report", "aggregate results over run directories");
  report->add_option("--runs", runs_dir, "directory containing run outputs")->required();
  report->add_option("--out", out, "report output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  if (prepare->parsed()) {
    return guarded([&] {
      cladnet::PrepareOptions options;
      options.config = config_path;
      if (!dataset.empty()) options.dataset_override = dataset;
      if (!root.empty()) options.root_override = root;
      if (!out.empty()) options.out_override = out;
      cladnet::run_prepare(options);
    });
  }
  if (train->parsed()) {
    return guarded([&] {
      cladnet::TrainOptions options;
      options.config = config_path;
      if (*strat_opt) options.strategy_override = strategy;
      if (*seed_opt) options.seed_override = seed;
      if (*out_opt) options.out_override = out;
      if (*cache_opt) options.cache_override = cache;
      if (*phi_opt) options.phi_override = phi;
      cladnet::run_train(options);
    });
  }
  if (ablate->parsed()) {
    return guarded([&] {
      cladnet::AblateOptions options;
      options.config = config_path;
      options.axis = axis;
      if (*aout_opt) options.out_override = out;
      if (*acache_opt) options.cache_override = cache;
      cladnet::run_ablate(options);
    });
  }
  if (report->parsed()) {
    return guarded([&] {
      cladnet::ReportOptions options;
      options.runs_dir = runs_dir;
      options.out_dir = out;
      cladnet::run_report(options);
    });
  }
  return 2;
}
