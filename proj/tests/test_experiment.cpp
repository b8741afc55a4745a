#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "cladnet/experiment.hpp"
#include "doctest.h"

using namespace cladnet;
namespace fs = std::filesystem;

TEST_SUITE_BEGIN("experiment");

namespace {

fs::path fresh_dir(const std::string& tag) {
  const fs::path dir = fs::temp_directory_path() / ("cladnet_exp_" + tag);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string read_file(const fs::path& path) {
  std::ifstream is(path);
  REQUIRE(is);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

// Small synthetic experiment: 2 subjects, 2 parts, ~40 windows each.
std::string tiny_config_json(const fs::path& workdir) {
  return std::string(R"({
  "dataset": {
    "kind": "synthetic", "rate_hz": 25.0, "window_seconds": 1.28, "overlap": 0.5,
    "seed": 3,
    "parts": [
      {"name": "hand", "channels": ["ch0", "ch1", "ch2"]},
      {"name": "ankle", "channels": ["ch3", "ch4", "ch5"]}
    ],
    "query_part": "hand",
    "synthetic": {"subjects": 2, "classes": 3, "channels": 6,
                   "segment_len": 96, "segments_per_class": 2}
  },
  "model": {
    "d_model": 8, "heads": 1, "ff_hidden": 16, "dropout": 0.0, "attention": "cross",
    "cnn": {"kernel": 3, "widths": [4, 6, 8]}
  },
  "ssl": {"loss": "barlow_twins", "lambda_bt": 1.0, "epochs": 1, "batch_size": 16,
           "lr": 0.001, "augment": {"kind": "crop_resize"}},
  "strategy": {"kind": "naive"},
  "run": {"epochs": 2, "batch_size": 16, "lr": 0.003, "seeds": [1],
           "out_dir": ")") +
         (workdir / "out").string() + R"(", "cache": ")" + (workdir / "cache/prepared.bin").string() +
         R"("}
})";
}

fs::path write_config(const fs::path& workdir, const std::string& text) {
  const fs::path path = workdir / "config.json";
  std::ofstream os(path);
  os << text;
  return path;
}

const char* cli_path() {
  const char* env = std::getenv("CLADNET_CLI");
  return env ? env : "";
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(cli_path()) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WEXITSTATUS(status);
}

}  // namespace

TEST_CASE("config: defaults, overrides, unknown keys rejected") {
  const ExperimentConfig defaults = default_config();
  CHECK(defaults.transformer.d_model == 64);
  CHECK(defaults.transformer.heads == 4);
  CHECK(defaults.cnn.widths == std::vector<std::size_t>{32, 64, 128});
  CHECK(defaults.ssl.lambda_bt == 1.0);
  CHECK(defaults.ssl.temperature == 0.5);
  CHECK(defaults.ssl.byol_momentum == 0.99);
  CHECK(defaults.strategy.lambda_distill == 1.0);
  CHECK(defaults.strategy.lambda_ewc == 100.0);
  CHECK(defaults.strategy.er_capacity == 200);
  CHECK(defaults.run.epochs == 50);
  CHECK(defaults.run.lr == 1e-3);

  const ExperimentConfig cfg = config_from_json_text(
      R"({"model": {"d_model": 16}, "ssl": {"loss": "ntxent"}})", "test");
  CHECK(cfg.transformer.d_model == 16);
  CHECK(cfg.ssl.loss == SslLossKind::kNtXent);
  CHECK(cfg.transformer.heads == 4);  // untouched default

  CHECK_THROWS_AS(config_from_json_text(R"({"modle": {}})", "test"), ConfigError);
  CHECK_THROWS_AS(config_from_json_text(R"({"model": {"dmodel": 3}})", "test"), ConfigError);
  CHECK_THROWS_AS(config_from_json_text(R"({"run": {"phi": 0.0}})", "test"), ConfigError);
  CHECK_THROWS_AS(config_from_json_text("not json", "test"), ConfigError);
  CHECK_THROWS_AS(config_from_json_text(R"({"strategy": {"kind": "bogus"}})", "test"),
                  ConfigError);

  // the resolved echo parses back to the same content
  const std::string echoed = config_to_json_text(cfg);
  const ExperimentConfig again = config_from_json_text(echoed, "echo");
  CHECK(config_to_json_text(again) == echoed);
}

TEST_CASE("build_partition: default single group and explicit parts") {
  DatasetConfig cfg;
  const std::vector<std::string> names = {"a", "b", "c"};
  const BodyPartition whole = build_partition(cfg, names);
  CHECK(whole.groups.size() == 1);
  CHECK(whole.groups[0] == std::vector<std::size_t>{0, 1, 2});

  cfg.parts = {{"left", {"a", "b"}}, {"right", {"c"}}};
  cfg.query_part = "right";
  const BodyPartition split = build_partition(cfg, names);
  CHECK(split.groups.size() == 2);
  CHECK(split.query == 1);

  cfg.parts = {{"left", {"a", "zzz"}}};
  CHECK_THROWS_AS(build_partition(cfg, names), ConfigError);
}

TEST_CASE("window cache round trip preserves every window") {
  const fs::path dir = fresh_dir("cache");
  DatasetConfig dcfg;
  dcfg.kind = DatasetKind::kSynthetic;
  dcfg.rate_hz = 25.0;
  dcfg.window_seconds = 1.28;
  dcfg.synthetic.subjects = 2;
  dcfg.synthetic.segment_len = 64;
  dcfg.synthetic.segments_per_class = 2;
  auto [subjects, parsed] = prepare_subjects(dcfg);

  WindowCache cache;
  cache.classes = 3;
  cache.window_len = 32;
  cache.channels = 6;
  cache.channel_names = {"ch0", "ch1", "ch2", "ch3", "ch4", "ch5"};
  cache.partition.groups = {{0, 1, 2}, {3, 4, 5}};
  cache.partition.names = {"hand", "ankle"};
  cache.partition.query = 0;
  cache.subjects = subjects;

  const fs::path path = dir / "cache.bin";
  save_cache(path, cache);
  const WindowCache loaded = load_cache(path);
  CHECK(loaded.classes == cache.classes);
  CHECK(loaded.window_len == cache.window_len);
  CHECK(loaded.channel_names == cache.channel_names);
  CHECK(loaded.partition.groups == cache.partition.groups);
  CHECK(loaded.partition.query == cache.partition.query);
  REQUIRE(loaded.subjects.size() == cache.subjects.size());
  for (std::size_t s = 0; s < cache.subjects.size(); ++s) {
    REQUIRE(loaded.subjects[s].train.size() == cache.subjects[s].train.size());
    REQUIRE(loaded.subjects[s].test.size() == cache.subjects[s].test.size());
    for (std::size_t i = 0; i < cache.subjects[s].train.size(); ++i) {
      CHECK(loaded.subjects[s].train[i].data == cache.subjects[s].train[i].data);
      CHECK(loaded.subjects[s].train[i].label == cache.subjects[s].train[i].label);
    }
  }
  // deterministic bytes
  const fs::path path2 = dir / "cache2.bin";
  save_cache(path2, cache);
  CHECK(file_checksum(path) == file_checksum(path2));

  CHECK_THROWS_AS(load_cache(dir / "nope.bin"), IoError);
}

TEST_CASE("csv io round trips and carries the format-version line") {
  const fs::path dir = fresh_dir("csv");
  const std::vector<ResultRow> results = {{"naive", 1, 1, 1, 0.5}, {"naive", 1, 1, 2, 0.25}};
  write_results_csv(dir / "results.csv", results);
  const std::string text = read_file(dir / "results.csv");
  CHECK(text.rfind("# cladnet-csv", 0) == 0);
  const auto parsed = read_results_csv(dir / "results.csv");
  REQUIRE(parsed.size() == 2);
  CHECK(parsed[1].accuracy == 0.25);
  CHECK(parsed[1].t_prime == 2);

  const std::vector<SummaryRow> summary = {{"clad", 7, 0.9, 0.05, 0.99}};
  write_summary_csv(dir / "summary.csv", summary);
  const auto sparsed = read_summary_csv(dir / "summary.csv");
  REQUIRE(sparsed.size() == 1);
  CHECK(sparsed[0].strategy == "clad");
  CHECK(sparsed[0].fm == 0.05);
}

TEST_CASE("prepare then train produce results, manifest and checkpoints") {
  const fs::path dir = fresh_dir("train");
  const fs::path config = write_config(dir, tiny_config_json(dir));

  run_prepare({.config = config});
  CHECK(fs::exists(dir / "cache/prepared.bin"));
  CHECK(fs::exists(dir / "cache/prepare_stats.json"));

  // rerun: identical cache checksum
  const std::uint64_t sum1 = file_checksum(dir / "cache/prepared.bin");
  run_prepare({.config = config});
  CHECK(file_checksum(dir / "cache/prepared.bin") == sum1);

  run_train({.config = config});
  CHECK(fs::exists(dir / "out/results.csv"));
  CHECK(fs::exists(dir / "out/summary.csv"));
  CHECK(fs::exists(dir / "out/manifest.json"));
  CHECK(fs::exists(dir / "out/checkpoints/seed1/task1_subject1.ckpt"));
  CHECK(fs::exists(dir / "out/checkpoints/seed1/task2_subject2.ckpt"));

  const auto results = read_results_csv(dir / "out/results.csv");
  CHECK(results.size() == 4);  // 2 subjects x 2 training stops
  const auto summary = read_summary_csv(dir / "out/summary.csv");
  REQUIRE(summary.size() == 1);
  CHECK(summary[0].strategy == "naive");

  // the manifest echoes the fully-resolved config
  const std::string manifest = read_file(dir / "out/manifest.json");
  CHECK(manifest.find("cache_checksum") != std::string::npos);
  CHECK(manifest.find("\"d_model\": 8") != std::string::npos);

  // rerun into a second directory: byte-identical summary
  run_train({.config = config, .out_override = dir / "out2"});
  CHECK(read_file(dir / "out/summary.csv") == read_file(dir / "out2/summary.csv"));
}

TEST_CASE("train honors strategy, seed and phi overrides") {
  const fs::path dir = fresh_dir("overrides");
  const fs::path config = write_config(dir, tiny_config_json(dir));
  run_prepare({.config = config});

  run_train({.config = config,
             .strategy_override = "lwf",
             .seed_override = 17,
             .out_override = dir / "lwf_out",
             .phi_override = 0.5});
  const auto summary = read_summary_csv(dir / "lwf_out/summary.csv");
  REQUIRE(summary.size() == 1);
  CHECK(summary[0].strategy == "lwf");
  CHECK(summary[0].seed == 17);

  CHECK_THROWS_AS(run_train({.config = config, .strategy_override = "bogus"}), std::exception);
  CHECK_THROWS_AS(run_train({.config = config, .phi_override = 2.0}), ConfigError);
}

TEST_CASE("ablate: attention axis emits exactly its grid rows") {
  const fs::path dir = fresh_dir("ablate");
  const fs::path config = write_config(dir, tiny_config_json(dir));
  run_prepare({.config = config});

  run_ablate({.config = config, .axis = "attention", .out_override = dir / "ablation"});
  const std::string csv = read_file(dir / "ablation/ablation_attention.csv");
  std::size_t rows = 0;
  for (char c : csv) rows += c == '\n' ? 1 : 0;
  CHECK(rows == 4);  // version line + header + 2 cells
  CHECK(csv.find("attention,cross,") != std::string::npos);
  CHECK(csv.find("attention,self,") != std::string::npos);

  CHECK_THROWS_AS(run_ablate({.config = config, .axis = "bogus"}), ConfigError);
}

TEST_CASE("report aggregates runs and emits full curves") {
  const fs::path dir = fresh_dir("report");
  const fs::path config = write_config(dir, tiny_config_json(dir));
  run_prepare({.config = config});
  run_train({.config = config, .seed_override = 1, .out_override = dir / "runs/a"});
  run_train({.config = config, .seed_override = 2, .out_override = dir / "runs/b"});

  run_report({.runs_dir = dir / "runs", .out_dir = dir / "report"});
  const auto aggregate = read_file(dir / "report/aggregate.csv");
  CHECK(aggregate.find("naive,2,") != std::string::npos);

  const std::string curves = read_file(dir / "report/curves.csv");
  std::size_t rows = 0;
  for (char c : curves) rows += c == '\n' ? 1 : 0;
  CHECK(rows == 2 + 4);  // version + header + T*T rows for one strategy

  CHECK_THROWS_AS(run_report({.runs_dir = dir / "empty_runs", .out_dir = dir / "r2"}),
                  ConfigError);
}

TEST_CASE("single run aggregate equals the raw values with zero std") {
  const fs::path dir = fresh_dir("report_single");
  const fs::path config = write_config(dir, tiny_config_json(dir));
  run_prepare({.config = config});
  run_train({.config = config});
  run_report({.runs_dir = dir / "out", .out_dir = dir / "report"});

  const auto summary = read_summary_csv(dir / "out/summary.csv");
  const std::string aggregate = read_file(dir / "report/aggregate.csv");
  std::stringstream ss(aggregate);
  std::string line;
  std::getline(ss, line);  // version
  std::getline(ss, line);  // header
  std::getline(ss, line);  // naive row
  std::vector<std::string> fields;
  std::stringstream ls(line);
  std::string field;
  while (std::getline(ls, field, ',')) fields.push_back(field);
  REQUIRE(fields.size() == 8);
  CHECK(std::stod(fields[2]) == doctest::Approx(summary[0].fa));
  CHECK(std::stod(fields[3]) == doctest::Approx(0.0));  // std over one run
  CHECK(std::stod(fields[4]) == doctest::Approx(summary[0].fm));
  CHECK(std::stod(fields[6]) == doctest::Approx(summary[0].la));
}

TEST_CASE("prepare on a pamap2 fixture: stats report matches the hand count") {
  const fs::path dir = fresh_dir("pamap2_prepare");
  fs::create_directories(dir / "raw");
  {
    std::ofstream os(dir / "raw/subject101.dat");
    // 6 valid rows of activity 1 and 2, plus one transient and one NaN row
    os << "0.01 1 100 0.10 0.20\n";
    os << "0.02 1 100 0.30 0.40\n";
    os << "0.03 1 100 0.50 0.60\n";
    os << "0.04 0 100 9.90 9.90\n";
    os << "0.05 2 100 0.70 0.80\n";
    os << "0.06 2 100 NaN 0.90\n";
    os << "0.07 2 100 0.11 0.21\n";
    os << "0.08 2 100 0.31 0.41\n";
  }
  const std::string config_text = std::string(R"({
  "dataset": {
    "kind": "pamap2", "root": ")") + (dir / "raw").string() + R"(",
    "rate_hz": 100.0, "window_seconds": 0.02, "overlap": 0.5, "seed": 1,
    "channels": [{"name": "acc_x", "column": 3}, {"name": "acc_y", "column": 4}],
    "activity_map": {"1": 0, "2": 1}
  },
  "run": {"cache": ")" + (dir / "cache/prepared.bin").string() + R"("}
})";
  const fs::path config = write_config(dir, config_text);
  run_prepare({.config = config});

  const std::string stats = read_file(dir / "cache/prepare_stats.json");
  // 6 valid rows -> 5 two-sample windows at 50% overlap, split 4/1; 2 dropped
  CHECK(stats.find("\"rows_dropped\": 2") != std::string::npos);
  CHECK(stats.find("\"train_windows\": 4") != std::string::npos);
  CHECK(stats.find("\"test_windows\": 1") != std::string::npos);
}

TEST_CASE("two-seed aggregate matches hand-computed mean and std") {
  const fs::path dir = fresh_dir("report_two");
  const fs::path config = write_config(dir, tiny_config_json(dir));
  run_prepare({.config = config});
  run_train({.config = config, .seed_override = 3, .out_override = dir / "runs/a"});
  run_train({.config = config, .seed_override = 4, .out_override = dir / "runs/b"});
  run_report({.runs_dir = dir / "runs", .out_dir = dir / "report"});

  const auto sa = read_summary_csv(dir / "runs/a/summary.csv");
  const auto sb = read_summary_csv(dir / "runs/b/summary.csv");
  const double fa_mean = (sa[0].fa + sb[0].fa) / 2.0;
  const double fa_std = std::abs(sa[0].fa - sb[0].fa) / 2.0;

  const std::string aggregate = read_file(dir / "report/aggregate.csv");
  std::stringstream ss(aggregate);
  std::string line;
  std::getline(ss, line);
  std::getline(ss, line);
  std::getline(ss, line);
  std::vector<std::string> fields;
  std::stringstream ls(line);
  std::string field;
  while (std::getline(ls, field, ',')) fields.push_back(field);
  REQUIRE(fields.size() == 8);
  CHECK(std::stod(fields[2]) == doctest::Approx(fa_mean).epsilon(1e-9));
  CHECK(std::stod(fields[3]) == doctest::Approx(fa_std).epsilon(1e-9));
}

TEST_CASE("cli binary: usage errors exit 2, prepare+train exit 0") {
  if (std::string(cli_path()).empty()) {
    MESSAGE("CLADNET_CLI not set; skipping binary-level checks");
    return;
  }
  const fs::path dir = fresh_dir("cli");
  const fs::path config = write_config(dir, tiny_config_json(dir));

  CHECK(run_cli("definitely-not-a-command") == 2);
  CHECK(run_cli("train") == 2);                                  // missing --config
  CHECK(run_cli("prepare --config " + config.string()) == 0);
  CHECK(run_cli("train --config " + config.string()) == 0);
  CHECK(run_cli("train --config " + config.string() + " --strategy bogus") == 2);
  CHECK(run_cli("train --config " + dir.string() + "/missing.json") == 2);
  CHECK(run_cli("ablate --config " + config.string() + " --axis bogus") == 2);
  CHECK(run_cli("report --runs " + dir.string() + "/nope --out " + dir.string() + "/rep") == 2);
}

TEST_SUITE_END();
