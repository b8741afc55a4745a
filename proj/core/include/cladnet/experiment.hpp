#pragma once

#include <filesystem>
#include <optional>

#include "cladnet/continual.hpp"

namespace cladnet {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct RunBlock {
  std::size_t epochs = 50;
  std::size_t batch_size = 32;
  double lr = 1e-3;
  std::vector<std::uint64_t> seeds = {1};
  std::filesystem::path out_dir = "runs/out";
  double phi = 1.0;  // labeled fraction kept for supervised training
  std::filesystem::path cache = "cache/prepared.bin";
  std::vector<int> subject_order;  // empty = ascending subject id
};

struct ExperimentConfig {
  DatasetConfig dataset;
  TransformerConfig transformer;
  CnnConfig cnn;
  SslConfig ssl;
  StrategyConfig strategy;
  RunBlock run;
};

ExperimentConfig default_config();
ExperimentConfig config_from_json_text(const std::string& text, const std::string& origin);
ExperimentConfig load_config(const std::filesystem::path& path);
std::string config_to_json_text(const ExperimentConfig& cfg);  // fully resolved echo

// ---------------------------------------------------------------------------
// Prepared-window cache: versioned binary, deterministic bytes.

struct WindowCache {
  std::size_t classes = 0;
  std::size_t window_len = 0;
  std::size_t channels = 0;
  std::vector<std::string> channel_names;
  BodyPartition partition;
  std::vector<SubjectData> subjects;
};

void save_cache(const std::filesystem::path& path, const WindowCache& cache);
WindowCache load_cache(const std::filesystem::path& path);
std::uint64_t file_checksum(const std::filesystem::path& path);

// Builds the body partition over the configured channel order; an empty
// parts list yields a single group over all channels.
BodyPartition build_partition(const DatasetConfig& cfg,
                              const std::vector<std::string>& channel_names);

// ---------------------------------------------------------------------------
// Result files. Every CSV starts with a format-version comment line.

struct ResultRow {
  std::string strategy;
  std::uint64_t seed = 0;
  std::size_t t = 0;        // subject position, 1-based
  std::size_t t_prime = 0;  // trained-through position, 1-based
  double accuracy = 0.0;
};

struct SummaryRow {
  std::string strategy;
  std::uint64_t seed = 0;
  double fa = 0.0;
  double fm = 0.0;
  double la = 0.0;
};

void write_results_csv(const std::filesystem::path& path, const std::vector<ResultRow>& rows);
void write_summary_csv(const std::filesystem::path& path, const std::vector<SummaryRow>& rows);
std::vector<ResultRow> read_results_csv(const std::filesystem::path& path);
std::vector<SummaryRow> read_summary_csv(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Command implementations behind the CLI. Errors surface as exceptions:
// ConfigError for usage/validation problems, anything else is a runtime
// failure.

struct PrepareOptions {
  std::filesystem::path config;
  std::optional<std::string> dataset_override;
  std::optional<std::filesystem::path> root_override;
  std::optional<std::filesystem::path> out_override;  // cache directory
};

struct TrainOptions {
  std::filesystem::path config;
  std::optional<std::string> strategy_override;
  std::optional<std::uint64_t> seed_override;
  std::optional<std::filesystem::path> out_override;
  std::optional<std::filesystem::path> cache_override;
  std::optional<double> phi_override;
};

struct AblateOptions {
  std::filesystem::path config;
  std::string axis;
  std::optional<std::filesystem::path> out_override;
  std::optional<std::filesystem::path> cache_override;
};

struct ReportOptions {
  std::filesystem::path runs_dir;
  std::filesystem::path out_dir;
};

void run_prepare(const PrepareOptions& options);
void run_train(const TrainOptions& options);
void run_ablate(const AblateOptions& options);
void run_report(const ReportOptions& options);

// Shared by run_train and the ablation driver: executes every seed of the
// config against the cache and returns the result/summary rows.
struct TrainOutput {
  std::vector<ResultRow> results;
  std::vector<SummaryRow> summary;
};
TrainOutput execute_training(const ExperimentConfig& cfg, const WindowCache& cache,
                             const std::filesystem::path& out_dir, bool write_checkpoints = true);

}  // namespace cladnet
