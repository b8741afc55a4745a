#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "cladnet/tensor.hpp"

namespace cladnet {

class ParseError : public std::runtime_error {
 public:
  ParseError(std::string file, std::size_t line, const std::string& message)
      : std::runtime_error(file + ":" + std::to_string(line) + ": " + message),
        file_(std::move(file)),
        line_(line) {}
  explicit ParseError(const std::string& message) : std::runtime_error(message), line_(0) {}

  const std::string& file() const { return file_; }
  std::size_t line() const { return line_; }

 private:
  std::string file_;
  std::size_t line_;
};

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class DatasetKind { kSynthetic, kPamap2, kDsa };

std::string to_string(DatasetKind kind);
DatasetKind dataset_kind_from_string(const std::string& s);

struct ChannelSpec {
  std::string name;
  std::size_t column = 0;
};

// Parameterized source of subject streams with a controllable domain shift:
// every subject observes the same per-class signal signatures through its own
// channel mixing, gain and offset.
struct SyntheticSpec {
  std::size_t subjects = 4;
  std::size_t classes = 3;
  std::size_t channels = 6;
  std::size_t segment_len = 208;       // samples per contiguous activity run
  std::size_t segments_per_class = 8;  // runs per class per subject
  double base_freq_hz = 1.0;           // class c oscillates at base * (c + 1)
  double mix_strength = 0.8;           // cross-channel rotation per subject
  double offset_scale = 0.6;           // per-subject per-channel DC offset
  double gain_min = 0.9;
  double gain_max = 1.1;
  double noise_sigma = 0.1;
};

struct DatasetConfig {
  DatasetKind kind = DatasetKind::kSynthetic;
  std::filesystem::path root;
  double rate_hz = 100.0;
  double window_seconds = 2.0;
  double overlap = 0.5;  // fraction in [0, 1)
  std::vector<ChannelSpec> channels;
  // Ordered part -> channel-name grouping; order defines branch order.
  std::vector<std::pair<std::string, std::vector<std::string>>> parts;
  std::string query_part = "hand";
  std::map<int, int> activity_map;  // raw activity id -> class index
  double train_fraction = 0.8;
  std::uint64_t seed = 1;
  SyntheticSpec synthetic;

  std::size_t window_len() const;
  std::size_t num_classes() const;
  void validate() const;
};

struct SensorWindow {
  Tensor data;  // [len x channels]
  int subject = 0;
  std::optional<int> label;
  std::shared_ptr<const std::vector<std::string>> channel_names;
};

// Raw per-subject sample stream before windowing. Samples are row-major
// [count x channels]; labels align with rows, -1 meaning unlabeled.
struct SubjectRaw {
  int subject = 0;
  std::size_t channels = 0;
  std::vector<double> samples;
  std::vector<int> labels;
  std::shared_ptr<const std::vector<std::string>> channel_names;
  std::size_t rows_dropped = 0;

  std::size_t count() const { return channels == 0 ? 0 : samples.size() / channels; }
  double sample(std::size_t row, std::size_t ch) const { return samples[row * channels + ch]; }
};

struct ParsedDataset {
  std::vector<SubjectRaw> subjects;
  std::vector<std::string> warnings;
  std::size_t rows_dropped = 0;
};

// Windowed, split view of one subject; standardize_per_subject fills the
// per-channel statistics from the training side only.
struct SubjectData {
  int subject_id = 0;
  std::vector<SensorWindow> train;
  std::vector<SensorWindow> test;
  std::vector<double> channel_mean;
  std::vector<double> channel_std;
};

ParsedDataset parse_pamap2(const std::filesystem::path& root, const DatasetConfig& cfg);
ParsedDataset parse_dsa(const std::filesystem::path& root, const DatasetConfig& cfg);
ParsedDataset generate_synthetic(const DatasetConfig& cfg);

// Dispatches on cfg.kind.
ParsedDataset load_dataset(const DatasetConfig& cfg);

// Majority-label sliding windows. Window count for n samples is
// floor((n - window_len) / stride) + 1 with stride = round(window_len * (1 - overlap)).
std::vector<SensorWindow> segment_windows(const SubjectRaw& stream, std::size_t window_len,
                                          double overlap);

std::pair<std::vector<SensorWindow>, std::vector<SensorWindow>> split_train_test(
    std::vector<SensorWindow> windows, double train_fraction, std::uint64_t seed);

// Fits per-channel mean/std on each subject's training windows and applies
// the transform to both splits. Zero-variance channels map to zeros.
void standardize_per_subject(std::vector<SubjectData>& subjects);

// Removes labels so that round(phi * count) windows stay labeled, allocated
// per class by largest remainder with a floor of one window per present
// class. Windows are grouped by subject internally.
void mask_labels(std::vector<SensorWindow>& windows, double phi, std::uint64_t seed);

// Full pipeline: parse -> window -> split -> standardize.
std::pair<std::vector<SubjectData>, ParsedDataset> prepare_subjects(const DatasetConfig& cfg);

}  // namespace cladnet
