#include "cladnet/dataio.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

namespace cladnet {

namespace fs = std::filesystem;

std::string to_string(DatasetKind kind) {
  switch (kind) {
    case DatasetKind::kSynthetic: return "synthetic";
    case DatasetKind::kPamap2: return "pamap2";
    case DatasetKind::kDsa: return "dsa";
  }
  return "?";
}

DatasetKind dataset_kind_from_string(const std::string& s) {
  if (s == "synthetic") return DatasetKind::kSynthetic;
  if (s == "pamap2") return DatasetKind::kPamap2;
  if (s == "dsa") return DatasetKind::kDsa;
  throw DataError("unknown dataset kind '" + s + "'");
}

std::size_t DatasetConfig::window_len() const {
  const double exact = window_seconds * rate_hz;
  const auto len = static_cast<std::size_t>(std::llround(exact));
  if (len == 0 || std::abs(exact - static_cast<double>(len)) > 1e-9) {
    throw DataError("window_seconds * rate_hz must be a positive integer, got " +
                    std::to_string(exact));
  }
  return len;
}

std::size_t DatasetConfig::num_classes() const {
  if (kind == DatasetKind::kSynthetic) return synthetic.classes;
  std::set<int> classes;
  for (const auto& [raw, cls] : activity_map) classes.insert(cls);
  return classes.size();
}

void DatasetConfig::validate() const {
  if (overlap < 0.0 || overlap >= 1.0) throw DataError("overlap fraction must be in [0, 1)");
  if (train_fraction <= 0.0 || train_fraction >= 1.0)
    throw DataError("train_fraction must be in (0, 1)");
  window_len();
  if (kind != DatasetKind::kSynthetic) {
    if (channels.empty()) throw DataError("channel map is empty");
    if (activity_map.empty()) throw DataError("activity map is empty");
    for (const auto& [raw, cls] : activity_map) {
      if (cls < 0 || static_cast<std::size_t>(cls) >= num_classes())
        throw DataError("activity map classes must be contiguous from 0");
    }
  }
  if (!parts.empty()) {
    std::set<std::string> seen;
    bool query_found = false;
    for (const auto& [name, members] : parts) {
      if (name == query_part) query_found = true;
      for (const auto& ch : members) {
        if (!seen.insert(ch).second) throw DataError("channel '" + ch + "' listed in two parts");
      }
    }
    if (!query_found) throw DataError("query part '" + query_part + "' is not a configured part");
  }
}

namespace {

double parse_double_token(const std::string& token, const std::string& file, std::size_t line) {
  if (token == "NaN" || token == "nan" || token == "NA") {
    return std::numeric_limits<double>::quiet_NaN();
  }
  try {
    std::size_t pos = 0;
    const double v = std::stod(token, &pos);
    if (pos != token.size()) throw std::invalid_argument(token);
    return v;
  } catch (const std::exception&) {
    throw ParseError(file, line, "not a number: '" + token + "'");
  }
}

std::vector<std::string> split_tokens(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string token;
  if (sep == ' ') {
    std::istringstream is(line);
    while (is >> token) out.push_back(token);
  } else {
    std::istringstream is(line);
    while (std::getline(is, token, sep)) {
      // trim spaces
      std::size_t b = token.find_first_not_of(" \t\r");
      std::size_t e = token.find_last_not_of(" \t\r");
      out.push_back(b == std::string::npos ? "" : token.substr(b, e - b + 1));
    }
  }
  return out;
}

int digits_in_name(const std::string& name) {
  std::string digits;
  for (char c : name) {
    if (std::isdigit(static_cast<unsigned char>(c))) digits += c;
  }
  return digits.empty() ? -1 : std::stoi(digits);
}

std::shared_ptr<const std::vector<std::string>> channel_name_list(const DatasetConfig& cfg) {
  auto names = std::make_shared<std::vector<std::string>>();
  for (const auto& ch : cfg.channels) names->push_back(ch.name);
  return names;
}

}  // namespace

ParsedDataset parse_pamap2(const fs::path& root, const DatasetConfig& cfg) {
  if (!fs::exists(root)) throw ParseError("dataset root does not exist: " + root.string());
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(root)) {
    if (entry.is_regular_file() && entry.path().extension() == ".dat") {
      files.push_back(entry.path());
    }
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw ParseError("no subject .dat files under " + root.string());

  std::size_t max_col = 1;  // activity id column
  for (const auto& ch : cfg.channels) max_col = std::max(max_col, ch.column);

  auto names = channel_name_list(cfg);
  ParsedDataset out;
  for (const auto& file : files) {
    SubjectRaw subject;
    subject.subject = digits_in_name(file.stem().string());
    subject.channels = cfg.channels.size();
    subject.channel_names = names;

    std::ifstream is(file);
    if (!is) throw ParseError("cannot open " + file.string());
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(is, line)) {
      ++line_no;
      if (line.empty()) continue;
      const auto tokens = split_tokens(line, ' ');
      if (tokens.empty()) continue;
      if (tokens.size() <= max_col) {
        throw ParseError(file.string(), line_no,
                         "row has " + std::to_string(tokens.size()) + " columns, need at least " +
                             std::to_string(max_col + 1));
      }
      const double activity_raw = parse_double_token(tokens[1], file.string(), line_no);
      const int activity = static_cast<int>(activity_raw);
      const auto mapped = cfg.activity_map.find(activity);
      if (mapped == cfg.activity_map.end()) {
        ++subject.rows_dropped;
        continue;
      }
      std::vector<double> row(cfg.channels.size());
      bool has_nan = false;
      for (std::size_t i = 0; i < cfg.channels.size(); ++i) {
        row[i] = parse_double_token(tokens[cfg.channels[i].column], file.string(), line_no);
        if (!std::isfinite(row[i])) has_nan = true;
      }
      if (has_nan) {
        ++subject.rows_dropped;
        continue;
      }
      subject.samples.insert(subject.samples.end(), row.begin(), row.end());
      subject.labels.push_back(mapped->second);
    }
    if (subject.labels.empty()) {
      out.warnings.push_back("subject file " + file.string() + " produced no valid rows");
    }
    out.rows_dropped += subject.rows_dropped;
    out.subjects.push_back(std::move(subject));
  }
  return out;
}

ParsedDataset parse_dsa(const fs::path& root, const DatasetConfig& cfg) {
  if (!fs::exists(root)) throw ParseError("dataset root does not exist: " + root.string());
  std::vector<fs::path> activity_dirs;
  for (const auto& entry : fs::directory_iterator(root)) {
    if (entry.is_directory()) activity_dirs.push_back(entry.path());
  }
  std::sort(activity_dirs.begin(), activity_dirs.end());
  if (activity_dirs.empty()) throw ParseError("no activity directories under " + root.string());

  std::size_t max_col = 0;
  for (const auto& ch : cfg.channels) max_col = std::max(max_col, ch.column);

  auto names = channel_name_list(cfg);
  ParsedDataset out;
  std::map<int, SubjectRaw> subjects;
  std::optional<std::size_t> column_count;

  for (const auto& activity_dir : activity_dirs) {
    const int raw_activity = digits_in_name(activity_dir.filename().string());
    const auto mapped = cfg.activity_map.find(raw_activity);
    if (mapped == cfg.activity_map.end()) {
      out.warnings.push_back("activity directory " + activity_dir.string() +
                             " not in activity map, skipped");
      continue;
    }
    const int label = mapped->second;

    std::vector<fs::path> subject_dirs;
    for (const auto& entry : fs::directory_iterator(activity_dir)) {
      if (entry.is_directory()) subject_dirs.push_back(entry.path());
    }
    std::sort(subject_dirs.begin(), subject_dirs.end());
    if (subject_dirs.empty()) {
      out.warnings.push_back("activity directory " + activity_dir.string() + " is empty");
      continue;
    }

    for (const auto& subject_dir : subject_dirs) {
      const int subject_id = digits_in_name(subject_dir.filename().string());
      SubjectRaw& subject = subjects[subject_id];
      if (subject.channel_names == nullptr) {
        subject.subject = subject_id;
        subject.channels = cfg.channels.size();
        subject.channel_names = names;
      }

      std::vector<fs::path> segment_files;
      for (const auto& entry : fs::directory_iterator(subject_dir)) {
        if (entry.is_regular_file()) segment_files.push_back(entry.path());
      }
      std::sort(segment_files.begin(), segment_files.end());

      for (const auto& seg : segment_files) {
        std::ifstream is(seg);
        if (!is) throw ParseError("cannot open " + seg.string());
        std::string line;
        std::size_t line_no = 0;
        while (std::getline(is, line)) {
          ++line_no;
          if (line.empty()) continue;
          const auto tokens = split_tokens(line, ',');
          if (!column_count) column_count = tokens.size();
          if (tokens.size() != *column_count) {
            throw ParseError(seg.string(), line_no,
                             "inconsistent column count " + std::to_string(tokens.size()) +
                                 ", expected " + std::to_string(*column_count));
          }
          if (tokens.size() <= max_col) {
            throw ParseError(seg.string(), line_no,
                             "row has " + std::to_string(tokens.size()) +
                                 " columns, need at least " + std::to_string(max_col + 1));
          }
          std::vector<double> row(cfg.channels.size());
          bool has_nan = false;
          for (std::size_t i = 0; i < cfg.channels.size(); ++i) {
            row[i] = parse_double_token(tokens[cfg.channels[i].column], seg.string(), line_no);
            if (!std::isfinite(row[i])) has_nan = true;
          }
          if (has_nan) {
            ++subject.rows_dropped;
            continue;
          }
          subject.samples.insert(subject.samples.end(), row.begin(), row.end());
          subject.labels.push_back(label);
        }
      }
    }
  }

  for (auto& [id, subject] : subjects) {
    out.rows_dropped += subject.rows_dropped;
    out.subjects.push_back(std::move(subject));
  }
  return out;
}

ParsedDataset generate_synthetic(const DatasetConfig& cfg) {
  const SyntheticSpec& spec = cfg.synthetic;
  if (spec.classes < 2) throw DataError("synthetic generator needs at least 2 classes");
  if (spec.channels == 0) throw DataError("synthetic generator needs at least 1 channel");

  auto names = std::make_shared<std::vector<std::string>>();
  for (std::size_t c = 0; c < spec.channels; ++c) names->push_back("ch" + std::to_string(c));

  std::mt19937_64 class_rng(cfg.seed * 7919 + 17);
  std::uniform_real_distribution<double> amp_dist(0.4, 1.6);
  std::uniform_real_distribution<double> phase_dist(0.0, 2.0 * 3.14159265358979323846);
  // Class signatures are shared across subjects. Every class draws on the
  // same global frequency set; what distinguishes classes is which channel
  // carries which frequency, so the discriminative signal lives in the
  // cross-channel pattern that the per-subject mixing then remaps.
  std::vector<std::vector<double>> amp(spec.classes, std::vector<double>(spec.channels));
  std::vector<std::vector<double>> phase(spec.classes, std::vector<double>(spec.channels));
  std::vector<std::vector<double>> freq(spec.classes, std::vector<double>(spec.channels));
  for (std::size_t c = 0; c < spec.classes; ++c) {
    for (std::size_t k = 0; k < spec.channels; ++k) {
      amp[c][k] = amp_dist(class_rng);
      phase[c][k] = phase_dist(class_rng);
      freq[c][k] = spec.base_freq_hz * static_cast<double>(1 + (c + k) % spec.classes);
    }
  }

  ParsedDataset out;
  for (std::size_t s = 0; s < spec.subjects; ++s) {
    std::mt19937_64 rng(cfg.seed * 1000003 + s * 104729 + 5);
    // Per-subject observation model: a chain of Givens rotations (the
    // channel-mixing affine map) followed by gain and offset.
    std::vector<std::pair<std::pair<std::size_t, std::size_t>, double>> rotations;
    std::uniform_real_distribution<double> angle_dist(0.5, 1.0);
    auto draw_angle = [&]() {
      return spec.mix_strength * angle_dist(rng) * (rng() % 2 == 0 ? 1.0 : -1.0);
    };
    for (std::size_t r = 0; r + 1 < spec.channels; ++r) {
      rotations.push_back({{r, r + 1}, draw_angle()});
    }
    const std::size_t half = spec.channels / 2;
    for (std::size_t r = 0; r + half < spec.channels && half > 0; ++r) {
      rotations.push_back({{r, r + half}, draw_angle()});
    }
    std::uniform_real_distribution<double> gain_dist(spec.gain_min, spec.gain_max);
    std::uniform_real_distribution<double> offset_dist(-spec.offset_scale, spec.offset_scale);
    std::vector<double> gain(spec.channels), offset(spec.channels);
    for (std::size_t k = 0; k < spec.channels; ++k) {
      gain[k] = gain_dist(rng);
      offset[k] = offset_dist(rng);
    }
    std::normal_distribution<double> noise(0.0, spec.noise_sigma);

    // Segment order: every class repeated, shuffled per subject.
    std::vector<int> segment_classes;
    for (std::size_t rep = 0; rep < spec.segments_per_class; ++rep)
      for (std::size_t c = 0; c < spec.classes; ++c)
        segment_classes.push_back(static_cast<int>(c));
    std::shuffle(segment_classes.begin(), segment_classes.end(), rng);

    SubjectRaw subject;
    subject.subject = static_cast<int>(s + 1);
    subject.channels = spec.channels;
    subject.channel_names = names;

    std::size_t t_global = 0;
    for (int cls : segment_classes) {
      for (std::size_t t = 0; t < spec.segment_len; ++t, ++t_global) {
        const double time = static_cast<double>(t_global) / cfg.rate_hz;
        std::vector<double> x(spec.channels);
        for (std::size_t k = 0; k < spec.channels; ++k) {
          const double w = 2.0 * 3.14159265358979323846 * freq[cls][k] * time + phase[cls][k];
          x[k] = amp[cls][k] * std::sin(w);
        }
        for (const auto& [pair, angle] : rotations) {
          const double ca = std::cos(angle), sa = std::sin(angle);
          const double a = x[pair.first], b = x[pair.second];
          x[pair.first] = ca * a - sa * b;
          x[pair.second] = sa * a + ca * b;
        }
        for (std::size_t k = 0; k < spec.channels; ++k) {
          subject.samples.push_back(gain[k] * x[k] + offset[k] + noise(rng));
        }
        subject.labels.push_back(cls);
      }
    }
    out.subjects.push_back(std::move(subject));
  }
  return out;
}

ParsedDataset load_dataset(const DatasetConfig& cfg) {
  switch (cfg.kind) {
    case DatasetKind::kSynthetic: return generate_synthetic(cfg);
    case DatasetKind::kPamap2: return parse_pamap2(cfg.root, cfg);
    case DatasetKind::kDsa: return parse_dsa(cfg.root, cfg);
  }
  throw DataError("unhandled dataset kind");
}

std::vector<SensorWindow> segment_windows(const SubjectRaw& stream, std::size_t window_len,
                                          double overlap) {
  if (window_len == 0) throw DataError("window_len must be >= 1");
  if (overlap < 0.0 || overlap >= 1.0) throw DataError("overlap fraction must be in [0, 1)");
  const auto stride =
      static_cast<std::size_t>(std::llround(static_cast<double>(window_len) * (1.0 - overlap)));
  if (stride == 0) throw DataError("window stride rounds to zero; lower the overlap");

  std::vector<SensorWindow> out;
  const std::size_t n = stream.count();
  if (n < window_len) return out;
  const std::size_t count = (n - window_len) / stride + 1;
  out.reserve(count);

  for (std::size_t w = 0; w < count; ++w) {
    const std::size_t start = w * stride;
    SensorWindow win;
    win.subject = stream.subject;
    win.channel_names = stream.channel_names;
    Tensor data({window_len, stream.channels});
    std::map<int, std::size_t> votes;
    for (std::size_t t = 0; t < window_len; ++t) {
      for (std::size_t k = 0; k < stream.channels; ++k) {
        data(t, k) = stream.sample(start + t, k);
      }
      const int label = stream.labels[start + t];
      if (label >= 0) ++votes[label];
    }
    win.data = std::move(data);
    if (!votes.empty()) {
      // majority label; ties resolve to the smallest id (map order)
      auto best = votes.begin();
      for (auto it = votes.begin(); it != votes.end(); ++it) {
        if (it->second > best->second) best = it;
      }
      win.label = best->first;
    }
    out.push_back(std::move(win));
  }
  return out;
}

std::pair<std::vector<SensorWindow>, std::vector<SensorWindow>> split_train_test(
    std::vector<SensorWindow> windows, double train_fraction, std::uint64_t seed) {
  if (train_fraction <= 0.0 || train_fraction >= 1.0)
    throw DataError("train_fraction must be in (0, 1)");
  if (windows.size() < 2) throw DataError("need at least 2 windows to split");

  std::vector<std::size_t> order(windows.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);

  auto n_train = static_cast<std::size_t>(
      std::llround(train_fraction * static_cast<double>(windows.size())));
  n_train = std::clamp<std::size_t>(n_train, 1, windows.size() - 1);

  std::pair<std::vector<SensorWindow>, std::vector<SensorWindow>> out;
  out.first.reserve(n_train);
  out.second.reserve(windows.size() - n_train);
  for (std::size_t i = 0; i < order.size(); ++i) {
    if (i < n_train) {
      out.first.push_back(std::move(windows[order[i]]));
    } else {
      out.second.push_back(std::move(windows[order[i]]));
    }
  }
  return out;
}

void standardize_per_subject(std::vector<SubjectData>& subjects) {
  for (auto& subject : subjects) {
    if (subject.train.empty()) continue;
    const std::size_t d = subject.train.front().data.cols();
    std::vector<double> mean(d, 0.0), var(d, 0.0);
    std::size_t n = 0;
    for (const auto& w : subject.train) {
      const std::size_t len = w.data.rows();
      for (std::size_t t = 0; t < len; ++t)
        for (std::size_t k = 0; k < d; ++k) mean[k] += w.data(t, k);
      n += len;
    }
    for (auto& m : mean) m /= static_cast<double>(n);
    for (const auto& w : subject.train) {
      for (std::size_t t = 0; t < w.data.rows(); ++t)
        for (std::size_t k = 0; k < d; ++k) {
          const double dv = w.data(t, k) - mean[k];
          var[k] += dv * dv;
        }
    }
    std::vector<double> stddev(d);
    std::vector<double> scale(d);
    for (std::size_t k = 0; k < d; ++k) {
      stddev[k] = std::sqrt(var[k] / static_cast<double>(n));
      scale[k] = stddev[k] < 1e-12 ? 0.0 : 1.0 / stddev[k];
    }
    auto apply = [&](std::vector<SensorWindow>& windows) {
      for (auto& w : windows) {
        for (std::size_t t = 0; t < w.data.rows(); ++t)
          for (std::size_t k = 0; k < d; ++k)
            w.data(t, k) = (w.data(t, k) - mean[k]) * scale[k];
      }
    };
    apply(subject.train);
    apply(subject.test);
    subject.channel_mean = std::move(mean);
    subject.channel_std = std::move(stddev);
  }
}

void mask_labels(std::vector<SensorWindow>& windows, double phi, std::uint64_t seed) {
  if (phi <= 0.0 || phi > 1.0) throw DataError("phi must be in (0, 1]");
  if (phi == 1.0) return;

  std::map<int, std::vector<std::size_t>> by_subject;
  for (std::size_t i = 0; i < windows.size(); ++i) {
    if (windows[i].label) by_subject[windows[i].subject].push_back(i);
  }

  std::mt19937_64 rng(seed);
  for (auto& [subject, indices] : by_subject) {
    const std::size_t total = indices.size();
    auto target = static_cast<std::size_t>(std::llround(phi * static_cast<double>(total)));

    std::map<int, std::vector<std::size_t>> by_class;
    for (std::size_t idx : indices) by_class[*windows[idx].label].push_back(idx);

    // Largest-remainder apportionment of `target` across classes, then a
    // floor of one labeled window per present class where possible.
    std::vector<std::pair<int, std::size_t>> quota;  // class -> keep count
    std::vector<std::pair<double, int>> remainders;
    std::size_t assigned = 0;
    for (const auto& [cls, members] : by_class) {
      const double ideal = phi * static_cast<double>(members.size());
      const auto q = static_cast<std::size_t>(ideal);
      quota.push_back({cls, std::min(q, members.size())});
      assigned += quota.back().second;
      remainders.push_back({ideal - static_cast<double>(q), cls});
    }
    std::sort(remainders.begin(), remainders.end(), [](const auto& a, const auto& b) {
      if (a.first != b.first) return a.first > b.first;
      return a.second < b.second;
    });
    for (const auto& [rem, cls] : remainders) {
      if (assigned >= target) break;
      for (auto& [qcls, q] : quota) {
        if (qcls == cls && q < by_class[cls].size()) {
          ++q;
          ++assigned;
          break;
        }
      }
    }
    // Enforce the per-class floor, stealing from the largest quota when the
    // target budget is already spent.
    for (auto& [cls, q] : quota) {
      if (q > 0) continue;
      q = 1;
      ++assigned;
      if (assigned > target) {
        auto largest = quota.end();
        for (auto it = quota.begin(); it != quota.end(); ++it) {
          if (it->second > 1 && (largest == quota.end() || it->second > largest->second))
            largest = it;
        }
        if (largest != quota.end()) {
          --largest->second;
          --assigned;
        }
      }
    }

    for (const auto& [cls, keep] : quota) {
      auto& members = by_class[cls];
      std::shuffle(members.begin(), members.end(), rng);
      for (std::size_t i = keep; i < members.size(); ++i) {
        windows[members[i]].label.reset();
      }
    }
  }
}

std::pair<std::vector<SubjectData>, ParsedDataset> prepare_subjects(const DatasetConfig& cfg) {
  cfg.validate();
  ParsedDataset parsed = load_dataset(cfg);
  std::vector<SubjectData> subjects;
  const std::size_t wl = cfg.window_len();
  for (const auto& raw : parsed.subjects) {
    SubjectData sd;
    sd.subject_id = raw.subject;
    auto windows = segment_windows(raw, wl, cfg.overlap);
    if (windows.size() < 2) {
      parsed.warnings.push_back("subject " + std::to_string(raw.subject) +
                                " has fewer than 2 windows, skipped");
      continue;
    }
    auto [train, test] = split_train_test(
        std::move(windows), cfg.train_fraction,
        cfg.seed * 2654435761u + static_cast<std::uint64_t>(raw.subject));
    sd.train = std::move(train);
    sd.test = std::move(test);
    subjects.push_back(std::move(sd));
  }
  std::sort(subjects.begin(), subjects.end(),
            [](const SubjectData& a, const SubjectData& b) { return a.subject_id < b.subject_id; });
  standardize_per_subject(subjects);
  return {std::move(subjects), std::move(parsed)};
}

}  // namespace cladnet
