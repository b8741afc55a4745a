#include "cladnet/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

namespace cladnet {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

constexpr const char* kCsvVersionLine = "# cladnet-csv v1";
constexpr char kCacheMagic[8] = {'C', 'L', 'A', 'D', 'W', 'I', 'N', '1'};
constexpr std::uint32_t kCacheVersion = 1;

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

void reject_unknown_keys(const json& obj, const std::set<std::string>& allowed,
                         const std::string& where) {
  for (const auto& [key, value] : obj.items()) {
    if (!allowed.count(key)) {
      throw ConfigError("unknown key '" + key + "' in " + where);
    }
  }
}

template <typename T>
void read_field(const json& obj, const char* key, T& out) {
  if (obj.contains(key)) out = obj.at(key).get<T>();
}

}  // namespace

ExperimentConfig default_config() {
  ExperimentConfig cfg;
  cfg.dataset.kind = DatasetKind::kSynthetic;
  cfg.dataset.rate_hz = 25.0;
  cfg.dataset.window_seconds = 1.28;  // 32 samples at 25 Hz
  cfg.ssl.augment.kind = AugmentKind::kCropResize;
  return cfg;
}

namespace {

DatasetConfig dataset_from_json(const json& j) {
  DatasetConfig d = default_config().dataset;
  reject_unknown_keys(j, {"kind", "root", "rate_hz", "window_seconds", "overlap",
                          "train_fraction", "seed", "channels", "parts", "query_part",
                          "activity_map", "synthetic"},
                      "dataset");
  if (j.contains("kind")) d.kind = dataset_kind_from_string(j.at("kind").get<std::string>());
  if (j.contains("root")) d.root = j.at("root").get<std::string>();
  read_field(j, "rate_hz", d.rate_hz);
  read_field(j, "window_seconds", d.window_seconds);
  read_field(j, "overlap", d.overlap);
  read_field(j, "train_fraction", d.train_fraction);
  read_field(j, "seed", d.seed);
  if (j.contains("channels")) {
    d.channels.clear();
    for (const auto& ch : j.at("channels")) {
      reject_unknown_keys(ch, {"name", "column"}, "dataset.channels[]");
      d.channels.push_back({ch.at("name").get<std::string>(), ch.at("column").get<std::size_t>()});
    }
  }
  if (j.contains("parts")) {
    d.parts.clear();
    for (const auto& part : j.at("parts")) {
      reject_unknown_keys(part, {"name", "channels"}, "dataset.parts[]");
      d.parts.push_back({part.at("name").get<std::string>(),
                         part.at("channels").get<std::vector<std::string>>()});
    }
  }
  read_field(j, "query_part", d.query_part);
  if (j.contains("activity_map")) {
    d.activity_map.clear();
    for (const auto& [key, value] : j.at("activity_map").items()) {
      d.activity_map[std::stoi(key)] = value.get<int>();
    }
  }
  if (j.contains("synthetic")) {
    const json& s = j.at("synthetic");
    reject_unknown_keys(s, {"subjects", "classes", "channels", "segment_len",
                            "segments_per_class", "base_freq_hz", "mix_strength", "offset_scale",
                            "gain_min", "gain_max", "noise_sigma"},
                        "dataset.synthetic");
    read_field(s, "subjects", d.synthetic.subjects);
    read_field(s, "classes", d.synthetic.classes);
    read_field(s, "channels", d.synthetic.channels);
    read_field(s, "segment_len", d.synthetic.segment_len);
    read_field(s, "segments_per_class", d.synthetic.segments_per_class);
    read_field(s, "base_freq_hz", d.synthetic.base_freq_hz);
    read_field(s, "mix_strength", d.synthetic.mix_strength);
    read_field(s, "offset_scale", d.synthetic.offset_scale);
    read_field(s, "gain_min", d.synthetic.gain_min);
    read_field(s, "gain_max", d.synthetic.gain_max);
    read_field(s, "noise_sigma", d.synthetic.noise_sigma);
  }
  return d;
}

void model_from_json(const json& j, TransformerConfig& t, CnnConfig& c) {
  reject_unknown_keys(j, {"d_model", "heads", "ff_hidden", "dropout", "attention",
                          "layer_norm_eps", "cnn"},
                      "model");
  read_field(j, "d_model", t.d_model);
  read_field(j, "heads", t.heads);
  read_field(j, "ff_hidden", t.ff_hidden);
  read_field(j, "dropout", t.dropout);
  if (j.contains("attention"))
    t.attention = attention_kind_from_string(j.at("attention").get<std::string>());
  read_field(j, "layer_norm_eps", t.layer_norm_eps);
  if (j.contains("cnn")) {
    const json& cj = j.at("cnn");
    reject_unknown_keys(cj, {"kernel", "widths", "convs_per_block", "pool_window", "pool_stride"},
                        "model.cnn");
    read_field(cj, "kernel", c.kernel);
    if (cj.contains("widths")) c.widths = cj.at("widths").get<std::vector<std::size_t>>();
    read_field(cj, "convs_per_block", c.convs_per_block);
    read_field(cj, "pool_window", c.pool_window);
    read_field(cj, "pool_stride", c.pool_stride);
    c.layer_norm_eps = t.layer_norm_eps;
  }
}

SslConfig ssl_from_json(const json& j) {
  SslConfig s;
  reject_unknown_keys(j, {"loss", "lambda_bt", "temperature", "momentum", "lr", "epochs",
                          "batch_size", "augment"},
                      "ssl");
  if (j.contains("loss")) s.loss = ssl_loss_from_string(j.at("loss").get<std::string>());
  read_field(j, "lambda_bt", s.lambda_bt);
  read_field(j, "temperature", s.temperature);
  read_field(j, "momentum", s.byol_momentum);
  read_field(j, "lr", s.lr);
  read_field(j, "epochs", s.epochs);
  read_field(j, "batch_size", s.batch_size);
  if (j.contains("augment")) {
    const json& a = j.at("augment");
    reject_unknown_keys(a, {"kind", "noise_sigma", "mask_fraction", "warp_knots",
                            "warp_strength"},
                        "ssl.augment");
    if (a.contains("kind"))
      s.augment.kind = augment_kind_from_string(a.at("kind").get<std::string>());
    read_field(a, "noise_sigma", s.augment.noise_sigma);
    read_field(a, "mask_fraction", s.augment.mask_fraction);
    read_field(a, "warp_knots", s.augment.warp_knots);
    read_field(a, "warp_strength", s.augment.warp_strength);
  }
  return s;
}

StrategyConfig strategy_from_json(const json& j) {
  StrategyConfig s;
  reject_unknown_keys(j, {"kind", "lambda_distill", "distill_mode", "lambda_ewc",
                          "fisher_batches", "er_capacity", "replay_fraction"},
                      "strategy");
  if (j.contains("kind")) s.kind = strategy_from_string(j.at("kind").get<std::string>());
  read_field(j, "lambda_distill", s.lambda_distill);
  if (j.contains("distill_mode"))
    s.distill_mode = distill_mode_from_string(j.at("distill_mode").get<std::string>());
  read_field(j, "lambda_ewc", s.lambda_ewc);
  read_field(j, "fisher_batches", s.fisher_batches);
  read_field(j, "er_capacity", s.er_capacity);
  read_field(j, "replay_fraction", s.replay_fraction);
  return s;
}

RunBlock run_from_json(const json& j) {
  RunBlock r;
  reject_unknown_keys(j, {"epochs", "batch_size", "lr", "seeds", "out_dir", "phi", "cache",
                          "subject_order"},
                      "run");
  read_field(j, "epochs", r.epochs);
  read_field(j, "batch_size", r.batch_size);
  read_field(j, "lr", r.lr);
  if (j.contains("seeds")) r.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
  if (j.contains("out_dir")) r.out_dir = j.at("out_dir").get<std::string>();
  read_field(j, "phi", r.phi);
  if (j.contains("cache")) r.cache = j.at("cache").get<std::string>();
  if (j.contains("subject_order"))
    r.subject_order = j.at("subject_order").get<std::vector<int>>();
  return r;
}

}  // namespace

ExperimentConfig config_from_json_text(const std::string& text, const std::string& origin) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(origin + ": invalid JSON: " + e.what());
  }
  try {
    reject_unknown_keys(j, {"dataset", "model", "ssl", "strategy", "run"}, origin);
    ExperimentConfig cfg = default_config();
    if (j.contains("dataset")) cfg.dataset = dataset_from_json(j.at("dataset"));
    if (j.contains("model")) model_from_json(j.at("model"), cfg.transformer, cfg.cnn);
    if (j.contains("ssl")) cfg.ssl = ssl_from_json(j.at("ssl"));
    if (j.contains("strategy")) cfg.strategy = strategy_from_json(j.at("strategy"));
    if (j.contains("run")) cfg.run = run_from_json(j.at("run"));
    if (cfg.run.phi <= 0.0 || cfg.run.phi > 1.0) throw ConfigError("run.phi must be in (0, 1]");
    if (cfg.run.seeds.empty()) throw ConfigError("run.seeds must not be empty");
    return cfg;
  } catch (const json::exception& e) {
    throw ConfigError(origin + ": " + e.what());
  } catch (const std::invalid_argument& e) {
    throw ConfigError(origin + ": " + e.what());
  } catch (const DataError& e) {
    throw ConfigError(origin + ": " + e.what());
  }
}

ExperimentConfig load_config(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config file: " + path.string());
  std::stringstream buf;
  buf << is.rdbuf();
  return config_from_json_text(buf.str(), path.string());
}

std::string config_to_json_text(const ExperimentConfig& cfg) {
  json j;
  json& d = j["dataset"];
  d["kind"] = to_string(cfg.dataset.kind);
  d["root"] = cfg.dataset.root.string();
  d["rate_hz"] = cfg.dataset.rate_hz;
  d["window_seconds"] = cfg.dataset.window_seconds;
  d["overlap"] = cfg.dataset.overlap;
  d["train_fraction"] = cfg.dataset.train_fraction;
  d["seed"] = cfg.dataset.seed;
  d["channels"] = json::array();
  for (const auto& ch : cfg.dataset.channels) {
    d["channels"].push_back({{"name", ch.name}, {"column", ch.column}});
  }
  d["parts"] = json::array();
  for (const auto& [name, members] : cfg.dataset.parts) {
    d["parts"].push_back({{"name", name}, {"channels", members}});
  }
  d["query_part"] = cfg.dataset.query_part;
  d["activity_map"] = json::object();
  for (const auto& [raw, cls] : cfg.dataset.activity_map) {
    d["activity_map"][std::to_string(raw)] = cls;
  }
  json& syn = d["synthetic"];
  syn["subjects"] = cfg.dataset.synthetic.subjects;
  syn["classes"] = cfg.dataset.synthetic.classes;
  syn["channels"] = cfg.dataset.synthetic.channels;
  syn["segment_len"] = cfg.dataset.synthetic.segment_len;
  syn["segments_per_class"] = cfg.dataset.synthetic.segments_per_class;
  syn["base_freq_hz"] = cfg.dataset.synthetic.base_freq_hz;
  syn["mix_strength"] = cfg.dataset.synthetic.mix_strength;
  syn["offset_scale"] = cfg.dataset.synthetic.offset_scale;
  syn["gain_min"] = cfg.dataset.synthetic.gain_min;
  syn["gain_max"] = cfg.dataset.synthetic.gain_max;
  syn["noise_sigma"] = cfg.dataset.synthetic.noise_sigma;

  json& m = j["model"];
  m["d_model"] = cfg.transformer.d_model;
  m["heads"] = cfg.transformer.heads;
  m["ff_hidden"] = cfg.transformer.ff_hidden;
  m["dropout"] = cfg.transformer.dropout;
  m["attention"] = to_string(cfg.transformer.attention);
  m["layer_norm_eps"] = cfg.transformer.layer_norm_eps;
  json& c = m["cnn"];
  c["kernel"] = cfg.cnn.kernel;
  c["widths"] = cfg.cnn.widths;
  c["convs_per_block"] = cfg.cnn.convs_per_block;
  c["pool_window"] = cfg.cnn.pool_window;
  c["pool_stride"] = cfg.cnn.pool_stride;

  json& s = j["ssl"];
  s["loss"] = to_string(cfg.ssl.loss);
  s["lambda_bt"] = cfg.ssl.lambda_bt;
  s["temperature"] = cfg.ssl.temperature;
  s["momentum"] = cfg.ssl.byol_momentum;
  s["lr"] = cfg.ssl.lr;
  s["epochs"] = cfg.ssl.epochs;
  s["batch_size"] = cfg.ssl.batch_size;
  json& a = s["augment"];
  a["kind"] = to_string(cfg.ssl.augment.kind);
  a["noise_sigma"] = cfg.ssl.augment.noise_sigma;
  a["mask_fraction"] = cfg.ssl.augment.mask_fraction;
  a["warp_knots"] = cfg.ssl.augment.warp_knots;
  a["warp_strength"] = cfg.ssl.augment.warp_strength;

  json& st = j["strategy"];
  st["kind"] = to_string(cfg.strategy.kind);
  st["lambda_distill"] = cfg.strategy.lambda_distill;
  st["distill_mode"] = to_string(cfg.strategy.distill_mode);
  st["lambda_ewc"] = cfg.strategy.lambda_ewc;
  st["fisher_batches"] = cfg.strategy.fisher_batches;
  st["er_capacity"] = cfg.strategy.er_capacity;
  st["replay_fraction"] = cfg.strategy.replay_fraction;

  json& r = j["run"];
  r["epochs"] = cfg.run.epochs;
  r["batch_size"] = cfg.run.batch_size;
  r["lr"] = cfg.run.lr;
  r["seeds"] = cfg.run.seeds;
  r["out_dir"] = cfg.run.out_dir.string();
  r["phi"] = cfg.run.phi;
  r["cache"] = cfg.run.cache.string();
  r["subject_order"] = cfg.run.subject_order;

  return j.dump(2) + "\n";
}

// ---------------------------------------------------------------------------
// cache io

namespace {

void write_u32(std::ostream& os, std::uint32_t v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
void write_u64(std::ostream& os, std::uint64_t v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
void write_i32(std::ostream& os, std::int32_t v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
void write_str(std::ostream& os, const std::string& s) {
  write_u32(os, static_cast<std::uint32_t>(s.size()));
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}
std::uint32_t read_u32(std::istream& is) {
  std::uint32_t v = 0;
  is.read(reinterpret_cast<char*>(&v), sizeof(v));
  return v;
}
std::uint64_t read_u64(std::istream& is) {
  std::uint64_t v = 0;
  is.read(reinterpret_cast<char*>(&v), sizeof(v));
  return v;
}
std::int32_t read_i32(std::istream& is) {
  std::int32_t v = 0;
  is.read(reinterpret_cast<char*>(&v), sizeof(v));
  return v;
}
std::string read_str(std::istream& is) {
  const std::uint32_t n = read_u32(is);
  std::string s(n, '\0');
  is.read(s.data(), n);
  return s;
}

void write_windows(std::ostream& os, const std::vector<SensorWindow>& windows) {
  write_u64(os, windows.size());
  for (const auto& w : windows) {
    write_i32(os, w.label ? *w.label : -1);
    os.write(reinterpret_cast<const char*>(w.data.data().data()),
             static_cast<std::streamsize>(w.data.numel() * sizeof(double)));
  }
}

std::vector<SensorWindow> read_windows(std::istream& is, std::size_t len, std::size_t channels,
                                       int subject,
                                       std::shared_ptr<const std::vector<std::string>> names) {
  const std::uint64_t count = read_u64(is);
  std::vector<SensorWindow> out;
  out.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    SensorWindow w;
    w.subject = subject;
    w.channel_names = names;
    const std::int32_t label = read_i32(is);
    if (label >= 0) w.label = label;
    Tensor data({len, channels});
    is.read(reinterpret_cast<char*>(data.values().data()),
            static_cast<std::streamsize>(data.numel() * sizeof(double)));
    w.data = std::move(data);
    out.push_back(std::move(w));
  }
  return out;
}

}  // namespace

void save_cache(const fs::path& path, const WindowCache& cache) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open cache for writing: " + path.string());
  os.write(kCacheMagic, sizeof(kCacheMagic));
  write_u32(os, kCacheVersion);
  write_u64(os, cache.classes);
  write_u64(os, cache.window_len);
  write_u64(os, cache.channels);
  write_u64(os, cache.channel_names.size());
  for (const auto& n : cache.channel_names) write_str(os, n);
  write_u64(os, cache.partition.groups.size());
  for (std::size_t i = 0; i < cache.partition.groups.size(); ++i) {
    write_str(os, i < cache.partition.names.size() ? cache.partition.names[i] : "");
    write_u64(os, cache.partition.groups[i].size());
    for (std::size_t ch : cache.partition.groups[i]) write_u64(os, ch);
  }
  write_u64(os, cache.partition.query);
  write_u64(os, cache.subjects.size());
  for (const auto& s : cache.subjects) {
    write_i32(os, s.subject_id);
    write_windows(os, s.train);
    write_windows(os, s.test);
  }
  if (!os) throw IoError("failed writing cache: " + path.string());
}

WindowCache load_cache(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open cache: " + path.string());
  char magic[8];
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, kCacheMagic, sizeof(kCacheMagic)) != 0) {
    throw IoError("not a window cache: " + path.string());
  }
  const std::uint32_t version = read_u32(is);
  if (version != kCacheVersion) {
    throw IoError("unsupported cache version " + std::to_string(version));
  }
  WindowCache cache;
  cache.classes = read_u64(is);
  cache.window_len = read_u64(is);
  cache.channels = read_u64(is);
  const std::uint64_t name_count = read_u64(is);
  auto names = std::make_shared<std::vector<std::string>>();
  for (std::uint64_t i = 0; i < name_count; ++i) names->push_back(read_str(is));
  cache.channel_names = *names;
  const std::uint64_t part_count = read_u64(is);
  for (std::uint64_t i = 0; i < part_count; ++i) {
    cache.partition.names.push_back(read_str(is));
    const std::uint64_t group_size = read_u64(is);
    std::vector<std::size_t> group(group_size);
    for (auto& ch : group) ch = read_u64(is);
    cache.partition.groups.push_back(std::move(group));
  }
  cache.partition.query = read_u64(is);
  const std::uint64_t subject_count = read_u64(is);
  for (std::uint64_t i = 0; i < subject_count; ++i) {
    SubjectData s;
    s.subject_id = read_i32(is);
    s.train = read_windows(is, cache.window_len, cache.channels, s.subject_id, names);
    s.test = read_windows(is, cache.window_len, cache.channels, s.subject_id, names);
    cache.subjects.push_back(std::move(s));
  }
  if (!is) throw IoError("truncated cache: " + path.string());
  return cache;
}

std::uint64_t file_checksum(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open file for checksum: " + path.string());
  std::uint64_t h = 1469598103934665603ull;
  char buf[4096];
  while (is.read(buf, sizeof(buf)) || is.gcount() > 0) {
    const std::streamsize n = is.gcount();
    for (std::streamsize i = 0; i < n; ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 1099511628211ull;
    }
    if (!is) break;
  }
  return h;
}

BodyPartition build_partition(const DatasetConfig& cfg,
                              const std::vector<std::string>& channel_names) {
  BodyPartition partition;
  if (cfg.parts.empty()) {
    std::vector<std::size_t> all(channel_names.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    partition.groups.push_back(std::move(all));
    partition.names.push_back("all");
    partition.query = 0;
    return partition;
  }
  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < channel_names.size(); ++i) index[channel_names[i]] = i;
  for (std::size_t p = 0; p < cfg.parts.size(); ++p) {
    const auto& [name, members] = cfg.parts[p];
    std::vector<std::size_t> group;
    for (const auto& ch : members) {
      auto it = index.find(ch);
      if (it == index.end()) {
        throw ConfigError("part '" + name + "' references unknown channel '" + ch + "'");
      }
      group.push_back(it->second);
    }
    partition.groups.push_back(std::move(group));
    partition.names.push_back(name);
    if (name == cfg.query_part) partition.query = p;
  }
  partition.validate(channel_names.size());
  return partition;
}

// ---------------------------------------------------------------------------
// csv io

namespace {

std::vector<std::string> csv_fields(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string field;
  while (std::getline(ss, field, ',')) out.push_back(field);
  return out;
}

std::ifstream open_csv(const fs::path& path, std::string& header) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open csv: " + path.string());
  std::string version;
  std::getline(is, version);
  if (version.rfind("# cladnet-csv", 0) != 0) {
    throw IoError(path.string() + ": missing format-version comment line");
  }
  std::getline(is, header);
  return is;
}

}  // namespace

void write_results_csv(const fs::path& path, const std::vector<ResultRow>& rows) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream os(path);
  if (!os) throw IoError("cannot open for writing: " + path.string());
  os << kCsvVersionLine << "\n";
  os << "strategy,seed,t,t_prime,accuracy\n";
  for (const auto& r : rows) {
    os << r.strategy << ',' << r.seed << ',' << r.t << ',' << r.t_prime << ','
       << fmt_double(r.accuracy) << "\n";
  }
}

void write_summary_csv(const fs::path& path, const std::vector<SummaryRow>& rows) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream os(path);
  if (!os) throw IoError("cannot open for writing: " + path.string());
  os << kCsvVersionLine << "\n";
  os << "strategy,seed,fa,fm,la\n";
  for (const auto& r : rows) {
    os << r.strategy << ',' << r.seed << ',' << fmt_double(r.fa) << ',' << fmt_double(r.fm) << ','
       << fmt_double(r.la) << "\n";
  }
}

std::vector<ResultRow> read_results_csv(const fs::path& path) {
  std::string header;
  std::ifstream is = open_csv(path, header);
  std::vector<ResultRow> rows;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto f = csv_fields(line);
    if (f.size() != 5) throw IoError(path.string() + ": malformed results row '" + line + "'");
    rows.push_back({f[0], std::stoull(f[1]), std::stoul(f[2]), std::stoul(f[3]), std::stod(f[4])});
  }
  return rows;
}

std::vector<SummaryRow> read_summary_csv(const fs::path& path) {
  std::string header;
  std::ifstream is = open_csv(path, header);
  std::vector<SummaryRow> rows;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto f = csv_fields(line);
    if (f.size() != 5) throw IoError(path.string() + ": malformed summary row '" + line + "'");
    rows.push_back({f[0], std::stoull(f[1]), std::stod(f[2]), std::stod(f[3]), std::stod(f[4])});
  }
  return rows;
}

// ---------------------------------------------------------------------------
// commands

void run_prepare(const PrepareOptions& options) {
  ExperimentConfig cfg = load_config(options.config);
  if (options.dataset_override) {
    try {
      cfg.dataset.kind = dataset_kind_from_string(*options.dataset_override);
    } catch (const DataError& e) {
      throw ConfigError(e.what());
    }
  }
  if (options.root_override) cfg.dataset.root = *options.root_override;
  const fs::path out_dir = options.out_override.value_or(cfg.run.cache.parent_path());

  auto [subjects, parsed] = prepare_subjects(cfg.dataset);
  if (subjects.empty()) throw DataError("prepare produced no usable subjects");

  WindowCache cache;
  cache.classes = cfg.dataset.num_classes();
  cache.window_len = cfg.dataset.window_len();
  cache.channels = subjects.front().train.front().data.cols();
  cache.channel_names = *subjects.front().train.front().channel_names;
  cache.partition = build_partition(cfg.dataset, cache.channel_names);
  cache.subjects = std::move(subjects);

  fs::create_directories(out_dir);
  const fs::path cache_path = out_dir / "prepared.bin";
  save_cache(cache_path, cache);

  json stats;
  stats["cache"] = cache_path.string();
  stats["cache_checksum"] = file_checksum(cache_path);
  stats["classes"] = cache.classes;
  stats["window_len"] = cache.window_len;
  stats["channels"] = cache.channels;
  stats["rows_dropped"] = parsed.rows_dropped;
  stats["warnings"] = parsed.warnings;
  stats["subjects"] = json::array();
  for (const auto& s : cache.subjects) {
    json subj;
    subj["id"] = s.subject_id;
    subj["train_windows"] = s.train.size();
    subj["test_windows"] = s.test.size();
    std::map<int, std::size_t> per_class;
    for (const auto& w : s.train) {
      if (w.label) ++per_class[*w.label];
    }
    json classes = json::object();
    for (const auto& [cls, count] : per_class) classes[std::to_string(cls)] = count;
    subj["train_class_counts"] = classes;
    stats["subjects"].push_back(subj);
  }
  std::ofstream os(out_dir / "prepare_stats.json");
  os << stats.dump(2) << "\n";
}

namespace {

std::vector<SubjectData> order_subjects(const WindowCache& cache,
                                        const std::vector<int>& requested) {
  std::vector<SubjectData> subjects = cache.subjects;
  std::sort(subjects.begin(), subjects.end(),
            [](const SubjectData& a, const SubjectData& b) { return a.subject_id < b.subject_id; });
  if (requested.empty()) return subjects;
  std::vector<SubjectData> ordered;
  for (int id : requested) {
    auto it = std::find_if(subjects.begin(), subjects.end(),
                           [id](const SubjectData& s) { return s.subject_id == id; });
    if (it == subjects.end()) {
      throw ConfigError("subject_order references unknown subject " + std::to_string(id));
    }
    ordered.push_back(*it);
  }
  return ordered;
}

void write_manifest(const fs::path& out_dir, const ExperimentConfig& cfg,
                    const fs::path& cache_path) {
  json manifest;
  manifest["format_version"] = 1;
  manifest["cache"] = cache_path.string();
  manifest["cache_checksum"] = file_checksum(cache_path);
  manifest["config"] = json::parse(config_to_json_text(cfg));
  std::ofstream os(out_dir / "manifest.json");
  os << manifest.dump(2) << "\n";
}

}  // namespace

TrainOutput execute_training(const ExperimentConfig& cfg, const WindowCache& cache,
                             const fs::path& out_dir, bool write_checkpoints) {
  TrainOutput output;
  const std::string strategy_name = to_string(cfg.strategy.kind);

  for (const std::uint64_t seed : cfg.run.seeds) {
    std::vector<SubjectData> subjects = order_subjects(cache, cfg.run.subject_order);
    if (cfg.run.phi < 1.0) {
      for (auto& s : subjects) {
        mask_labels(s.train, cfg.run.phi, seed * 31 + 7 + static_cast<std::uint64_t>(s.subject_id));
      }
    }
    VectorDataAccess data(std::move(subjects));

    RunConfig run;
    run.transformer = cfg.transformer;
    run.cnn = cfg.cnn;
    run.partition = cache.partition;
    run.classes = cache.classes;
    run.ssl = cfg.ssl;
    run.epochs = cfg.run.epochs;
    run.batch_size = cfg.run.batch_size;
    run.lr = cfg.run.lr;
    run.seed = seed;

    std::function<void(std::size_t, int, const ParameterStore&)> on_done;
    if (write_checkpoints) {
      const fs::path ckpt_dir = out_dir / "checkpoints" / ("seed" + std::to_string(seed));
      fs::create_directories(ckpt_dir);
      on_done = [ckpt_dir](std::size_t task, int subject, const ParameterStore& params) {
        params.save(ckpt_dir / ("task" + std::to_string(task + 1) + "_subject" +
                                std::to_string(subject) + ".ckpt"));
      };
    }

    const StreamResult stream = run_stream(data, run, cfg.strategy, on_done);
    const std::size_t t_count = stream.accuracy.size();
    for (std::size_t t = 0; t < t_count; ++t) {
      for (std::size_t tp = 0; tp < t_count; ++tp) {
        output.results.push_back({strategy_name, seed, t + 1, tp + 1, stream.accuracy[t][tp]});
      }
    }
    output.summary.push_back({strategy_name, seed, final_accuracy(stream.accuracy),
                              forgetting_measure(stream.accuracy),
                              learning_accuracy(stream.accuracy)});
  }
  return output;
}

void run_train(const TrainOptions& options) {
  ExperimentConfig cfg = load_config(options.config);
  if (options.strategy_override) {
    try {
      cfg.strategy.kind = strategy_from_string(*options.strategy_override);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
  }
  if (options.seed_override) cfg.run.seeds = {*options.seed_override};
  if (options.out_override) cfg.run.out_dir = *options.out_override;
  if (options.cache_override) cfg.run.cache = *options.cache_override;
  if (options.phi_override) {
    if (*options.phi_override <= 0.0 || *options.phi_override > 1.0) {
      throw ConfigError("phi must be in (0, 1]");
    }
    cfg.run.phi = *options.phi_override;
  }

  const WindowCache cache = load_cache(cfg.run.cache);
  fs::create_directories(cfg.run.out_dir);

  const TrainOutput output = execute_training(cfg, cache, cfg.run.out_dir, true);
  write_results_csv(cfg.run.out_dir / "results.csv", output.results);
  write_summary_csv(cfg.run.out_dir / "summary.csv", output.summary);
  write_manifest(cfg.run.out_dir, cfg, cfg.run.cache);
}

void run_ablate(const AblateOptions& options) {
  ExperimentConfig base = load_config(options.config);
  if (options.out_override) base.run.out_dir = *options.out_override;
  if (options.cache_override) base.run.cache = *options.cache_override;

  struct Cell {
    std::string name;
    std::function<void(ExperimentConfig&)> apply;
  };
  std::vector<Cell> cells;
  if (options.axis == "components") {
    cells = {{"full", [](ExperimentConfig& c) { c.strategy.kind = StrategyKind::kClad; }},
             {"no_distill",
              [](ExperimentConfig& c) { c.strategy.kind = StrategyKind::kCladNoDistill; }},
             {"no_transformer", [](ExperimentConfig& c) { c.strategy.kind = StrategyKind::kLwf; }},
             {"plain", [](ExperimentConfig& c) { c.strategy.kind = StrategyKind::kNaive; }}};
  } else if (options.axis == "ssl_loss") {
    for (const auto kind :
         {SslLossKind::kBarlowTwins, SslLossKind::kNtXent, SslLossKind::kByol}) {
      cells.push_back({to_string(kind), [kind](ExperimentConfig& c) {
                         c.strategy.kind = StrategyKind::kClad;
                         c.ssl.loss = kind;
                       }});
    }
  } else if (options.axis == "augmentation") {
    for (const auto kind : {AugmentKind::kNoise, AugmentKind::kZeroMask, AugmentKind::kTimeWarp,
                            AugmentKind::kCropResize}) {
      cells.push_back({to_string(kind), [kind](ExperimentConfig& c) {
                         c.strategy.kind = StrategyKind::kClad;
                         c.ssl.augment.kind = kind;
                       }});
    }
  } else if (options.axis == "attention") {
    for (const auto kind : {AttentionKind::kCross, AttentionKind::kSelf}) {
      cells.push_back({to_string(kind), [kind](ExperimentConfig& c) {
                         c.strategy.kind = StrategyKind::kClad;
                         c.transformer.attention = kind;
                       }});
    }
  } else if (options.axis == "labels") {
    for (const double phi : {0.1, 0.2, 1.0}) {
      char name[32];
      std::snprintf(name, sizeof(name), "phi_%.2f", phi);
      cells.push_back({name, [phi](ExperimentConfig& c) {
                         c.strategy.kind = StrategyKind::kClad;
                         c.run.phi = phi;
                       }});
    }
  } else {
    throw ConfigError("unknown ablation axis '" + options.axis +
                      "', expected one of components|ssl_loss|augmentation|attention|labels");
  }

  const WindowCache cache = load_cache(base.run.cache);
  fs::create_directories(base.run.out_dir);

  std::ofstream os(base.run.out_dir / ("ablation_" + options.axis + ".csv"));
  if (!os) throw IoError("cannot write ablation csv");
  os << kCsvVersionLine << "\n";
  os << "axis,cell,fa,fm,la\n";
  for (const auto& cell : cells) {
    ExperimentConfig cfg = base;
    cell.apply(cfg);
    const fs::path cell_dir = base.run.out_dir / cell.name;
    fs::create_directories(cell_dir);
    const TrainOutput out = execute_training(cfg, cache, cell_dir, false);
    write_results_csv(cell_dir / "results.csv", out.results);
    write_summary_csv(cell_dir / "summary.csv", out.summary);
    double fa = 0, fm = 0, la = 0;
    for (const auto& row : out.summary) {
      fa += row.fa;
      fm += row.fm;
      la += row.la;
    }
    const double n = static_cast<double>(out.summary.size());
    os << options.axis << ',' << cell.name << ',' << fmt_double(fa / n) << ','
       << fmt_double(fm / n) << ',' << fmt_double(la / n) << "\n";
  }
}

void run_report(const ReportOptions& options) {
  std::vector<fs::path> summary_files, results_files;
  if (!fs::exists(options.runs_dir)) {
    throw ConfigError("runs directory does not exist: " + options.runs_dir.string());
  }
  for (const auto& entry : fs::recursive_directory_iterator(options.runs_dir)) {
    if (!entry.is_regular_file()) continue;
    if (entry.path().filename() == "summary.csv") summary_files.push_back(entry.path());
    if (entry.path().filename() == "results.csv") results_files.push_back(entry.path());
  }
  std::sort(summary_files.begin(), summary_files.end());
  std::sort(results_files.begin(), results_files.end());
  if (summary_files.empty()) {
    throw ConfigError("no summary.csv files under " + options.runs_dir.string());
  }

  std::map<std::string, std::vector<SummaryRow>> by_strategy;
  for (const auto& path : summary_files) {
    for (const auto& row : read_summary_csv(path)) by_strategy[row.strategy].push_back(row);
  }

  fs::create_directories(options.out_dir);
  {
    std::ofstream os(options.out_dir / "aggregate.csv");
    os << kCsvVersionLine << "\n";
    os << "strategy,runs,fa_mean,fa_std,fm_mean,fm_std,la_mean,la_std\n";
    for (const auto& [strategy, rows] : by_strategy) {
      auto stats = [&rows](auto getter) {
        double mean = 0;
        for (const auto& r : rows) mean += getter(r);
        mean /= static_cast<double>(rows.size());
        double var = 0;
        for (const auto& r : rows) var += (getter(r) - mean) * (getter(r) - mean);
        var /= static_cast<double>(rows.size());
        return std::pair<double, double>{mean, std::sqrt(var)};
      };
      const auto [fa_m, fa_s] = stats([](const SummaryRow& r) { return r.fa; });
      const auto [fm_m, fm_s] = stats([](const SummaryRow& r) { return r.fm; });
      const auto [la_m, la_s] = stats([](const SummaryRow& r) { return r.la; });
      os << strategy << ',' << rows.size() << ',' << fmt_double(fa_m) << ',' << fmt_double(fa_s)
         << ',' << fmt_double(fm_m) << ',' << fmt_double(fm_s) << ',' << fmt_double(la_m) << ','
         << fmt_double(la_s) << "\n";
    }
  }

  // Forgetting curves: mean accuracy per (strategy, t, t_prime) over seeds.
  std::map<std::string, std::map<std::pair<std::size_t, std::size_t>, std::pair<double, std::size_t>>>
      curves;
  for (const auto& path : results_files) {
    for (const auto& row : read_results_csv(path)) {
      auto& cell = curves[row.strategy][{row.t, row.t_prime}];
      cell.first += row.accuracy;
      cell.second += 1;
    }
  }
  {
    std::ofstream os(options.out_dir / "curves.csv");
    os << kCsvVersionLine << "\n";
    os << "strategy,t,t_prime,mean_accuracy\n";
    for (const auto& [strategy, cells] : curves) {
      for (const auto& [key, acc] : cells) {
        os << strategy << ',' << key.first << ',' << key.second << ','
           << fmt_double(acc.first / static_cast<double>(acc.second)) << "\n";
      }
    }
  }
}

}  // namespace cladnet
