#include <filesystem>
#include <fstream>
#include <set>

#include "cladnet/dataio.hpp"
#include "doctest.h"

using namespace cladnet;
namespace fs = std::filesystem;

TEST_SUITE_BEGIN("dataio");

namespace {

fs::path make_temp_dir(const std::string& tag) {
  const fs::path dir = fs::temp_directory_path() / ("cladnet_test_" + tag);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

DatasetConfig pamap2_fixture_config(const fs::path& root) {
  DatasetConfig cfg;
  cfg.kind = DatasetKind::kPamap2;
  cfg.root = root;
  cfg.rate_hz = 100.0;
  cfg.window_seconds = 0.02;  // 2-sample windows for the fixture
  cfg.overlap = 0.5;
  cfg.channels = {{"acc_x", 3}, {"acc_y", 4}};
  cfg.activity_map = {{1, 0}, {2, 1}};
  return cfg;
}

SubjectRaw ramp_stream(int subject, std::size_t n, std::size_t channels,
                       const std::vector<int>& labels) {
  SubjectRaw s;
  s.subject = subject;
  s.channels = channels;
  s.channel_names = std::make_shared<std::vector<std::string>>(channels, "ch");
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < channels; ++c) {
      s.samples.push_back(static_cast<double>(i * channels + c));
    }
    s.labels.push_back(labels.empty() ? 0 : labels[i % labels.size()]);
  }
  if (!labels.empty() && labels.size() == n) s.labels = labels;
  return s;
}

}  // namespace

TEST_CASE("parse_pamap2: fixture values, transient drop, empty file warning") {
  const fs::path root = make_temp_dir("pamap2");
  {
    std::ofstream os(root / "subject101.dat");
    // timestamp activity heart_rate c3 c4
    os << "0.01 1 100 1.5 -2.25\n";
    os << "0.02 0 100 9.9 9.9\n";       // transient activity id, dropped
    os << "0.03 2 NaN 0.5 0.75\n";      // heart rate NaN is not a selected channel
    os << "0.04 1 100 NaN 1.0\n";       // NaN in selected channel, dropped
  }
  {
    std::ofstream os(root / "subject102.dat");
    os << "0.01 0 100 1.0 1.0\n";  // only transient rows
  }

  const DatasetConfig cfg = pamap2_fixture_config(root);
  const ParsedDataset parsed = parse_pamap2(root, cfg);

  REQUIRE(parsed.subjects.size() == 2);
  const SubjectRaw& s101 = parsed.subjects[0];
  CHECK(s101.subject == 101);
  REQUIRE(s101.count() == 2);
  CHECK(s101.sample(0, 0) == 1.5);
  CHECK(s101.sample(0, 1) == -2.25);
  CHECK(s101.sample(1, 0) == 0.5);
  CHECK(s101.sample(1, 1) == 0.75);
  CHECK(s101.labels[0] == 0);
  CHECK(s101.labels[1] == 1);
  CHECK(s101.rows_dropped == 2);

  CHECK(parsed.subjects[1].count() == 0);
  REQUIRE(parsed.warnings.size() == 1);
  CHECK(parsed.warnings[0].find("subject102") != std::string::npos);
}

TEST_CASE("parse_pamap2: malformed row and missing root are structured errors") {
  const fs::path root = make_temp_dir("pamap2_bad");
  {
    std::ofstream os(root / "subject101.dat");
    os << "0.01 1 100\n";  // too few columns
  }
  const DatasetConfig cfg = pamap2_fixture_config(root);
  try {
    parse_pamap2(root, cfg);
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.file().find("subject101.dat") != std::string::npos);
    CHECK(e.line() == 1);
  }
  CHECK_THROWS_AS(parse_pamap2(root / "missing", cfg), ParseError);
}

TEST_CASE("parse_dsa: fixture matrix, per-subject segments kept separate") {
  const fs::path root = make_temp_dir("dsa");
  DatasetConfig cfg;
  cfg.kind = DatasetKind::kDsa;
  cfg.root = root;
  cfg.channels = {{"c0", 0}, {"c1", 2}};
  cfg.activity_map = {{1, 0}, {2, 1}};

  fs::create_directories(root / "a01" / "p1");
  fs::create_directories(root / "a01" / "p2");
  fs::create_directories(root / "a02" / "p1");  // activity present but empty
  {
    std::ofstream os(root / "a01" / "p1" / "s01.txt");
    for (int i = 0; i < 5; ++i) os << i << ",99," << 10 * i << "\n";
  }
  {
    // duplicate segment file name under another subject stays separate
    std::ofstream os(root / "a01" / "p2" / "s01.txt");
    os << "7,99,70\n";
  }

  const ParsedDataset parsed = parse_dsa(root, cfg);
  REQUIRE(parsed.subjects.size() == 2);
  const SubjectRaw& p1 = parsed.subjects[0];
  CHECK(p1.subject == 1);
  REQUIRE(p1.count() == 5);
  CHECK(p1.sample(3, 0) == 3.0);
  CHECK(p1.sample(3, 1) == 30.0);
  CHECK(p1.labels[0] == 0);
  const SubjectRaw& p2 = parsed.subjects[1];
  CHECK(p2.subject == 2);
  CHECK(p2.count() == 1);
  CHECK(p2.sample(0, 0) == 7.0);
}

TEST_CASE("parse_dsa: missing activity and inconsistent columns") {
  const fs::path root = make_temp_dir("dsa_bad");
  DatasetConfig cfg;
  cfg.kind = DatasetKind::kDsa;
  cfg.root = root;
  cfg.channels = {{"c0", 0}};
  cfg.activity_map = {{1, 0}, {2, 1}};
  fs::create_directories(root / "a01" / "p1");
  {
    std::ofstream os(root / "a01" / "p1" / "s01.txt");
    os << "1,2,3\n";
  }
  {
    std::ofstream os(root / "a01" / "p1" / "s02.txt");
    os << "1,2\n";  // fewer columns than the first segment
  }
  try {
    parse_dsa(root, cfg);
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.file().find("s02.txt") != std::string::npos);
  }
}

TEST_CASE("segment_windows: closed-form count and majority labels") {
  {
    const SubjectRaw s = ramp_stream(1, 1000, 1, {0});
    const auto windows = segment_windows(s, 200, 0.5);
    CHECK(windows.size() == 9);
    for (std::size_t w = 0; w < windows.size(); ++w) {
      CHECK(windows[w].data(0, 0) == doctest::Approx(static_cast<double>(w * 100)));
    }
  }
  {
    const SubjectRaw s = ramp_stream(1, 199, 1, {0});
    CHECK(segment_windows(s, 200, 0.5).empty());
  }
  {
    std::vector<int> labels(200);
    for (std::size_t i = 0; i < 150; ++i) labels[i] = 3;
    for (std::size_t i = 150; i < 200; ++i) labels[i] = 4;
    const SubjectRaw s = ramp_stream(1, 200, 1, labels);
    const auto windows = segment_windows(s, 200, 0.0);
    REQUIRE(windows.size() == 1);
    CHECK(*windows[0].label == 3);
  }
  {
    std::vector<int> labels(10, -1);  // no valid labels -> unlabeled window
    const SubjectRaw s = ramp_stream(1, 10, 1, labels);
    const auto windows = segment_windows(s, 10, 0.0);
    REQUIRE(windows.size() == 1);
    CHECK_FALSE(windows[0].label.has_value());
  }
}

TEST_CASE("segment_windows: window count matches closed form on random cases") {
  std::mt19937_64 rng(41);
  for (int trial = 0; trial < 200; ++trial) {
    std::uniform_int_distribution<std::size_t> ndist(1, 400), wdist(1, 50);
    std::uniform_real_distribution<double> odist(0.0, 0.9);
    const std::size_t n = ndist(rng);
    const std::size_t wl = wdist(rng);
    const double overlap = odist(rng);
    const auto stride =
        static_cast<std::size_t>(std::llround(static_cast<double>(wl) * (1.0 - overlap)));
    if (stride == 0) continue;
    const SubjectRaw s = ramp_stream(1, n, 2, {0});
    const auto windows = segment_windows(s, wl, overlap);
    const std::size_t expected = n >= wl ? (n - wl) / stride + 1 : 0;
    CHECK(windows.size() == expected);
    for (const auto& w : windows) CHECK(w.subject == 1);
  }
}

TEST_CASE("split_train_test: fractions, determinism, membership") {
  const SubjectRaw s = ramp_stream(1, 10, 1, {0});
  auto windows = segment_windows(s, 1, 0.0);
  REQUIRE(windows.size() == 10);

  auto [train, test] = split_train_test(windows, 0.8, 7);
  CHECK(train.size() == 8);
  CHECK(test.size() == 2);

  auto [train2, test2] = split_train_test(windows, 0.8, 7);
  for (std::size_t i = 0; i < train.size(); ++i) {
    CHECK(train[i].data(0, 0) == train2[i].data(0, 0));
  }

  // membership multiset preserved, different seeds differ
  const SubjectRaw big = ramp_stream(1, 100, 1, {0});
  auto big_windows = segment_windows(big, 1, 0.0);
  auto [a_train, a_test] = split_train_test(big_windows, 0.8, 1);
  auto [b_train, b_test] = split_train_test(big_windows, 0.8, 2);
  std::multiset<double> all, a_all, b_all;
  for (const auto& w : big_windows) all.insert(w.data(0, 0));
  for (const auto& w : a_train) a_all.insert(w.data(0, 0));
  for (const auto& w : a_test) a_all.insert(w.data(0, 0));
  for (const auto& w : b_train) b_all.insert(w.data(0, 0));
  for (const auto& w : b_test) b_all.insert(w.data(0, 0));
  CHECK(a_all == all);
  CHECK(b_all == all);
  bool differs = false;
  for (std::size_t i = 0; i < a_train.size(); ++i) {
    if (a_train[i].data(0, 0) != b_train[i].data(0, 0)) differs = true;
  }
  CHECK(differs);

  CHECK_THROWS_AS(split_train_test({windows[0]}, 0.8, 1), DataError);
}

TEST_CASE("standardize_per_subject: train statistics, zero-variance guard") {
  std::mt19937_64 rng(43);
  std::normal_distribution<double> dist(3.0, 2.0);

  SubjectData subject;
  subject.subject_id = 1;
  auto make_window = [&]() {
    SensorWindow w;
    w.subject = 1;
    w.label = 0;
    Tensor data({8, 2});
    for (std::size_t t = 0; t < 8; ++t) {
      data(t, 0) = dist(rng);
      data(t, 1) = 5.0;  // zero-variance channel
    }
    w.data = std::move(data);
    return w;
  };
  for (int i = 0; i < 6; ++i) subject.train.push_back(make_window());
  for (int i = 0; i < 2; ++i) subject.test.push_back(make_window());

  std::vector<SubjectData> subjects{subject};
  standardize_per_subject(subjects);

  // recompute statistics over training windows only
  double mean = 0, var = 0;
  std::size_t n = 0;
  for (const auto& w : subjects[0].train) {
    for (std::size_t t = 0; t < w.data.rows(); ++t) {
      mean += w.data(t, 0);
      ++n;
    }
  }
  mean /= static_cast<double>(n);
  for (const auto& w : subjects[0].train) {
    for (std::size_t t = 0; t < w.data.rows(); ++t) {
      var += (w.data(t, 0) - mean) * (w.data(t, 0) - mean);
    }
  }
  var /= static_cast<double>(n);
  CHECK(std::abs(mean) < 1e-6);
  CHECK(std::sqrt(var) == doctest::Approx(1.0).epsilon(1e-3));

  for (const auto& w : subjects[0].train) {
    for (std::size_t t = 0; t < w.data.rows(); ++t) CHECK(w.data(t, 1) == 0.0);
  }

  // the transform came from the train side: the fitted mean reproduces the
  // train mean, while the test windows keep a nonzero residual mean
  CHECK(subjects[0].channel_mean.size() == 2);
  CHECK(subjects[0].channel_std[1] < 1e-12);
  double test_mean = 0;
  std::size_t test_n = 0;
  for (const auto& w : subjects[0].test) {
    for (std::size_t t = 0; t < w.data.rows(); ++t) {
      test_mean += w.data(t, 0);
      ++test_n;
    }
  }
  test_mean /= static_cast<double>(test_n);
  CHECK(std::abs(test_mean) > 1e-9);  // would be ~0 if test data leaked into the fit
}

TEST_CASE("standardize: symmetric two-point channel is unchanged") {
  SubjectData subject;
  subject.subject_id = 1;
  SensorWindow w;
  w.subject = 1;
  Tensor data({4, 1});
  data(0, 0) = -1.0;
  data(1, 0) = 1.0;
  data(2, 0) = -1.0;
  data(3, 0) = 1.0;
  w.data = data;
  subject.train.push_back(w);
  std::vector<SubjectData> subjects{subject};
  standardize_per_subject(subjects);
  for (std::size_t t = 0; t < 4; ++t) {
    CHECK(subjects[0].train[0].data(t, 0) == doctest::Approx(data(t, 0)).epsilon(1e-9));
  }
}

TEST_CASE("mask_labels: identity, exact count, per-class floor, determinism") {
  auto make_windows = [](std::size_t n, int classes) {
    std::vector<SensorWindow> out;
    for (std::size_t i = 0; i < n; ++i) {
      SensorWindow w;
      w.subject = 1;
      w.label = static_cast<int>(i % classes);
      w.data = Tensor({2, 1}, {static_cast<double>(i), 0.0});
      out.push_back(std::move(w));
    }
    return out;
  };

  {
    auto windows = make_windows(50, 3);
    auto copy = windows;
    mask_labels(windows, 1.0, 9);
    for (std::size_t i = 0; i < windows.size(); ++i) {
      CHECK(windows[i].label == copy[i].label);
    }
  }
  {
    auto windows = make_windows(100, 2);
    mask_labels(windows, 0.1, 9);
    std::size_t labeled = 0;
    for (const auto& w : windows) labeled += w.label.has_value() ? 1 : 0;
    CHECK(labeled == 10);
  }
  {
    // 3-window minority class keeps at least one label at phi = 0.1
    std::vector<SensorWindow> windows = make_windows(97, 1);
    for (auto& w : windows) w.label = 0;
    for (int i = 0; i < 3; ++i) {
      SensorWindow w;
      w.subject = 1;
      w.label = 1;
      w.data = Tensor({2, 1});
      windows.push_back(std::move(w));
    }
    mask_labels(windows, 0.1, 9);
    std::size_t minority = 0, total = 0;
    for (const auto& w : windows) {
      if (!w.label) continue;
      ++total;
      if (*w.label == 1) ++minority;
    }
    CHECK(minority >= 1);
    CHECK(total == 10);
  }
  {
    auto w1 = make_windows(60, 3);
    auto w2 = make_windows(60, 3);
    mask_labels(w1, 0.25, 11);
    mask_labels(w2, 0.25, 11);
    for (std::size_t i = 0; i < w1.size(); ++i) {
      CHECK(w1[i].label.has_value() == w2[i].label.has_value());
    }
  }
  {
    // masking after full retention equals masking directly
    auto w1 = make_windows(40, 2);
    auto w2 = make_windows(40, 2);
    mask_labels(w1, 1.0, 5);
    mask_labels(w1, 0.2, 5);
    mask_labels(w2, 0.2, 5);
    for (std::size_t i = 0; i < w1.size(); ++i) {
      CHECK(w1[i].label.has_value() == w2[i].label.has_value());
    }
  }
}

TEST_CASE("synthetic generator: deterministic, labeled, subject-distinct") {
  DatasetConfig cfg;
  cfg.kind = DatasetKind::kSynthetic;
  cfg.rate_hz = 25.0;
  cfg.window_seconds = 1.28;
  cfg.seed = 3;
  cfg.synthetic.subjects = 2;
  cfg.synthetic.segment_len = 64;
  cfg.synthetic.segments_per_class = 2;

  const ParsedDataset a = generate_synthetic(cfg);
  const ParsedDataset b = generate_synthetic(cfg);
  REQUIRE(a.subjects.size() == 2);
  CHECK(a.subjects[0].samples == b.subjects[0].samples);
  CHECK(a.subjects[0].count() == 64 * 2 * 3);
  std::set<int> labels(a.subjects[0].labels.begin(), a.subjects[0].labels.end());
  CHECK(labels == std::set<int>{0, 1, 2});
  // different subjects observe different sample streams
  CHECK(a.subjects[0].samples != a.subjects[1].samples);
}

TEST_CASE("prepare_subjects: full pipeline keeps subjects separate") {
  DatasetConfig cfg;
  cfg.kind = DatasetKind::kSynthetic;
  cfg.rate_hz = 25.0;
  cfg.window_seconds = 1.28;
  cfg.overlap = 0.5;
  cfg.synthetic.subjects = 3;
  cfg.synthetic.segment_len = 64;
  cfg.synthetic.segments_per_class = 2;

  auto [subjects, parsed] = prepare_subjects(cfg);
  REQUIRE(subjects.size() == 3);
  for (const auto& s : subjects) {
    CHECK_FALSE(s.train.empty());
    CHECK_FALSE(s.test.empty());
    for (const auto& w : s.train) CHECK(w.subject == s.subject_id);
    for (const auto& w : s.test) CHECK(w.subject == s.subject_id);
  }
}

TEST_SUITE_END();
