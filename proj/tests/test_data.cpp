#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <unistd.h>

#include "tarnn/data.hpp"
#include "tarnn/rng.hpp"

using namespace tarnn;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("tarnn_data_" + std::to_string(::getpid()) + "_" +
                                        std::to_string(counter()++));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  static int& counter() {
    static int c = 0;
    return c;
  }
  std::string file(const std::string& name, const std::string& content) const {
    const auto p = (path / name).string();
    std::ofstream(p) << content;
    return p;
  }
};

// CSTR-shaped file: time, input, two outputs, sampled every 0.1.
std::string cstr_like(std::size_t rows) {
  std::ostringstream os;
  os << "% synthetic\n";
  for (std::size_t i = 0; i < rows; ++i) {
    const double t = 0.1 * static_cast<double>(i);
    os << t << ' ' << std::sin(t) << ' ' << std::cos(0.5 * t) << "  " << std::sin(0.3 * t + 1) << '\n';
  }
  return os.str();
}

TimeSeries ramp(std::size_t n, std::vector<double> t = {}) {
  TimeSeries s;
  if (t.empty()) {
    for (std::size_t i = 0; i < n; ++i) t.push_back(static_cast<double>(i));
  }
  s.t = t;
  s.X = Tensor(Shape{n, 1});
  s.Y = Tensor(Shape{n, 1});
  for (std::size_t i = 0; i < n; ++i) {
    s.X(i, 0) = std::sin(static_cast<double>(i));
    s.Y(i, 0) = static_cast<double>(i * i % 7);
  }
  return s;
}

}  // namespace

TEST(LoadDaisy, CstrPresetShape) {
  TempDir dir;
  const auto& preset = find_preset("cstr");
  const auto s = load_daisy(dir.file("cstr.dat", cstr_like(7500)), preset.columns, preset.sample_period);
  EXPECT_EQ(s.size(), 7500u);
  EXPECT_EQ(s.size(), preset.expected_rows);
  EXPECT_EQ(s.input_channels(), 1u);
  EXPECT_EQ(s.output_channels(), 2u);
  EXPECT_DOUBLE_EQ(s.t[10], 1.0);
}

TEST(LoadDaisy, WindingSynthesizedTime) {
  TempDir dir;
  std::string body = "# winding\n";
  for (int i = 0; i < 4; ++i) body += "1 2 3 4 5 " + std::to_string(i) + " " + std::to_string(2 * i) + "\n";
  const auto& preset = find_preset("winding");
  const auto s = load_daisy(dir.file("w.dat", body), preset.columns, preset.sample_period);
  EXPECT_EQ(s.input_channels(), 5u);
  EXPECT_EQ(s.output_channels(), 2u);
  EXPECT_EQ(s.t, (std::vector<double>{0.0, 0.1, 0.2, 0.30000000000000004}));
  EXPECT_EQ(s.Y(3, 1), 6.0);
}

TEST(LoadDaisy, PeriodOne) {
  TempDir dir;
  ColumnSpec cols{std::nullopt, {0}, {1}};
  const auto s = load_daisy(dir.file("a.dat", "1 2\n3 4\n5 6\n"), cols, 1.0);
  EXPECT_EQ(s.t, (std::vector<double>{0, 1, 2}));
}

TEST(LoadDaisy, ErrorsCarryLineNumbers) {
  TempDir dir;
  ColumnSpec cols{std::nullopt, {0}, {1}};
  try {
    load_daisy(dir.file("bad.dat", "1 2\n% c\n3 x\n"), cols, 1.0);
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find(":3:"), std::string::npos) << e.what();
  }
  try {
    load_daisy(dir.file("rag.dat", "1 2\n3 4 5\n"), cols, 1.0);
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find(":2:"), std::string::npos) << e.what();
  }
  EXPECT_THROW(load_daisy(dir.file("narrow.dat", "1\n2\n"), cols, 1.0), DataError);
  EXPECT_THROW(load_daisy((dir.path / "absent.dat").string(), cols, 1.0), DataError);
  EXPECT_THROW(load_daisy(dir.file("p.dat", "1 2\n3 4\n"), cols, std::nullopt), DataError);
  ColumnSpec timed{0, {1}, {1}};
  EXPECT_THROW(load_daisy(dir.file("t.dat", "1 2\n1 4\n"), timed, std::nullopt), DataError);
}

TEST(Presets, UnknownNameListsAvailable) {
  try {
    find_preset("silverbox");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("cstr"), std::string::npos);
  }
}

TEST(Subsample, ZeroProbabilityKeepsAll) {
  const auto s = ramp(50);
  const auto r = subsample_missing(s, 0.0, 3);
  EXPECT_EQ(r.t, s.t);
  EXPECT_EQ(r.X, s.X);
  EXPECT_EQ(r.Y, s.Y);
}

TEST(Subsample, DeterministicOrderedFirstKept) {
  const auto s = ramp(500);
  const auto a = subsample_missing(s, 0.5, 9);
  const auto b = subsample_missing(s, 0.5, 9);
  EXPECT_EQ(a.t, b.t);
  EXPECT_EQ(a.t.front(), 0.0);
  EXPECT_TRUE(std::is_sorted(a.t.begin(), a.t.end()));
  EXPECT_NE(a.t, subsample_missing(s, 0.5, 10).t);
  // retained rows keep their original values
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a.X(i, 0), s.X(static_cast<std::size_t>(a.t[i]), 0));
  }
  EXPECT_THROW(subsample_missing(s, 1.0, 1), std::invalid_argument);
}

TEST(Subsample, CstrGridMeanGap) {
  TempDir dir;
  const auto& preset = find_preset("cstr");
  const auto s = load_daisy(dir.file("cstr.dat", cstr_like(7500)), preset.columns, preset.sample_period);
  const auto r = subsample_missing(s, 0.5, 20200207);
  const double mean_gap = (r.t.back() - r.t.front()) / static_cast<double>(r.size() - 1);
  EXPECT_NEAR(mean_gap, 0.2, 0.02);
  double max_gap = 0;
  for (std::size_t i = 1; i < r.size(); ++i) max_gap = std::max(max_gap, r.t[i] - r.t[i - 1]);
  EXPECT_GE(max_gap, 0.8);
}

TEST(Split, Boundaries) {
  auto d = split_normalize(ramp(7500));
  EXPECT_EQ(d.train_end, 5250u);
  EXPECT_EQ(d.val_end - d.train_end, 1125u);
  EXPECT_EQ(d.size() - d.val_end, 1125u);
  d = split_normalize(ramp(2500));
  EXPECT_EQ(d.train_end, 1750u);
  EXPECT_EQ(d.val_end - d.train_end, 375u);
  EXPECT_EQ(d.size() - d.val_end, 375u);
  EXPECT_THROW(split_normalize(ramp(10)), DataError);
}

TEST(Split, TrainingStatisticsStandardized) {
  const auto d = split_normalize(ramp(300));
  for (const Tensor* m : {&d.series.X, &d.series.Y}) {
    double s = 0, ss = 0;
    for (std::size_t r = 0; r < d.train_end; ++r) s += (*m)(r, 0);
    const double mean = s / static_cast<double>(d.train_end);
    for (std::size_t r = 0; r < d.train_end; ++r) ss += ((*m)(r, 0) - mean) * ((*m)(r, 0) - mean);
    EXPECT_LE(std::abs(mean), 1e-12);
    EXPECT_LE(std::abs(std::sqrt(ss / static_cast<double>(d.train_end)) - 1.0), 1e-12);
  }
}

TEST(Split, NormalizationInvertible) {
  const auto raw = ramp(100);
  const auto d = split_normalize(raw);
  for (std::size_t r = 0; r < raw.size(); ++r) {
    const auto back = denormalize_outputs(d.stats, d.series.Y.row(r));
    EXPECT_LE(std::abs(back[0] - raw.Y(r, 0)), 1e-12);
    const auto again = normalize_outputs(d.stats, back);
    EXPECT_LE(std::abs(again[0] - d.series.Y(r, 0)), 1e-12);
  }
}

TEST(Split, MeanGapIsStoredExactly) {
  Rng rng(4);
  std::vector<double> t{0.0};
  for (int i = 1; i < 400; ++i) t.push_back(t.back() + rng.uniform(0.05, 1.3));
  const auto d = split_normalize(ramp(400, t));
  double s = 0;
  for (std::size_t n = 0; n < d.train_end; ++n) s += t[n + 1] - t[n];
  EXPECT_EQ(d.mu_delta, s / static_cast<double>(d.train_end));
  EXPECT_EQ(d.mu_delta, mean_training_gap(d));
  double unit_root = 0;
  for (std::size_t n = 0; n < d.train_end; ++n) unit_root += 1.0 - d.delta(n) / d.mu_delta;
  EXPECT_LE(std::abs(unit_root / static_cast<double>(d.train_end)), 1e-12);
}

TEST(DeltaChannel, EvenSamplingGivesOnes) {
  const auto d = augment_delta_channel(split_normalize(ramp(40)));
  EXPECT_EQ(d.series.input_channels(), 2u);
  EXPECT_TRUE(d.delta_channel);
  for (std::size_t r = 0; r < d.size(); ++r) EXPECT_EQ(d.series.X(r, 1), 1.0);
}

TEST(DeltaChannel, GapRatios) {
  Dataset d;
  d.series.t = {0.0, 0.2, 0.6};
  d.series.X = Tensor(Shape{3, 1});
  d.series.Y = Tensor(Shape{3, 1});
  d.train_end = 2;
  d.val_end = 3;
  d.mu_delta = 0.2;
  const auto a = augment_delta_channel(d);
  EXPECT_DOUBLE_EQ(a.series.X(0, 1), 1.0);
  EXPECT_DOUBLE_EQ(a.series.X(1, 1), 2.0);
  EXPECT_DOUBLE_EQ(a.series.X(2, 1), 2.0);
}

TEST(Segments, CountsAndBounds) {
  Dataset d = split_normalize(ramp(143));  // train_end = 100
  ASSERT_EQ(d.train_end, 100u);
  EXPECT_EQ(make_segments(d, 20, 20).size(), 5u);
  EXPECT_EQ(make_segments(d, 20, 1).size(), 81u);
  Rng rng(1);
  for (int i = 0; i < 50; ++i) {
    const std::size_t L = 2 + rng.below(60), stride = 1 + rng.below(30);
    const auto seg = make_segments(d, L, stride);
    EXPECT_EQ(seg.starts.front(), 0u);
    for (auto s : seg.starts) EXPECT_LE(s + L, d.train_end);
    EXPECT_GT(seg.starts.back() + stride + L, d.train_end);
  }
  EXPECT_THROW(make_segments(d, 100, 1), DataError);
  EXPECT_THROW(make_segments(d, 1, 1), std::invalid_argument);
}

TEST(CanonicalCsv, RoundTripBitExact) {
  TempDir dir;
  Rng rng(8);
  TimeSeries s = ramp(30);
  for (auto& v : s.X.values()) v = rng.uniform(-1e3, 1e3) / 3.0;
  const std::string p = (dir.path / "s.csv").string();
  write_canonical_csv(p, s);
  const auto r = read_canonical_csv(p);
  EXPECT_EQ(r.t, s.t);
  EXPECT_EQ(r.X, s.X);
  EXPECT_EQ(r.Y, s.Y);
  EXPECT_EQ(series_digest(r), series_digest(s));
  std::ifstream in(p);
  std::string header;
  std::getline(in, header);
  EXPECT_EQ(header, "t,x1,y1");
}

TEST(CanonicalCsv, RejectsBadHeaderAndRows) {
  TempDir dir;
  EXPECT_THROW(read_canonical_csv(dir.file("h.csv", "time,x1,y1\n0,1,2\n1,2,3\n")), DataError);
  EXPECT_THROW(read_canonical_csv(dir.file("r.csv", "t,x1,y1\n0,1,2\n1,2\n")), DataError);
  EXPECT_THROW(read_canonical_csv(dir.file("n.csv", "t,x1\n0,1\n1,2\n")), DataError);
}

TEST(Digest, SensitiveToValues) {
  auto a = ramp(20), b = ramp(20);
  EXPECT_EQ(series_digest(a), series_digest(b));
  b.Y(3, 0) += 1e-12;
  EXPECT_NE(series_digest(a), series_digest(b));
  EXPECT_EQ(series_digest(a).size(), 16u);
}
