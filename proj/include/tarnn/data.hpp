#pragma once

// Ingestion and preparation of input/output time series.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "tarnn/errors.hpp"
#include "tarnn/rng.hpp"
#include "tarnn/tensor.hpp"

namespace tarnn {

/// Observations: timestamps t[N], inputs X[N x k_x], outputs Y[N x k_y].
struct TimeSeries {
  std::vector<double> t;
  Tensor X;
  Tensor Y;

  std::size_t size() const { return t.size(); }
  std::size_t input_channels() const { return X.cols(); }
  std::size_t output_channels() const { return Y.cols(); }
};

struct ColumnSpec {
  std::optional<std::size_t> time_column;
  std::vector<std::size_t> inputs;
  std::vector<std::size_t> outputs;
};

/// Column layout of a known DaISy file.
struct DatasetPreset {
  std::string name;
  ColumnSpec columns;
  std::optional<double> sample_period;
  std::size_t expected_rows = 0;
};

inline const std::vector<DatasetPreset>& dataset_presets() {
  static const std::vector<DatasetPreset> presets{
      // time [min], coolant flow, concentration, temperature; 10 samples/min
      {"cstr", ColumnSpec{0, {1}, {2, 3}}, std::nullopt, 7500},
      // 3 reel speeds + 2 motor setpoint currents, 2 tensions; 10 samples/s
      {"winding", ColumnSpec{std::nullopt, {0, 1, 2, 3, 4}, {5, 6}}, 0.1, 2500},
  };
  return presets;
}

inline const DatasetPreset& find_preset(std::string_view name) {
  for (const auto& p : dataset_presets()) {
    if (p.name == name) return p;
  }
  std::string names;
  for (const auto& p : dataset_presets()) names += (names.empty() ? "" : ", ") + p.name;
  throw ConfigError("unknown dataset preset '" + std::string(name) + "' (available: " + names + ")");
}

namespace detail {

inline std::vector<double> parse_numbers(std::string_view line, char sep, const std::string& where,
                                         std::size_t line_no) {
  std::vector<double> out;
  std::size_t i = 0;
  auto is_sep = [sep](char ch) {
    return sep == ' ' ? (ch == ' ' || ch == '\t' || ch == '\r') : (ch == sep);
  };
  while (i < line.size()) {
    if (sep == ' ') {
      while (i < line.size() && is_sep(line[i])) ++i;
      if (i >= line.size()) break;
    }
    std::size_t j = i;
    while (j < line.size() && !is_sep(line[j])) ++j;
    std::string_view tok = line.substr(i, j - i);
    while (!tok.empty() && (tok.back() == '\r' || tok.back() == ' ')) tok.remove_suffix(1);
    while (!tok.empty() && tok.front() == ' ') tok.remove_prefix(1);
    if (!tok.empty() && tok.front() == '+') tok.remove_prefix(1);
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (tok.empty() || ec != std::errc() || ptr != tok.data() + tok.size() || !std::isfinite(v)) {
      throw DataError(where + ":" + std::to_string(line_no) + ": non-numeric token '" +
                      std::string(tok) + "'");
    }
    out.push_back(v);
    i = j + (sep == ' ' ? 0 : 1);
    if (sep != ' ' && j == line.size()) break;
  }
  return out;
}

inline bool is_blank_or_comment(std::string_view line) {
  auto p = line.find_first_not_of(" \t\r");
  return p == std::string_view::npos || line[p] == '#' || line[p] == '%';
}

inline void check_series(const TimeSeries& s, const std::string& where) {
  if (s.size() < 2) throw DataError(where + ": need at least 2 rows, got " + std::to_string(s.size()));
  for (std::size_t n = 1; n < s.size(); ++n) {
    if (!(s.t[n] > s.t[n - 1])) {
      throw DataError(where + ": timestamps not strictly increasing at row " + std::to_string(n));
    }
  }
}

}  // namespace detail

/// Reads whitespace-separated numeric columns. Lines starting with '#' or
/// '%' are skipped. Without a time column, t_n = n * sample_period.
inline TimeSeries load_daisy(const std::string& path, const ColumnSpec& columns,
                             std::optional<double> sample_period) {
  std::ifstream in(path);
  if (!in) throw DataError(path + ": cannot open file");
  if (!columns.time_column && !(sample_period && *sample_period > 0.0)) {
    throw DataError(path + ": a positive sample period is required when there is no time column");
  }
  if (columns.outputs.empty()) throw DataError(path + ": no output columns selected");

  std::vector<double> t, x, y;
  std::size_t width = 0;
  std::size_t rows = 0;
  std::string line;
  for (std::size_t line_no = 1; std::getline(in, line); ++line_no) {
    if (detail::is_blank_or_comment(line)) continue;
    std::vector<double> v = detail::parse_numbers(line, ' ', path, line_no);
    if (rows == 0) {
      width = v.size();
      std::size_t needed = 0;
      if (columns.time_column) needed = std::max(needed, *columns.time_column + 1);
      for (auto c : columns.inputs) needed = std::max(needed, c + 1);
      for (auto c : columns.outputs) needed = std::max(needed, c + 1);
      if (needed > width) {
        throw DataError(path + ":" + std::to_string(line_no) + ": missing required column " +
                        std::to_string(needed - 1) + " (row has " + std::to_string(width) +
                        " columns)");
      }
    } else if (v.size() != width) {
      throw DataError(path + ":" + std::to_string(line_no) + ": ragged row with " +
                      std::to_string(v.size()) + " columns, expected " + std::to_string(width));
    }
    t.push_back(columns.time_column ? v[*columns.time_column]
                                    : static_cast<double>(rows) * *sample_period);
    for (auto c : columns.inputs) x.push_back(v[c]);
    for (auto c : columns.outputs) y.push_back(v[c]);
    ++rows;
  }
  TimeSeries s;
  s.t = std::move(t);
  s.X = Tensor::matrix(rows, columns.inputs.size(), std::move(x));
  s.Y = Tensor::matrix(rows, columns.outputs.size(), std::move(y));
  detail::check_series(s, path);
  return s;
}

/// Keeps row 0 and each later row independently with probability 1 - p.
inline TimeSeries subsample_missing(const TimeSeries& series, double p_missing, std::uint64_t seed) {
  if (!(p_missing >= 0.0 && p_missing < 1.0)) {
    throw std::invalid_argument("subsample_missing: p_missing must lie in [0, 1), got " +
                                std::to_string(p_missing));
  }
  Rng rng(seed);
  std::vector<std::size_t> keep{0};
  for (std::size_t n = 1; n < series.size(); ++n) {
    if (rng.uniform() >= p_missing) keep.push_back(n);
  }
  const std::size_t kx = series.input_channels(), ky = series.output_channels();
  TimeSeries out;
  out.X = Tensor(Shape{keep.size(), kx});
  out.Y = Tensor(Shape{keep.size(), ky});
  for (std::size_t r = 0; r < keep.size(); ++r) {
    out.t.push_back(series.t[keep[r]]);
    std::copy_n(series.X.row(keep[r]).begin(), kx, out.X.row(r).begin());
    std::copy_n(series.Y.row(keep[r]).begin(), ky, out.Y.row(r).begin());
  }
  return out;
}

/// Per-channel training statistics (population standard deviation).
struct NormStats {
  std::vector<double> x_mean, x_std, y_mean, y_std;
};

struct Dataset {
  TimeSeries series;  ///< normalized
  std::size_t train_end = 0;  ///< rows [0, train_end) are training
  std::size_t val_end = 0;    ///< rows [train_end, val_end) validation, rest test
  double mu_delta = 0.0;      ///< mean gap t_{n+1} - t_n over n in [0, train_end)
  NormStats stats;
  std::size_t observed_inputs = 0;  ///< input channels before augmentation
  bool delta_channel = false;

  std::size_t size() const { return series.size(); }
  double delta(std::size_t n) const { return series.t[n + 1] - series.t[n]; }
};

enum class Split { train, validation, test };

inline std::string_view to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::validation: return "validation";
    case Split::test: return "test";
  }
  return "?";
}

inline Split parse_split(std::string_view s) {
  if (s == "train") return Split::train;
  if (s == "validation" || s == "val") return Split::validation;
  if (s == "test") return Split::test;
  throw std::invalid_argument("unknown split '" + std::string(s) + "' (expected train|validation|test)");
}

/// Row range [begin, end) of a split.
inline std::pair<std::size_t, std::size_t> split_rows(const Dataset& d, Split s) {
  switch (s) {
    case Split::train: return {0, d.train_end};
    case Split::validation: return {d.train_end, d.val_end};
    case Split::test: return {d.val_end, d.size()};
  }
  return {0, 0};
}

namespace detail {
inline void column_stats(const Tensor& m, std::size_t rows, const char* what,
                         std::vector<double>& mean, std::vector<double>& stdev) {
  const std::size_t k = m.cols();
  mean.assign(k, 0.0);
  stdev.assign(k, 0.0);
  for (std::size_t c = 0; c < k; ++c) {
    double s = 0.0;
    for (std::size_t r = 0; r < rows; ++r) s += m(r, c);
    mean[c] = s / static_cast<double>(rows);
    double ss = 0.0;
    for (std::size_t r = 0; r < rows; ++r) ss += (m(r, c) - mean[c]) * (m(r, c) - mean[c]);
    stdev[c] = std::sqrt(ss / static_cast<double>(rows));
    if (!(stdev[c] > 0.0)) {
      throw DataError(std::string("split_normalize: ") + what + " channel " + std::to_string(c + 1) +
                      " has zero variance in the training range");
    }
  }
}

inline void apply_norm(Tensor& m, const std::vector<double>& mean, const std::vector<double>& sd) {
  for (std::size_t r = 0; r < m.rows(); ++r) {
    for (std::size_t c = 0; c < m.cols(); ++c) m(r, c) = (m(r, c) - mean[c]) / sd[c];
  }
}
}  // namespace detail

/// Mean of the gaps t_{n+1} - t_n over n in [0, train_end).
inline double mean_training_gap(const Dataset& d) {
  double s = 0.0;
  for (std::size_t i = 0; i < d.train_end; ++i) s += d.delta(i);
  return s / static_cast<double>(d.train_end);
}

/// 70/15/15 split with training-range normalization of every channel.
inline Dataset split_normalize(const TimeSeries& series) {
  const std::size_t n = series.size();
  if (n < 20) throw DataError("split_normalize: need at least 20 rows, got " + std::to_string(n));
  Dataset d;
  d.train_end = n * 7 / 10;
  d.val_end = n * 85 / 100;
  d.series = series;
  d.observed_inputs = series.input_channels();
  detail::column_stats(series.X, d.train_end, "input", d.stats.x_mean, d.stats.x_std);
  detail::column_stats(series.Y, d.train_end, "output", d.stats.y_mean, d.stats.y_std);
  detail::apply_norm(d.series.X, d.stats.x_mean, d.stats.x_std);
  detail::apply_norm(d.series.Y, d.stats.y_mean, d.stats.y_std);
  d.mu_delta = mean_training_gap(d);
  return d;
}

/// Appends the input channel delta_n / mu_delta (the last row repeats the
/// previous gap). The channel is not normalized.
inline Dataset augment_delta_channel(const Dataset& d) {
  Dataset out = d;
  const std::size_t n = d.size(), kx = d.series.input_channels();
  Tensor X(Shape{n, kx + 1});
  for (std::size_t r = 0; r < n; ++r) {
    std::copy_n(d.series.X.row(r).begin(), kx, X.row(r).begin());
    const double gap = r + 1 < n ? d.delta(r) : d.delta(r - 1);
    X(r, kx) = gap / d.mu_delta;
  }
  out.series.X = std::move(X);
  out.delta_channel = true;
  return out;
}

inline std::vector<double> denormalize_outputs(const NormStats& s, std::span<const double> y) {
  std::vector<double> out(y.size());
  for (std::size_t c = 0; c < y.size(); ++c) out[c] = y[c] * s.y_std[c] + s.y_mean[c];
  return out;
}

inline std::vector<double> normalize_outputs(const NormStats& s, std::span<const double> y) {
  std::vector<double> out(y.size());
  for (std::size_t c = 0; c < y.size(); ++c) out[c] = (y[c] - s.y_mean[c]) / s.y_std[c];
  return out;
}

/// Training windows. Window i starts at row starts[i], runs L steps and
/// targets rows start+1 .. start+L; start + L <= train_end. Each window owns
/// initial-state slot i.
struct SegmentIndex {
  std::size_t length = 0;
  std::vector<std::size_t> starts;

  std::size_t size() const { return starts.size(); }
};

inline SegmentIndex make_segments(const Dataset& d, std::size_t L, std::size_t stride) {
  if (L < 2) throw std::invalid_argument("make_segments: window length must be >= 2");
  if (stride < 1) throw std::invalid_argument("make_segments: stride must be >= 1");
  if (d.train_end <= L) {
    throw DataError("make_segments: training range (" + std::to_string(d.train_end) +
                    " rows) is shorter than the window length " + std::to_string(L));
  }
  SegmentIndex seg;
  seg.length = L;
  for (std::size_t s = 0; s + L <= d.train_end; s += stride) seg.starts.push_back(s);
  return seg;
}

// Canonical CSV: header t,x1..xK,y1..yM then one row per sample.

inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline void write_canonical_csv(std::ostream& os, const TimeSeries& s) {
  os << 't';
  for (std::size_t c = 0; c < s.input_channels(); ++c) os << ",x" << c + 1;
  for (std::size_t c = 0; c < s.output_channels(); ++c) os << ",y" << c + 1;
  os << '\n';
  for (std::size_t r = 0; r < s.size(); ++r) {
    os << format_double(s.t[r]);
    for (double v : s.X.row(r)) os << ',' << format_double(v);
    for (double v : s.Y.row(r)) os << ',' << format_double(v);
    os << '\n';
  }
}

inline void write_canonical_csv(const std::string& path, const TimeSeries& s) {
  std::ofstream os(path);
  if (!os) throw DataError(path + ": cannot open for writing");
  write_canonical_csv(os, s);
  if (!os) throw DataError(path + ": write failed");
}

inline TimeSeries read_canonical_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError(path + ": cannot open file");
  std::string header;
  if (!std::getline(in, header)) throw DataError(path + ":1: empty file");
  if (!header.empty() && header.back() == '\r') header.pop_back();
  std::size_t kx = 0, ky = 0;
  {
    std::stringstream hs(header);
    std::string name;
    std::size_t col = 0;
    while (std::getline(hs, name, ',')) {
      const bool ok = (col == 0 && name == "t") ||
                      (col > 0 && ky == 0 && name == "x" + std::to_string(kx + 1)) ||
                      (col > 0 && name == "y" + std::to_string(ky + 1));
      if (!ok) throw DataError(path + ":1: unexpected header column '" + name + "'");
      if (name[0] == 'x') ++kx;
      if (name[0] == 'y') ++ky;
      ++col;
    }
  }
  if (ky == 0) throw DataError(path + ":1: header has no output columns");
  std::vector<double> t, x, y;
  std::string line;
  std::size_t rows = 0;
  for (std::size_t line_no = 2; std::getline(in, line); ++line_no) {
    if (detail::is_blank_or_comment(line)) continue;
    auto v = detail::parse_numbers(line, ',', path, line_no);
    if (v.size() != 1 + kx + ky) {
      throw DataError(path + ":" + std::to_string(line_no) + ": ragged row with " +
                      std::to_string(v.size()) + " columns, expected " + std::to_string(1 + kx + ky));
    }
    t.push_back(v[0]);
    x.insert(x.end(), v.begin() + 1, v.begin() + 1 + static_cast<std::ptrdiff_t>(kx));
    y.insert(y.end(), v.begin() + 1 + static_cast<std::ptrdiff_t>(kx), v.end());
    ++rows;
  }
  TimeSeries s;
  s.t = std::move(t);
  s.X = Tensor::matrix(rows, kx, std::move(x));
  s.Y = Tensor::matrix(rows, ky, std::move(y));
  detail::check_series(s, path);
  return s;
}

/// FNV-1a over the dimensions and the bit patterns of every value.
inline std::string series_digest(const TimeSeries& s) {
  std::uint64_t h = 1469598103934665603ull;
  auto mix = [&h](std::uint64_t v) {
    for (int i = 0; i < 8; ++i) {
      h ^= (v >> (8 * i)) & 0xffu;
      h *= 1099511628211ull;
    }
  };
  auto mix_d = [&mix](double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, sizeof bits);
    mix(bits);
  };
  mix(s.size());
  mix(s.input_channels());
  mix(s.output_channels());
  for (double v : s.t) mix_d(v);
  for (double v : s.X.values()) mix_d(v);
  for (double v : s.Y.values()) mix_d(v);
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace tarnn
