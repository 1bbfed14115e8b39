#pragma once

// Built-in reproduction suites: each row is one training configuration run
// over five seeds and summarized as mean +- std of test RRSE.

#include <algorithm>
#include <atomic>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "tarnn/data.hpp"
#include "tarnn/evaluation.hpp"
#include "tarnn/training.hpp"

namespace tarnn {

struct RunConfig {
  std::string name;     ///< unique row id, e.g. "cstr/gru-ignore-missing"
  std::string dataset;  ///< preset name
  TrainConfig train;    ///< dataset path filled in at run time
  double reference_mean = 0.0;
  double reference_std = 0.0;
};

struct BenchmarkSuite {
  std::string name;
  std::vector<RunConfig> configs;
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
};

/// One missing-data realization per dataset, shared by all training seeds.
inline constexpr std::uint64_t kMissingSeed = 20200207;
inline constexpr double kMissingProbability = 0.5;

namespace detail {

inline RunConfig make_run(const std::string& dataset, const std::string& label, CellKind cell, Scheme scheme,
                          Formulation form, Interpolation interp, bool missing, bool delta, double reference_mean,
                          double reference_std) {
  RunConfig r;
  r.name = dataset + "/" + label;
  r.dataset = dataset;
  const Hyperparams hp = tuned_hyperparams(dataset, cell);
  TrainConfig& c = r.train;
  c.cell = cell;
  c.scheme = scheme;
  c.formulation = form;
  c.interpolation = interp;
  c.k = hp.k;
  c.batch_size = hp.batch_size;
  c.lr = hp.lr;
  c.delta_channel = delta;
  c.p_missing = missing ? kMissingProbability : 0.0;
  c.missing_seed = missing ? kMissingSeed : 0;
  r.reference_mean = reference_mean;
  r.reference_std = reference_std;
  return r;
}

struct ReferenceRow {
  double mean, stdev;
};

inline BenchmarkSuite table3(const std::string& ds) {
  const bool cstr = ds == "cstr";
  auto v = [cstr](ReferenceRow a, ReferenceRow b) { return cstr ? a : b; };
  const auto E = Scheme::euler;
  const auto C = Interpolation::constant;
  BenchmarkSuite s;
  s.name = "table3-" + ds;
  auto add = [&](const std::string& label, CellKind cell, Formulation f, bool missing, bool delta, ReferenceRow p) {
    s.configs.push_back(make_run(ds, label, cell, E, f, C, missing, delta, p.mean, p.stdev));
  };
  add("gru-standard-full", CellKind::gru, Formulation::ignore_time, false, false, v({2.2, 0.5}, {20.1, 0.6}));
  add("asrnn-stationary-full", CellKind::asrnn, Formulation::stationary, false, false, v({2.5, 0.2}, {27.4, 3.9}));
  add("gru-ignore-missing", CellKind::gru, Formulation::ignore_time, true, false, v({10.8, 0.6}, {30.2, 0.4}));
  add("gru-extra-delta", CellKind::gru, Formulation::ignore_time, true, true, v({9.2, 1.4}, {28.9, 1.7}));
  add("gru-non-stationary", CellKind::gru, Formulation::non_stationary, true, false, v({79.7, 8.0}, {64.8, 10.2}));
  add("asrnn-non-stationary", CellKind::asrnn, Formulation::non_stationary, true, false,
      v({12.3, 1.1}, {41.5, 7.4}));
  return s;
}

inline BenchmarkSuite table4(const std::string& ds) {
  BenchmarkSuite s;
  s.name = "table4-" + ds;
  const std::vector<Scheme> schemes{Scheme::euler, Scheme::midpoint, Scheme::kutta3, Scheme::rk4};
  const std::map<std::string, ReferenceRow> reference{
      {"cstr/euler/constant", {12.1, 1.3}},    {"cstr/midpoint/constant", {11.0, 4.1}},
      {"cstr/kutta3/constant", {9.9, 4.7}},    {"cstr/rk4/constant", {8.0, 0.4}},
      {"winding/euler/constant", {33.1, 0.6}}, {"winding/midpoint/constant", {35.3, 2.1}},
      {"winding/kutta3/constant", {34.7, 4.3}}, {"winding/rk4/constant", {32.2, 6.6}},
      {"winding/euler/linear", {33.1, 0.6}},   {"winding/midpoint/linear", {28.2, 1.8}},
      {"winding/kutta3/linear", {27.1, 1.0}},  {"winding/rk4/linear", {25.6, 1.4}},
  };
  std::vector<Interpolation> interps{Interpolation::constant};
  if (ds == "winding") interps.push_back(Interpolation::linear);
  for (auto interp : interps) {
    for (auto sch : schemes) {
      const std::string key = ds + "/" + std::string(to_string(sch)) + "/" + std::string(to_string(interp));
      const ReferenceRow p = reference.at(key);
      s.configs.push_back(make_run(ds, "gru-stationary-" + std::string(to_string(sch)) + "-" +
                                           std::string(to_string(interp)),
                                   CellKind::gru, sch, Formulation::stationary, interp, true, false, p.mean, p.stdev));
    }
  }
  return s;
}

}  // namespace detail

inline std::vector<std::string> suite_names() {
  return {"table3-cstr", "table3-winding", "table4-cstr", "table4-winding"};
}

inline BenchmarkSuite find_suite(const std::string& name) {
  if (name == "table3-cstr") return detail::table3("cstr");
  if (name == "table3-winding") return detail::table3("winding");
  if (name == "table4-cstr") return detail::table4("cstr");
  if (name == "table4-winding") return detail::table4("winding");
  std::string names;
  for (const auto& n : suite_names()) names += (names.empty() ? "" : ", ") + n;
  throw ConfigError("unknown benchmark suite '" + name + "' (available: " + names + ")");
}

/// Raw DaISy files expected in the data directory, per preset.
inline std::string raw_data_path(const std::string& data_dir, const std::string& preset) {
  return (std::filesystem::path(data_dir) / (preset + ".dat")).string();
}

/// Files a suite needs that are not present.
inline std::vector<std::string> missing_data_files(const BenchmarkSuite& suite, const std::string& data_dir) {
  std::vector<std::string> missing;
  for (const auto& rc : suite.configs) {
    const std::string p = raw_data_path(data_dir, rc.dataset);
    if (!std::filesystem::exists(p) && std::find(missing.begin(), missing.end(), p) == missing.end()) {
      missing.push_back(p);
    }
  }
  return missing;
}

struct BenchmarkRow {
  std::string config;
  std::string cell, scheme, formulation, interp;
  double mean_rrse = 0.0;
  double std_rrse = 0.0;
  std::size_t failures = 0;
  std::string pass = "n/a";
};

struct BenchmarkOptions {
  std::string data_dir = "data";
  std::size_t jobs = 1;
  std::optional<std::size_t> max_epochs;  ///< overrides the configured budget
  std::optional<std::size_t> patience;
  std::function<void(const std::string&)> log;
};

/// Runs every config x seed of a suite. Replicas are independent, so the
/// numbers do not depend on `jobs`.
inline std::vector<BenchmarkRow> run_suite(const BenchmarkSuite& suite, const BenchmarkOptions& opt) {
  const auto missing = missing_data_files(suite, opt.data_dir);
  if (!missing.empty()) {
    std::string msg = "missing data files:";
    for (const auto& m : missing) msg += " " + m;
    throw DataError(msg);
  }
  std::map<std::string, TimeSeries> raw;
  std::map<std::string, std::string> digests;
  for (const auto& rc : suite.configs) {
    if (raw.count(rc.dataset)) continue;
    const DatasetPreset& preset = find_preset(rc.dataset);
    TimeSeries s = load_daisy(raw_data_path(opt.data_dir, rc.dataset), preset.columns, preset.sample_period);
    if (opt.log && s.size() != preset.expected_rows) {
      opt.log("warning: " + rc.dataset + " has " + std::to_string(s.size()) + " rows, expected " +
              std::to_string(preset.expected_rows));
    }
    digests[rc.dataset] = series_digest(s);
    raw.emplace(rc.dataset, std::move(s));
  }

  struct Task {
    std::size_t config;
    std::uint64_t seed;
  };
  std::vector<Task> tasks;
  for (std::size_t i = 0; i < suite.configs.size(); ++i) {
    for (auto seed : suite.seeds) tasks.push_back({i, seed});
  }
  std::vector<std::optional<EvalReport>> results(tasks.size());
  std::atomic<std::size_t> next{0};
  std::mutex log_mu;
  auto worker = [&]() {
    for (std::size_t t; (t = next.fetch_add(1)) < tasks.size();) {
      const RunConfig& rc = suite.configs[tasks[t].config];
      TrainConfig c = rc.train;
      c.seed = tasks[t].seed;
      if (opt.max_epochs) c.max_epochs = *opt.max_epochs;
      if (opt.patience) c.patience = *opt.patience;
      const Dataset d = build_dataset(raw.at(rc.dataset), c.p_missing, c.missing_seed, c.delta_channel);
      try {
        TrainResult res = train(d, c, {}, digests.at(rc.dataset));
        results[t] = evaluate_split(res.model, d, Split::test);
        if (opt.log) {
          std::lock_guard lock(log_mu);
          opt.log(rc.name + " seed " + std::to_string(c.seed) + ": test RRSE " +
                  format_double(results[t]->mean_rrse) + "% after " +
                  std::to_string(res.history.epochs.size()) + " epochs");
        }
      } catch (const DivergenceError& e) {
        if (opt.log) {
          std::lock_guard lock(log_mu);
          opt.log(rc.name + " seed " + std::to_string(c.seed) + ": " + e.what());
        }
      }
    }
  };
  const std::size_t jobs = std::max<std::size_t>(1, std::min(opt.jobs, tasks.size()));
  std::vector<std::thread> pool;
  for (std::size_t j = 1; j < jobs; ++j) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();

  std::vector<BenchmarkRow> rows;
  for (std::size_t i = 0; i < suite.configs.size(); ++i) {
    const RunConfig& rc = suite.configs[i];
    std::vector<EvalReport> done;
    std::vector<std::uint64_t> seeds;
    std::size_t failures = 0;
    for (std::size_t t = 0; t < tasks.size(); ++t) {
      if (tasks[t].config != i) continue;
      if (results[t]) {
        done.push_back(*results[t]);
        seeds.push_back(tasks[t].seed);
      } else {
        ++failures;
      }
    }
    BenchmarkRow row;
    row.config = rc.name;
    row.cell = to_string(rc.train.cell);
    row.scheme = to_string(rc.train.scheme);
    row.formulation = to_string(rc.train.formulation);
    row.interp = to_string(rc.train.interpolation);
    row.failures = failures;
    if (!done.empty()) {
      const RunAggregate a = aggregate(done, failures, seeds);
      row.mean_rrse = a.mean;
      row.std_rrse = a.stdev.value_or(0.0);
    } else {
      row.mean_rrse = std::numeric_limits<double>::quiet_NaN();
      row.std_rrse = std::numeric_limits<double>::quiet_NaN();
    }
    rows.push_back(row);
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Acceptance bands over benchmark rows.

enum class CriterionStatus { pass, fail, missing };

struct CriterionResult {
  int id = 0;
  std::string description;
  bool hard = false;  ///< ordering gates; absolute bands are soft
  CriterionStatus status = CriterionStatus::missing;
  std::string detail;
  std::vector<std::string> rows;  ///< configs the criterion reads
};

inline std::vector<CriterionResult> evaluate_criteria(const std::map<std::string, double>& mean_rrse) {
  std::vector<CriterionResult> out;
  auto get = [&](const std::string& k) -> std::optional<double> {
    auto it = mean_rrse.find(k);
    if (it == mean_rrse.end() || !std::isfinite(it->second)) return std::nullopt;
    return it->second;
  };
  auto check = [&](int id, bool hard, std::string desc, std::vector<std::string> rows,
                   const std::function<bool(const std::vector<double>&, std::string&)>& pred) {
    CriterionResult r;
    r.id = id;
    r.hard = hard;
    r.description = std::move(desc);
    r.rows = rows;
    std::vector<double> vals;
    for (const auto& k : rows) {
      auto v = get(k);
      if (!v) {
        r.status = CriterionStatus::missing;
        r.detail = "no result for " + k;
        out.push_back(r);
        return;
      }
      vals.push_back(*v);
    }
    r.status = pred(vals, r.detail) ? CriterionStatus::pass : CriterionStatus::fail;
    out.push_back(r);
  };
  auto fmt = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return std::string(buf);
  };

  check(8, false, "standard GRU, full CSTR: mean test RRSE <= 6%", {"cstr/gru-standard-full"},
        [&](const auto& v, std::string& d) { d = fmt(v[0]) + "%"; return v[0] <= 6.0; });
  check(9, false, "standard GRU, full Winding: mean test RRSE <= 30%", {"winding/gru-standard-full"},
        [&](const auto& v, std::string& d) { d = fmt(v[0]) + "%"; return v[0] <= 30.0; });
  check(10, false, "GRU ignore-missing, CSTR p=0.5: mean test RRSE in [6%, 20%]", {"cstr/gru-ignore-missing"},
        [&](const auto& v, std::string& d) { d = fmt(v[0]) + "%"; return v[0] >= 6.0 && v[0] <= 20.0; });
  check(11, true, "CSTR: non-stationary GRU >= 2x stationary Euler GRU",
        {"cstr/gru-non-stationary", "cstr/gru-stationary-euler-constant"},
        [&](const auto& v, std::string& d) {
          d = fmt(v[0]) + "% vs 2 x " + fmt(v[1]) + "%";
          return v[0] >= 2.0 * v[1];
        });
  check(12, true, "CSTR constant interpolation: RK4 < Euler",
        {"cstr/gru-stationary-rk4-constant", "cstr/gru-stationary-euler-constant"},
        [&](const auto& v, std::string& d) { d = fmt(v[0]) + "% vs " + fmt(v[1]) + "%"; return v[0] < v[1]; });
  check(13, true, "Winding: linear < constant for midpoint/kutta3/rk4, and RK4-linear < Euler",
        {"winding/gru-stationary-midpoint-linear", "winding/gru-stationary-midpoint-constant",
         "winding/gru-stationary-kutta3-linear", "winding/gru-stationary-kutta3-constant",
         "winding/gru-stationary-rk4-linear", "winding/gru-stationary-rk4-constant",
         "winding/gru-stationary-euler-constant"},
        [&](const auto& v, std::string& d) {
          d = "midpoint " + fmt(v[0]) + "/" + fmt(v[1]) + ", kutta3 " + fmt(v[2]) + "/" + fmt(v[3]) + ", rk4 " +
              fmt(v[4]) + "/" + fmt(v[5]) + ", euler " + fmt(v[6]);
          return v[0] < v[1] && v[2] < v[3] && v[4] < v[5] && v[4] < v[6];
        });
  check(14, false, "CSTR: extra-delta-input <= ignore-missing + 1 point",
        {"cstr/gru-extra-delta", "cstr/gru-ignore-missing"},
        [&](const auto& v, std::string& d) { d = fmt(v[0]) + "% vs " + fmt(v[1]) + "%"; return v[0] <= v[1] + 1.0; });
  return out;
}

inline std::string benchmark_header() {
  return "config,cell,scheme,formulation,interp,mean_rrse,std_rrse,failures,pass";
}

inline std::vector<BenchmarkRow> read_benchmark_csv(const std::string& path) {
  std::vector<BenchmarkRow> rows;
  std::ifstream in(path);
  if (!in) return rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line == benchmark_header()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (f.size() != 9) throw DataError(path + ": malformed benchmark row '" + line + "'");
    BenchmarkRow r{f[0], f[1], f[2], f[3], f[4], std::strtod(f[5].c_str(), nullptr),
                   std::strtod(f[6].c_str(), nullptr), std::stoul(f[7]), f[8]};
    rows.push_back(r);
  }
  return rows;
}

/// Latest mean per config.
inline std::map<std::string, double> row_means(const std::vector<BenchmarkRow>& rows) {
  std::map<std::string, double> m;
  for (const auto& r : rows) m[r.config] = r.mean_rrse;
  return m;
}

/// Marks each new row pass/fail from the criteria it takes part in, using
/// previously written rows as context.
inline void mark_rows(std::vector<BenchmarkRow>& rows, const std::vector<BenchmarkRow>& previous) {
  std::vector<BenchmarkRow> all = previous;
  all.insert(all.end(), rows.begin(), rows.end());
  const auto crit = evaluate_criteria(row_means(all));
  for (auto& r : rows) {
    bool any = false, ok = true;
    for (const auto& c : crit) {
      if (std::find(c.rows.begin(), c.rows.end(), r.config) == c.rows.end()) continue;
      if (c.status == CriterionStatus::missing) continue;
      any = true;
      ok = ok && c.status == CriterionStatus::pass;
    }
    r.pass = any ? (ok ? "pass" : "fail") : "n/a";
  }
}

inline void append_benchmark_csv(const std::string& path, const std::vector<BenchmarkRow>& rows) {
  const bool fresh = !std::filesystem::exists(path) || std::filesystem::file_size(path) == 0;
  std::ofstream os(path, std::ios::app);
  if (!os) throw DataError(path + ": cannot open for writing");
  if (fresh) os << benchmark_header() << '\n';
  for (const auto& r : rows) {
    os << r.config << ',' << r.cell << ',' << r.scheme << ',' << r.formulation << ',' << r.interp << ','
       << format_double(r.mean_rrse) << ',' << format_double(r.std_rrse) << ',' << r.failures << ',' << r.pass
       << '\n';
  }
}

}  // namespace tarnn
