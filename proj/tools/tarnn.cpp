// tarnn command-line front end.
//
// Exit codes: 0 ok, 1 usage/config error, 2 data error, 3 divergence,
// 4 failed acceptance band or self-check.

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "tarnn/tarnn.hpp"

using namespace tarnn;
using nlohmann::ordered_json;

namespace {

enum Exit { kOk = 0, kUsage = 1, kData = 2, kDiverged = 3, kBandFailed = 4 };

std::vector<std::size_t> parse_columns(const std::string& s) {
  std::vector<std::size_t> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    try {
      std::size_t pos = 0;
      const long v = std::stol(tok, &pos);
      if (pos != tok.size() || v < 0) throw std::invalid_argument(tok);
      out.push_back(static_cast<std::size_t>(v));
    } catch (const std::exception&) {
      throw ConfigError("bad column list '" + s + "'");
    }
  }
  return out;
}

// --- prepare ---------------------------------------------------------------

struct PrepareArgs {
  std::string input, out, preset;
  std::optional<long> time_col;
  std::string inputs, outputs;
  std::optional<double> period;
  double p_missing = 0.0;
  std::uint64_t seed = kMissingSeed;
};

int cmd_prepare(const PrepareArgs& a) {
  if (!(a.p_missing >= 0.0 && a.p_missing < 1.0)) {
    throw ConfigError("--p-missing must lie in [0, 1), got " + format_double(a.p_missing));
  }
  ColumnSpec cols;
  std::optional<double> period = a.period;
  std::optional<std::size_t> expected;
  if (!a.preset.empty()) {
    const DatasetPreset& p = find_preset(a.preset);
    cols = p.columns;
    if (!period) period = p.sample_period;
    expected = p.expected_rows;
  } else {
    if (a.inputs.empty() || a.outputs.empty()) {
      throw ConfigError("prepare needs --preset or both --inputs and --outputs");
    }
    if (a.time_col) cols.time_column = static_cast<std::size_t>(*a.time_col);
    cols.inputs = parse_columns(a.inputs);
    cols.outputs = parse_columns(a.outputs);
  }
  const TimeSeries raw = load_daisy(a.input, cols, period);
  if (expected && raw.size() != *expected) {
    std::cerr << "warning: " << a.input << " has " << raw.size() << " rows, the " << a.preset
              << " preset expects " << *expected << '\n';
  }
  const TimeSeries s = a.p_missing > 0.0 ? subsample_missing(raw, a.p_missing, a.seed) : raw;
  write_canonical_csv(a.out, s);

  double dmin = s.t[1] - s.t[0], dmax = dmin;
  for (std::size_t i = 1; i + 1 < s.size(); ++i) {
    dmin = std::min(dmin, s.t[i + 1] - s.t[i]);
    dmax = std::max(dmax, s.t[i + 1] - s.t[i]);
  }
  const std::size_t train_end = s.size() * 7 / 10;
  double mu = 0.0;
  for (std::size_t i = 0; i < std::max<std::size_t>(train_end, 1); ++i) mu += s.t[i + 1] - s.t[i];
  mu /= static_cast<double>(std::max<std::size_t>(train_end, 1));
  std::cout << "rows read:       " << raw.size() << '\n'
            << "rows retained:   " << s.size() << '\n'
            << "mu_delta:        " << format_double(mu) << '\n'
            << "min delta:       " << format_double(dmin) << '\n'
            << "max delta:       " << format_double(dmax) << '\n'
            << "digest:          " << series_digest(s) << '\n'
            << "wrote " << a.out << '\n';
  return kOk;
}

// --- train -----------------------------------------------------------------

struct TrainArgs {
  std::string config, out, history;
  std::vector<std::string> overrides;
  bool quiet = false;
};

ordered_json history_json(const TrainHistory& h) {
  ordered_json j;
  j["initial_train_loss"] = h.initial_train_loss;
  j["best_epoch"] = h.best_epoch;
  j["best_val_rrse"] = h.best_val_rrse;
  j["stop_reason"] = h.stop_reason;
  j["epochs"] = ordered_json::array();
  for (const auto& e : h.epochs) {
    j["epochs"].push_back({{"epoch", e.epoch}, {"train_loss", e.train_loss}, {"val_rrse", e.val_rrse}});
  }
  return j;
}

int cmd_train(const TrainArgs& a) {
  TrainConfig c = load_config(a.config);
  for (const auto& kv : a.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
    set_config_value(c, detail::trim(kv.substr(0, eq)), detail::trim(kv.substr(eq + 1)));
  }
  if (c.dataset.empty()) throw ConfigError(a.config + ": config key 'dataset' is required");
  std::filesystem::path data_path(c.dataset);
  if (data_path.is_relative() && !std::filesystem::exists(data_path)) {
    data_path = std::filesystem::path(a.config).parent_path() / data_path;
  }
  const TimeSeries raw = read_canonical_csv(data_path.string());
  const Dataset d = build_dataset(raw, c.p_missing, c.missing_seed, c.delta_channel);

  auto log = [&](const EpochRecord& r) {
    if (a.quiet) return;
    if (r.epoch == 1 || r.epoch % 10 == 0) {
      std::fprintf(stderr, "epoch %zu  train_loss %.6g  val_rrse %.4g%%\n", r.epoch, r.train_loss, r.val_rrse);
    }
  };
  TrainResult res = train(d, c, log, series_digest(raw));
  save_model(a.out, res.model);
  const std::string hist_path = a.history.empty() ? a.out + ".history.json" : a.history;
  {
    std::ofstream os(hist_path);
    if (!os) throw DataError(hist_path + ": cannot open for writing");
    os << history_json(res.history).dump(2) << '\n';
  }
  std::cout << "epochs:          " << res.history.epochs.size() << " (" << res.history.stop_reason << ")\n"
            << "best epoch:      " << res.history.best_epoch << '\n'
            << "best val RRSE:   " << format_double(res.history.best_val_rrse) << "%\n"
            << "wrote " << a.out << " and " << hist_path << '\n';
  return kOk;
}

// --- evaluate --------------------------------------------------------------

struct EvalArgs {
  std::string model, data, split = "test", dump;
};

int cmd_evaluate(const EvalArgs& a) {
  const ModelParams m = load_model(a.model);
  const TimeSeries raw = read_canonical_csv(a.data);
  const std::size_t kx = raw.input_channels() + (m.meta.delta_channel ? 1 : 0);
  if (raw.output_channels() != m.dims.k_out || kx != m.dims.k_x_raw) {
    throw DataError("model expects " + std::to_string(m.dims.k_x_raw) + " input and " +
                    std::to_string(m.dims.k_out) + " output channels, " + a.data + " provides " +
                    std::to_string(kx) + " and " + std::to_string(raw.output_channels()));
  }
  const std::string digest = series_digest(raw);
  if (!m.meta.data_digest.empty() && digest != m.meta.data_digest) {
    throw DataError(a.data + ": data digest " + digest + " does not match the model's training data (" +
                    m.meta.data_digest + ")");
  }
  const Dataset d = build_dataset(raw, m.meta.p_missing, m.meta.missing_seed, m.meta.delta_channel);
  if (d.mu_delta != m.meta.mu_delta || d.stats.y_mean != m.meta.stats.y_mean ||
      d.stats.y_std != m.meta.stats.y_std || d.stats.x_mean != m.meta.stats.x_mean ||
      d.stats.x_std != m.meta.stats.x_std) {
    throw DataError(a.data + ": normalization differs from the one stored in the model");
  }
  const Split split = parse_split(a.split);
  const Rollout r = rollout(m, d);
  const EvalReport rep = evaluate_split(r, d, split);
  ordered_json j;
  j["split"] = std::string(to_string(split));
  j["config_digest"] = m.meta.config_digest;
  j["seed"] = m.meta.seed;
  j["epochs"] = m.meta.epochs;
  j["steps"] = rep.steps;
  j["mean_rrse_percent"] = rep.mean_rrse;
  j["channel_rrse_percent"] = rep.channel_rrse;
  std::cout << j.dump(2) << '\n';
  if (!a.dump.empty()) write_prediction_dump(a.dump, r, d, split);
  return kOk;
}

// --- benchmark -------------------------------------------------------------

struct BenchArgs {
  std::string suite, data_dir = "data", out = "benchmark.csv";
  std::size_t jobs = 1;
  std::optional<std::size_t> max_epochs, patience;
};

const char* status_word(CriterionStatus s) {
  switch (s) {
    case CriterionStatus::pass: return "PASS";
    case CriterionStatus::fail: return "FAIL";
    case CriterionStatus::missing: return "----";
  }
  return "?";
}

int cmd_benchmark(const BenchArgs& a) {
  const BenchmarkSuite suite = find_suite(a.suite);
  const auto missing = missing_data_files(suite, a.data_dir);
  if (!missing.empty()) {
    std::cerr << "missing data files for suite " << a.suite << ":\n";
    for (const auto& m : missing) std::cerr << "  " << m << '\n';
    return kData;
  }
  if (a.max_epochs || a.patience) {
    std::cerr << "note: epoch budget overridden; results are not comparable with the acceptance bands\n";
  }
  BenchmarkOptions opt;
  opt.data_dir = a.data_dir;
  opt.jobs = a.jobs;
  opt.max_epochs = a.max_epochs;
  opt.patience = a.patience;
  opt.log = [](const std::string& s) { std::cerr << s << '\n'; };
  std::vector<BenchmarkRow> rows = run_suite(suite, opt);
  const auto previous = read_benchmark_csv(a.out);
  mark_rows(rows, previous);
  append_benchmark_csv(a.out, rows);

  std::printf("%-42s %10s %10s %8s %6s\n", "config", "mean_rrse", "std_rrse", "failures", "band");
  for (const auto& r : rows) {
    std::printf("%-42s %10.3f %10.3f %8zu %6s\n", r.config.c_str(), r.mean_rrse, r.std_rrse, r.failures,
                r.pass.c_str());
  }
  std::vector<BenchmarkRow> all = previous;
  all.insert(all.end(), rows.begin(), rows.end());
  bool failed = false;
  for (const auto& c : evaluate_criteria(row_means(all))) {
    std::printf("[%s] %2d %s %s: %s\n", status_word(c.status), c.id, c.hard ? "(hard)" : "(soft)",
                c.description.c_str(), c.detail.c_str());
    if (c.status == CriterionStatus::fail) {
      bool touched = false;
      for (const auto& r : rows) touched |= std::find(c.rows.begin(), c.rows.end(), r.config) != c.rows.end();
      failed |= touched;
    }
  }
  std::printf("appended %zu rows to %s\n", rows.size(), a.out.c_str());
  return failed ? kBandFailed : kOk;
}

// --- self checks -----------------------------------------------------------

int cmd_gradcheck(std::size_t draws) {
  bool ok = true;
  for (const auto& g : gradcheck_suite(draws)) {
    std::printf("[%s] %-52s params %4zu  max rel err %.3e\n", g.pass ? "PASS" : "FAIL", g.name.c_str(),
                g.parameters, g.max_rel_error);
    ok = ok && g.pass;
  }
  std::printf("gradient checks %s (tolerance %.0e)\n", ok ? "passed" : "FAILED", kGradTolerance);
  return ok ? kOk : kBandFailed;
}

int cmd_ordercheck() {
  bool ok = true;
  for (const auto& c : ordercheck_suite()) {
    std::printf("[%s] %-9s expected order %d  fitted slope %.4f  errors", c.pass ? "PASS" : "FAIL",
                std::string(to_string(c.scheme)).c_str(), c.expected, c.estimate.slope);
    for (double e : c.estimate.errors) std::printf(" %.3e", e);
    std::printf("\n");
    ok = ok && c.pass;
  }
  return ok ? kOk : kBandFailed;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"tarnn: recurrent models on unevenly sampled input/output data"};
  app.require_subcommand(1);

  PrepareArgs pa;
  auto* prep = app.add_subcommand("prepare", "Parse a raw DaISy file into the canonical CSV");
  prep->add_option("input", pa.input, "Raw whitespace-separated file")->required();
  prep->add_option("-o,--out", pa.out, "Output CSV")->required();
  prep->add_option("--preset", pa.preset, "Column preset (cstr, winding)");
  prep->add_option("--time-col", pa.time_col, "Time column index");
  prep->add_option("--inputs", pa.inputs, "Input column indices, comma separated");
  prep->add_option("--outputs", pa.outputs, "Output column indices, comma separated");
  prep->add_option("--period", pa.period, "Sample period when there is no time column");
  prep->add_option("--p-missing", pa.p_missing, "Probability of dropping each row after the first");
  prep->add_option("--seed", pa.seed, "Subsampling seed");

  TrainArgs ta;
  auto* trn = app.add_subcommand("train", "Train a model from a config file");
  trn->add_option("config", ta.config, "Config file (key = value lines)")->required();
  trn->add_option("-o,--out", ta.out, "Model file to write")->required();
  trn->add_option("--history", ta.history, "History JSON (default <out>.history.json)");
  trn->add_option("--set", ta.overrides, "Override a config key, key=value");
  trn->add_flag("-q,--quiet", ta.quiet, "No per-epoch progress");

  EvalArgs ea;
  auto* ev = app.add_subcommand("evaluate", "RRSE of a model on a split");
  ev->add_option("model", ea.model, "Model file")->required();
  ev->add_option("data", ea.data, "Canonical CSV the model was trained on")->required();
  ev->add_option("--split", ea.split, "train, validation or test");
  ev->add_option("--dump", ea.dump, "Write t,y_true,y_pred CSV for the split");

  BenchArgs ba;
  auto* bench = app.add_subcommand("benchmark", "Run a built-in suite over five seeds");
  bench->add_option("suite", ba.suite, "table3-cstr, table3-winding, table4-cstr, table4-winding")->required();
  bench->add_option("--data-dir", ba.data_dir, "Directory holding cstr.dat and winding.dat");
  bench->add_option("-o,--out", ba.out, "Benchmark CSV (appended)");
  bench->add_option("-j,--jobs", ba.jobs, "Parallel replicas")->check(CLI::PositiveNumber);
  bench->add_option("--max-epochs", ba.max_epochs, "Override the epoch budget (smoke runs only)");
  bench->add_option("--patience", ba.patience, "Override early-stopping patience (smoke runs only)");

  std::size_t draws = 20;
  auto* gc = app.add_subcommand("gradcheck", "Analytic vs finite-difference gradients");
  gc->add_option("--draws", draws, "Random draws per component check")->check(CLI::PositiveNumber);
  auto* oc = app.add_subcommand("ordercheck", "Convergence order of each tableau on dh/dt = -h");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  }

  try {
    if (*prep) return cmd_prepare(pa);
    if (*trn) return cmd_train(ta);
    if (*ev) return cmd_evaluate(ea);
    if (*bench) return cmd_benchmark(ba);
    if (*gc) return cmd_gradcheck(draws);
    if (*oc) return cmd_ordercheck();
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const DivergenceError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kDiverged;
  } catch (const DataError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kData;
  } catch (const ShapeError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  }
  return kUsage;
}
