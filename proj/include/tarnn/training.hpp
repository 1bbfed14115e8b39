#pragma once

// Truncated BPTT over overlapping training windows with stateful
// initialization: after every epoch one forward pass over the training range
// supplies the (detached) initial state of each window.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "tarnn/data.hpp"
#include "tarnn/dynamics.hpp"
#include "tarnn/errors.hpp"
#include "tarnn/evaluation.hpp"
#include "tarnn/model.hpp"
#include "tarnn/rng.hpp"
#include "tarnn/tape.hpp"

namespace tarnn {

struct TrainConfig {
  std::string dataset;  ///< canonical CSV
  CellKind cell = CellKind::gru;
  Scheme scheme = Scheme::euler;
  Formulation formulation = Formulation::stationary;
  Interpolation interpolation = Interpolation::constant;
  std::size_t k = 20;
  std::size_t batch_size = 512;
  double lr = 0.001;
  std::size_t L = 20;
  std::size_t stride = 1;
  std::uint64_t seed = 0;
  std::size_t max_epochs = 2000;
  std::size_t patience = 100;
  double gamma = 1.0;
  double epsilon = 1.0;
  bool delta_channel = false;
  double p_missing = 0.0;
  std::uint64_t missing_seed = 0;
};

/// (batch size, state size, learning rate) tuned per dataset and cell.
struct Hyperparams {
  std::size_t batch_size;
  std::size_t k;
  double lr;
};

inline Hyperparams tuned_hyperparams(std::string_view dataset, CellKind cell) {
  if (dataset == "cstr") return cell == CellKind::gru ? Hyperparams{512, 20, 0.001} : Hyperparams{512, 100, 0.001};
  if (dataset == "winding") return cell == CellKind::gru ? Hyperparams{512, 10, 0.003} : Hyperparams{64, 10, 0.01};
  throw ConfigError("no tuned hyperparameters for dataset '" + std::string(dataset) + "'");
}

namespace detail {

inline std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r");
  const auto e = s.find_last_not_of(" \t\r");
  return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
}

inline std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  return h;
}

}  // namespace detail

inline const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys{
      "dataset", "cell",  "scheme", "formulation", "interpolation", "k",     "batch_size",
      "lr",      "L",     "stride", "seed",        "max_epochs",    "patience", "gamma",
      "epsilon", "delta_channel",   "p_missing",   "missing_seed"};
  return keys;
}

/// Canonical `key = value` text, one key per line in config_keys() order.
inline std::string to_config_text(const TrainConfig& c) {
  std::ostringstream os;
  os << "dataset = " << c.dataset << '\n'
     << "cell = " << to_string(c.cell) << '\n'
     << "scheme = " << to_string(c.scheme) << '\n'
     << "formulation = " << to_string(c.formulation) << '\n'
     << "interpolation = " << to_string(c.interpolation) << '\n'
     << "k = " << c.k << '\n'
     << "batch_size = " << c.batch_size << '\n'
     << "lr = " << format_double(c.lr) << '\n'
     << "L = " << c.L << '\n'
     << "stride = " << c.stride << '\n'
     << "seed = " << c.seed << '\n'
     << "max_epochs = " << c.max_epochs << '\n'
     << "patience = " << c.patience << '\n'
     << "gamma = " << format_double(c.gamma) << '\n'
     << "epsilon = " << format_double(c.epsilon) << '\n'
     << "delta_channel = " << (c.delta_channel ? 1 : 0) << '\n'
     << "p_missing = " << format_double(c.p_missing) << '\n'
     << "missing_seed = " << c.missing_seed << '\n';
  return os.str();
}

inline std::string config_digest(const TrainConfig& c) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(detail::fnv1a(to_config_text(c))));
  return buf;
}

/// Applies one key to a config. Throws ConfigError for unknown keys and bad values.
inline void set_config_value(TrainConfig& c, const std::string& key, const std::string& value) {
  auto as_size = [&](bool allow_zero = false) {
    std::size_t pos = 0;
    long long v = 0;
    try {
      v = std::stoll(value, &pos);
    } catch (const std::exception&) {
      pos = 0;
    }
    if (pos != value.size() || v < 0 || (!allow_zero && v == 0)) {
      throw ConfigError("config key '" + key + "': expected a " + (allow_zero ? "non-negative" : "positive") +
                        " integer, got '" + value + "'");
    }
    return static_cast<std::size_t>(v);
  };
  auto as_real = [&]() {
    char* end = nullptr;
    const double v = std::strtod(value.c_str(), &end);
    if (value.empty() || end != value.c_str() + value.size() || !std::isfinite(v)) {
      throw ConfigError("config key '" + key + "': expected a number, got '" + value + "'");
    }
    return v;
  };
  auto as_positive = [&]() {
    const double v = as_real();
    if (!(v > 0.0)) throw ConfigError("config key '" + key + "' must be positive");
    return v;
  };
  try {
    if (key == "dataset") c.dataset = value;
    else if (key == "cell") c.cell = parse_cell_kind(value);
    else if (key == "scheme") c.scheme = parse_scheme(value);
    else if (key == "formulation") c.formulation = parse_formulation(value);
    else if (key == "interpolation") c.interpolation = parse_interpolation(value);
    else if (key == "k") c.k = as_size();
    else if (key == "batch_size") c.batch_size = as_size();
    else if (key == "lr") c.lr = as_positive();
    else if (key == "L") {
      c.L = as_size();
      if (c.L < 2) throw ConfigError("config key 'L' must be at least 2");
    }
    else if (key == "stride") c.stride = as_size();
    else if (key == "seed") c.seed = as_size(true);
    else if (key == "max_epochs") c.max_epochs = as_size();
    else if (key == "patience") c.patience = as_size(true);
    else if (key == "gamma") {
      c.gamma = as_real();
      if (c.gamma < 0.0) throw ConfigError("config key 'gamma' must be non-negative");
    }
    else if (key == "epsilon") c.epsilon = as_positive();
    else if (key == "delta_channel") {
      if (value == "1" || value == "true") c.delta_channel = true;
      else if (value == "0" || value == "false") c.delta_channel = false;
      else throw ConfigError("config key 'delta_channel': expected 0|1|true|false");
    }
    else if (key == "p_missing") {
      c.p_missing = as_real();
      if (!(c.p_missing >= 0.0 && c.p_missing < 1.0)) throw ConfigError("config key 'p_missing' must lie in [0, 1)");
    }
    else if (key == "missing_seed") c.missing_seed = as_size(true);
    else throw ConfigError("unknown config key '" + key + "'");
  } catch (const std::invalid_argument& e) {
    if (dynamic_cast<const ConfigError*>(&e)) throw;
    throw ConfigError("config key '" + key + "': " + e.what());
  }
}

/// Parses flat `key = value` text. '#' starts a comment line. All unknown
/// keys are reported together.
inline TrainConfig parse_config(std::istream& in, const std::string& where = "<config>") {
  TrainConfig c;
  std::vector<std::string> unknown;
  std::set<std::string> seen;
  const auto& keys = config_keys();
  std::string line;
  for (std::size_t line_no = 1; std::getline(in, line); ++line_no) {
    const std::string t = detail::trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(where + ":" + std::to_string(line_no) + ": expected 'key = value'");
    }
    const std::string key = detail::trim(t.substr(0, eq));
    const std::string value = detail::trim(t.substr(eq + 1));
    if (std::find(keys.begin(), keys.end(), key) == keys.end()) {
      unknown.push_back(key);
      continue;
    }
    if (!seen.insert(key).second) {
      throw ConfigError(where + ":" + std::to_string(line_no) + ": duplicate key '" + key + "'");
    }
    set_config_value(c, key, value);
  }
  if (!unknown.empty()) {
    std::string msg = where + ": unknown config keys:";
    for (const auto& k : unknown) msg += " " + k;
    throw ConfigError(msg);
  }
  return c;
}

inline TrainConfig parse_config_text(const std::string& text) {
  std::istringstream is(text);
  return parse_config(is);
}

inline TrainConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path + ": cannot open config file");
  return parse_config(in, path);
}

/// Dataset as seen by training: optional subsampling, split/normalize and
/// the optional delta channel.
inline Dataset build_dataset(const TimeSeries& raw, double p_missing, std::uint64_t missing_seed,
                             bool delta_channel) {
  TimeSeries s = p_missing > 0.0 ? subsample_missing(raw, p_missing, missing_seed) : raw;
  Dataset d = split_normalize(s);
  return delta_channel ? augment_delta_channel(d) : d;
}

// ---------------------------------------------------------------------------

template <class V>
struct SegmentOutput {
  std::vector<V> predictions;  ///< predictions[i] targets row start + i + 1
  V h_final;
};

/// Runs L steps from row `start`. The window must end inside the training
/// range (start + L <= train_end).
template <class V>
SegmentOutput<V> forward_segment(const ModelView<V>& m, const Dataset& d, std::size_t start, std::size_t L,
                                 const V& h_init) {
  if (start + L > d.train_end) {
    throw std::out_of_range("forward_segment: window [" + std::to_string(start) + ", " +
                            std::to_string(start + L) + "] leaves the training range");
  }
  SegmentOutput<V> out;
  out.predictions.reserve(L);
  V h = h_init;
  for (std::size_t n = start; n < start + L; ++n) {
    h = advance(m, d, n, h);
    out.predictions.push_back(output_map(h, m.out));
  }
  out.h_final = h;
  return out;
}

/// State arriving at each window start, from one pass over the training
/// range beginning at the trained h0. Values are plain tensors, i.e.
/// detached from any gradient record.
inline std::vector<Tensor> refresh_segment_states(const ModelParams& model, const Dataset& d,
                                                  const SegmentIndex& segments) {
  std::vector<Tensor> states(segments.size());
  if (segments.size() == 0) return states;
  const std::size_t last = segments.starts.back();
  Rollout r = rollout_from(model, d, 0, model.h0, last, true);
  for (std::size_t i = 0; i < segments.size(); ++i) states[i] = r.states[segments.starts[i]];
  return states;
}

struct AdamState {
  std::vector<Tensor> m;
  std::vector<Tensor> v;
  std::uint64_t step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  AdamState() = default;
  explicit AdamState(const std::vector<Tensor*>& params) {
    for (const Tensor* p : params) {
      m.emplace_back(p->shape());
      v.emplace_back(p->shape());
    }
  }
};

/// Bias-corrected Adam step.
inline void adam_update(const std::vector<Tensor*>& params, const std::vector<Tensor>& grads, AdamState& st,
                        double lr) {
  if (params.size() != grads.size() || params.size() != st.m.size()) {
    throw ShapeError("adam_update: parameter, gradient and state counts differ");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i]->shape() != grads[i].shape() || grads[i].shape() != st.m[i].shape()) {
      throw ShapeError("adam_update: shape mismatch for parameter " + std::to_string(i) + ": " +
                       shape_string(params[i]->shape()) + " vs gradient " + shape_string(grads[i].shape()));
    }
  }
  ++st.step;
  const double c1 = 1.0 - std::pow(st.beta1, static_cast<double>(st.step));
  const double c2 = 1.0 - std::pow(st.beta2, static_cast<double>(st.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto p = params[i]->values().data();
    auto g = grads[i].values().data();
    auto m = st.m[i].values().data();
    auto v = st.v[i].values().data();
    for (std::size_t j = 0; j < grads[i].size(); ++j) {
      m[j] = st.beta1 * m[j] + (1.0 - st.beta1) * g[j];
      v[j] = st.beta2 * v[j] + (1.0 - st.beta2) * g[j] * g[j];
      const double mhat = m[j] / c1;
      const double vhat = v[j] / c2;
      p[j] -= lr * mhat / (std::sqrt(vhat) + st.eps);
    }
  }
}

inline std::vector<Tensor*> parameter_list(ModelParams& p) {
  std::vector<Tensor*> out;
  p.for_each_tensor([&](const std::string&, Tensor& t) { out.push_back(&t); });
  return out;
}

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_rrse = 0.0;
};

struct TrainHistory {
  double initial_train_loss = 0.0;
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;  ///< 0 means the initial parameters were best
  double best_val_rrse = std::numeric_limits<double>::infinity();
  std::string stop_reason;
};

struct TrainResult {
  ModelParams model;
  TrainHistory history;
};

/// Records one window on `tape` and returns its squared-error sum
/// (un-normalized). Gradients land on the leaves listed in `leaves`.
inline Var record_segment_loss(Tape& tape, const ModelParams& params, const Dataset& d, std::size_t start,
                               std::size_t L, const Tensor& stored_state, std::vector<Var>& leaves) {
  tape.clear();
  ModelView<Var> view = tape_view(params, tape, &leaves);
  // Only the window at the sequence start sees the trainable h0.
  const Var h_init = start == 0 ? view.h0 : tape.constant(stored_state);
  SegmentOutput<Var> out = forward_segment(view, d, start, L, h_init);
  const std::size_t k = d.series.output_channels();
  Var total{};
  for (std::size_t i = 0; i < L; ++i) {
    const std::size_t row = start + i + 1;
    Var target = tape.constant(Tensor(Shape{k}, std::vector<double>(d.series.Y.row(row).begin(),
                                                                     d.series.Y.row(row).end())));
    Var diff = sub(out.predictions[i], target);
    Var sq = sum(hadamard(diff, diff));
    total = i == 0 ? sq : add(total, sq);
  }
  return total;
}

/// Mean squared error over all windows (plain evaluation, no record).
inline double mean_segment_loss(const ModelParams& params, const Dataset& d, const SegmentIndex& seg,
                                const std::vector<Tensor>& states) {
  const ModelView<Tensor> view = plain_view(params);
  const std::size_t k = d.series.output_channels();
  double total = 0.0;
  for (std::size_t i = 0; i < seg.size(); ++i) {
    const std::size_t start = seg.starts[i];
    auto out = forward_segment(view, d, start, seg.length, start == 0 ? params.h0 : states[i]);
    for (std::size_t j = 0; j < seg.length; ++j) {
      for (std::size_t c = 0; c < k; ++c) {
        const double e = out.predictions[j][c] - d.series.Y(start + j + 1, c);
        total += e * e;
      }
    }
  }
  return total / static_cast<double>(seg.size() * seg.length * k);
}

inline ModelParams initial_model(const Dataset& d, const TrainConfig& c) {
  ModelDims dims{d.series.input_channels(), c.k, d.series.output_channels()};
  ModelParams p = init_params(c.seed, dims, c.cell, c.gamma, c.epsilon);
  p.meta.scheme = c.scheme;
  p.meta.formulation = c.formulation;
  p.meta.interpolation = c.interpolation;
  p.meta.delta_channel = d.delta_channel;
  p.meta.mu_delta = d.mu_delta;
  p.meta.p_missing = c.p_missing;
  p.meta.missing_seed = c.missing_seed;
  p.meta.stats = d.stats;
  p.meta.config_digest = config_digest(c);
  p.meta.seed = c.seed;
  return p;
}

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Trains one replica. Returns the parameters of the epoch with the lowest
/// validation RRSE. Throws DivergenceError on a non-finite loss.
inline TrainResult train(const Dataset& d, const TrainConfig& c, const EpochCallback& on_epoch = {},
                         std::string data_digest = {}) {
  const SegmentIndex seg = make_segments(d, c.L, c.stride);
  ModelParams params = initial_model(d, c);
  params.meta.data_digest = std::move(data_digest);
  std::vector<Tensor*> plist = parameter_list(params);
  AdamState adam(plist);
  Rng shuffle_rng(c.seed ^ 0x5deece66dull);

  TrainResult result;
  TrainHistory& hist = result.history;
  std::vector<Tensor> states = refresh_segment_states(params, d, seg);
  hist.initial_train_loss = mean_segment_loss(params, d, seg, states);
  hist.best_val_rrse = validation_rrse(params, d);
  result.model = params;

  Tape tape;
  std::vector<Var> leaves;
  std::vector<Tensor> grads;
  for (const Tensor* p : plist) grads.emplace_back(p->shape());
  std::vector<std::size_t> order(seg.size());
  const double per_window = static_cast<double>(seg.length * d.series.output_channels());

  std::size_t since_best = 0;
  hist.stop_reason = "max_epochs";
  for (std::size_t epoch = 1; epoch <= c.max_epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    shuffle_rng.shuffle(order);
    double epoch_sse = 0.0;
    for (std::size_t b0 = 0; b0 < order.size(); b0 += c.batch_size) {
      const std::size_t b1 = std::min(order.size(), b0 + c.batch_size);
      const double norm = 1.0 / (static_cast<double>(b1 - b0) * per_window);
      for (auto& g : grads) std::fill(g.values().begin(), g.values().end(), 0.0);
      for (std::size_t bi = b0; bi < b1; ++bi) {
        const std::size_t slot = order[bi];
        Var sse = record_segment_loss(tape, params, d, seg.starts[slot], seg.length, states[slot], leaves);
        Var loss = scale(sse, norm);
        epoch_sse += tape.value(sse)[0];
        tape.backward(loss);
        for (std::size_t i = 0; i < leaves.size(); ++i) {
          auto g = tape.grad(leaves[i]);
          auto& acc = grads[i].values();
          for (std::size_t j = 0; j < acc.size(); ++j) acc[j] += g[j];
        }
      }
      if (!std::isfinite(epoch_sse)) break;
      adam_update(plist, grads, adam, c.lr);
    }
    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = epoch_sse / (static_cast<double>(seg.size()) * per_window);
    if (!std::isfinite(rec.train_loss)) {
      throw DivergenceError("training diverged in epoch " + std::to_string(epoch) + " (non-finite loss)");
    }
    states = refresh_segment_states(params, d, seg);
    rec.val_rrse = validation_rrse(params, d);
    if (!std::isfinite(rec.val_rrse)) {
      throw DivergenceError("training diverged in epoch " + std::to_string(epoch) +
                            " (non-finite validation RRSE)");
    }
    hist.epochs.push_back(rec);
    if (on_epoch) on_epoch(rec);
    if (rec.val_rrse < hist.best_val_rrse) {
      hist.best_val_rrse = rec.val_rrse;
      hist.best_epoch = epoch;
      result.model = params;
      since_best = 0;
    } else if (++since_best > c.patience) {
      hist.stop_reason = "patience";
      break;
    }
  }
  result.model.meta.epochs = hist.epochs.size();
  return result;
}

}  // namespace tarnn
