#pragma once

// Full-sequence rollout, the RRSE metric and multi-seed aggregation.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "tarnn/data.hpp"
#include "tarnn/dynamics.hpp"
#include "tarnn/errors.hpp"
#include "tarnn/model.hpp"

namespace tarnn {

/// Predictions of a rollout. Row n of `predictions` is G(h_{n+1}), the
/// prediction for target row n+1; `states[n]` is h_n (states[0] = start).
struct Rollout {
  std::size_t first_row = 0;
  Tensor predictions;
  std::vector<Tensor> states;
};

/// Steps from `first_row` with state `h_start` until the state of `end_row`
/// is known (end_row <= N-1). Prediction count is end_row - first_row.
inline Rollout rollout_from(const ModelParams& model, const Dataset& d, std::size_t first_row,
                            const Tensor& h_start, std::size_t end_row, bool keep_states = false) {
  if (end_row >= d.size() || first_row > end_row) {
    throw std::out_of_range("rollout: bad row range [" + std::to_string(first_row) + ", " +
                            std::to_string(end_row) + "]");
  }
  const ModelView<Tensor> view = plain_view(model);
  Rollout r;
  r.first_row = first_row;
  r.predictions = Tensor(Shape{end_row - first_row, model.dims.k_out});
  Tensor h = h_start;
  if (keep_states) r.states.push_back(h);
  for (std::size_t n = first_row; n < end_row; ++n) {
    h = advance(view, d, n, h);
    const Tensor y = output_map(h, view.out);
    std::copy(y.values().begin(), y.values().end(), r.predictions.row(n - first_row).begin());
    if (keep_states) r.states.push_back(h);
  }
  return r;
}

/// Full-sequence rollout from the trained initial state: N-1 predictions.
inline Rollout rollout(const ModelParams& model, const Dataset& d, bool keep_states = false) {
  return rollout_from(model, d, 0, model.h0, d.size() - 1, keep_states);
}

struct EvalReport {
  std::vector<double> channel_rrse;  ///< percent
  double mean_rrse = 0.0;            ///< percent
  Split split = Split::test;
  std::size_t steps = 0;
};

/// Root relative squared error per channel, in percent:
/// sqrt(sum (yhat - y)^2 / sum (y - mean(y))^2) * 100, mean(y) over the rows given.
inline EvalReport rrse(const Tensor& predictions, const Tensor& targets, std::size_t channel_count) {
  if (predictions.shape() != targets.shape() || predictions.rank() != 2 ||
      predictions.cols() != channel_count) {
    throw ShapeError("rrse: predictions " + shape_string(predictions.shape()) + " and targets " +
                     shape_string(targets.shape()) + " do not align with " +
                     std::to_string(channel_count) + " channels");
  }
  const std::size_t n = targets.rows();
  if (n == 0) throw std::invalid_argument("rrse: no rows to evaluate");
  EvalReport rep;
  rep.steps = n;
  for (std::size_t c = 0; c < channel_count; ++c) {
    double mean = 0.0;
    for (std::size_t r = 0; r < n; ++r) mean += targets(r, c);
    mean /= static_cast<double>(n);
    double num = 0.0, den = 0.0;
    for (std::size_t r = 0; r < n; ++r) {
      num += (predictions(r, c) - targets(r, c)) * (predictions(r, c) - targets(r, c));
      den += (targets(r, c) - mean) * (targets(r, c) - mean);
    }
    if (!(den > 0.0)) {
      throw std::domain_error("rrse: target channel " + std::to_string(c + 1) +
                              " is constant over the evaluated rows");
    }
    rep.channel_rrse.push_back(100.0 * std::sqrt(num / den));
  }
  rep.mean_rrse = std::accumulate(rep.channel_rrse.begin(), rep.channel_rrse.end(), 0.0) /
                  static_cast<double>(channel_count);
  return rep;
}

/// Predictions and targets whose target row lies in [begin, end).
struct AlignedSplit {
  std::vector<std::size_t> target_rows;
  Tensor predictions;
  Tensor targets;
};

inline AlignedSplit align_split(const Rollout& r, const Dataset& d, std::size_t begin, std::size_t end) {
  const std::size_t k = d.series.output_channels();
  const std::size_t first_target = std::max(begin, r.first_row + 1);
  const std::size_t last_target = std::min(end, r.first_row + r.predictions.rows() + 1);
  AlignedSplit a;
  const std::size_t n = last_target > first_target ? last_target - first_target : 0;
  a.predictions = Tensor(Shape{n, k});
  a.targets = Tensor(Shape{n, k});
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t row = first_target + i;
    a.target_rows.push_back(row);
    std::copy_n(r.predictions.row(row - r.first_row - 1).begin(), k, a.predictions.row(i).begin());
    std::copy_n(d.series.Y.row(row).begin(), k, a.targets.row(i).begin());
  }
  return a;
}

inline EvalReport evaluate_split(const Rollout& r, const Dataset& d, Split split) {
  auto [b, e] = split_rows(d, split);
  AlignedSplit a = align_split(r, d, b, e);
  EvalReport rep = rrse(a.predictions, a.targets, d.series.output_channels());
  rep.split = split;
  return rep;
}

inline EvalReport evaluate_split(const ModelParams& model, const Dataset& d, Split split) {
  return evaluate_split(rollout(model, d), d, split);
}

/// Validation RRSE from a rollout that stops at the end of the validation range.
inline double validation_rrse(const ModelParams& model, const Dataset& d) {
  const Rollout r = rollout_from(model, d, 0, model.h0, d.val_end - 1);
  return evaluate_split(r, d, Split::validation).mean_rrse;
}

/// Mean and sample standard deviation of mean-RRSE over completed runs.
struct RunAggregate {
  double mean = 0.0;
  std::optional<double> stdev;  ///< absent with a single run
  std::size_t completed = 0;
  std::size_t failures = 0;
  std::vector<std::uint64_t> seeds;
};

inline RunAggregate aggregate(const std::vector<EvalReport>& reports, std::size_t failures = 0,
                              std::vector<std::uint64_t> seeds = {}) {
  if (reports.empty()) throw std::invalid_argument("aggregate: no completed runs");
  RunAggregate a;
  a.completed = reports.size();
  a.failures = failures;
  a.seeds = std::move(seeds);
  // Sorting makes the result independent of run order.
  std::vector<double> v;
  for (const auto& r : reports) v.push_back(r.mean_rrse);
  std::sort(v.begin(), v.end());
  const double n = static_cast<double>(v.size());
  a.mean = std::accumulate(v.begin(), v.end(), 0.0) / n;
  if (v.size() >= 2) {
    double ss = 0.0;
    for (double x : v) ss += (x - a.mean) * (x - a.mean);
    a.stdev = std::sqrt(ss / (n - 1.0));
  }
  return a;
}

/// CSV `t,y_true_1..M,y_pred_1..M` in original output units.
inline void write_prediction_dump(const std::string& path, const Rollout& r, const Dataset& d, Split split) {
  auto [b, e] = split_rows(d, split);
  AlignedSplit a = align_split(r, d, b, e);
  std::ofstream os(path);
  if (!os) throw DataError(path + ": cannot open for writing");
  const std::size_t k = d.series.output_channels();
  os << 't';
  for (std::size_t c = 0; c < k; ++c) os << ",y_true_" << c + 1;
  for (std::size_t c = 0; c < k; ++c) os << ",y_pred_" << c + 1;
  os << '\n';
  for (std::size_t i = 0; i < a.target_rows.size(); ++i) {
    os << format_double(d.series.t[a.target_rows[i]]);
    for (double v : denormalize_outputs(d.stats, a.targets.row(i))) os << ',' << format_double(v);
    for (double v : denormalize_outputs(d.stats, a.predictions.row(i))) os << ',' << format_double(v);
    os << '\n';
  }
}

}  // namespace tarnn
