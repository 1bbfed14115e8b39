#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <unistd.h>

#include "tarnn/checks.hpp"
#include "tarnn/evaluation.hpp"
#include "tarnn/training.hpp"

using namespace tarnn;

namespace {

ModelParams zero_model(const Dataset& d, Tensor b_o) {
  ModelParams p = init_params(1, ModelDims{d.series.input_channels(), 3, d.series.output_channels()}, CellKind::gru);
  auto flat = p.flatten();
  std::fill(flat.begin(), flat.end(), 0.0);
  p.unflatten(flat);
  p.out.b_o = std::move(b_o);
  p.meta.mu_delta = d.mu_delta;
  return p;
}

}  // namespace

TEST(Rrse, PerfectPredictionIsZero) {
  const Tensor y = Tensor::matrix({{1, 2}, {3, -1}, {0.5, 4}});
  const auto r = rrse(y, y, 2);
  EXPECT_EQ(r.mean_rrse, 0.0);
  EXPECT_EQ(r.channel_rrse, (std::vector<double>{0.0, 0.0}));
}

TEST(Rrse, MeanPredictorIsHundred) {
  const Tensor y = Tensor::matrix({{1, 2}, {3, -1}, {0.5, 4}, {2, 2}});
  Tensor m(Shape{4, 2});
  for (std::size_t c = 0; c < 2; ++c) {
    double s = 0;
    for (std::size_t r = 0; r < 4; ++r) s += y(r, c);
    for (std::size_t r = 0; r < 4; ++r) m(r, c) = s / 4;
  }
  const auto r = rrse(m, y, 2);
  EXPECT_NEAR(r.channel_rrse[0], 100.0, 1e-12);
  EXPECT_NEAR(r.channel_rrse[1], 100.0, 1e-12);
}

TEST(Rrse, HandArithmetic) {
  const auto r = rrse(Tensor::matrix({{1}, {1}}), Tensor::matrix({{0}, {2}}), 1);
  EXPECT_DOUBLE_EQ(r.mean_rrse, 100.0);
}

TEST(Rrse, AffineInvariance) {
  Rng rng(6);
  Tensor y(Shape{50, 2}), p(Shape{50, 2});
  for (auto& v : y.values()) v = rng.uniform(-1, 1);
  for (std::size_t i = 0; i < y.size(); ++i) p.values()[i] = y.values()[i] + rng.uniform(-0.3, 0.3);
  const auto base = rrse(p, y, 2);
  const double a[2] = {3.7, -0.02}, b[2] = {-120.0, 5.5};
  Tensor y2 = y, p2 = p;
  for (std::size_t r = 0; r < 50; ++r) {
    for (std::size_t c = 0; c < 2; ++c) {
      y2(r, c) = a[c] * y(r, c) + b[c];
      p2(r, c) = a[c] * p(r, c) + b[c];
    }
  }
  const auto moved = rrse(p2, y2, 2);
  for (std::size_t c = 0; c < 2; ++c) EXPECT_LE(std::abs(moved.channel_rrse[c] - base.channel_rrse[c]), 1e-12);
}

TEST(Rrse, Contracts) {
  EXPECT_THROW(rrse(Tensor(Shape{3, 2}), Tensor(Shape{3, 1}), 1), ShapeError);
  EXPECT_THROW(rrse(Tensor(Shape{3, 1}), Tensor(Shape{3, 1}), 1), std::domain_error);
}

TEST(Aggregate, MeanAndSampleStd) {
  std::vector<EvalReport> reps(3);
  reps[0].mean_rrse = 10;
  reps[1].mean_rrse = 12;
  reps[2].mean_rrse = 14;
  const auto a = aggregate(reps);
  EXPECT_DOUBLE_EQ(a.mean, 12.0);
  ASSERT_TRUE(a.stdev.has_value());
  EXPECT_DOUBLE_EQ(*a.stdev, 2.0);
  std::reverse(reps.begin(), reps.end());
  const auto b = aggregate(reps);
  EXPECT_EQ(b.mean, a.mean);
  EXPECT_EQ(*b.stdev, *a.stdev);
}

TEST(Aggregate, SingleRunHasNoStd) {
  std::vector<EvalReport> reps(1);
  reps[0].mean_rrse = 7;
  const auto a = aggregate(reps, 4);
  EXPECT_EQ(a.mean, 7.0);
  EXPECT_FALSE(a.stdev.has_value());
  EXPECT_EQ(a.failures, 4u);
  EXPECT_THROW(aggregate({}), std::invalid_argument);
}

TEST(Rollout, LengthAndZeroModel) {
  const Dataset d = detail::toy_dataset(3, 60);
  const ModelParams p = zero_model(d, Tensor::vector({0.25, -1.5}));
  const Rollout r = rollout(p, d);
  EXPECT_EQ(r.predictions.rows(), d.size() - 1);
  for (std::size_t i = 0; i < r.predictions.rows(); ++i) {
    EXPECT_EQ(r.predictions(i, 0), 0.25);
    EXPECT_EQ(r.predictions(i, 1), -1.5);
  }
}

TEST(Rollout, MatchesStoredSegmentStates) {
  const Dataset d = detail::toy_dataset(4, 80);
  const ModelParams p = init_params(2, ModelDims{2, 4, 2}, CellKind::gru);
  ModelParams q = p;
  q.meta.mu_delta = d.mu_delta;
  q.meta.formulation = Formulation::stationary;
  q.meta.scheme = Scheme::midpoint;
  const auto seg = make_segments(d, 5, 3);
  const auto states = refresh_segment_states(q, d, seg);
  const Rollout r = rollout(q, d, true);
  for (std::size_t i = 0; i < seg.size(); ++i) EXPECT_EQ(states[i], r.states[seg.starts[i]]);
  EXPECT_EQ(states[0], q.h0);
}

TEST(Evaluate, SplitsAlignTargets) {
  const Dataset d = detail::toy_dataset(5, 100);
  ModelParams p = init_params(2, ModelDims{2, 4, 2}, CellKind::gru);
  p.meta.mu_delta = d.mu_delta;
  const Rollout r = rollout(p, d);
  auto [b, e] = split_rows(d, Split::test);
  const AlignedSplit a = align_split(r, d, b, e);
  EXPECT_EQ(a.target_rows.front(), d.val_end);
  EXPECT_EQ(a.target_rows.back(), d.size() - 1);
  const auto train = evaluate_split(r, d, Split::train);
  EXPECT_EQ(train.steps, d.train_end - 1);  // row 0 has no prediction
  const double val_full = evaluate_split(r, d, Split::validation).mean_rrse;
  EXPECT_EQ(validation_rrse(p, d), val_full);
}

TEST(Evaluate, PredictionDump) {
  const Dataset d = detail::toy_dataset(5, 100);
  ModelParams p = init_params(2, ModelDims{2, 4, 2}, CellKind::gru);
  p.meta.mu_delta = d.mu_delta;
  const auto path = std::filesystem::temp_directory_path() / ("tarnn_dump_" + std::to_string(::getpid()) + ".csv");
  write_prediction_dump(path.string(), rollout(p, d), d, Split::test);
  std::ifstream in(path);
  std::string header;
  std::getline(in, header);
  EXPECT_EQ(header, "t,y_true_1,y_true_2,y_pred_1,y_pred_2");
  std::size_t rows = 0;
  for (std::string line; std::getline(in, line);) ++rows;
  EXPECT_EQ(rows, d.size() - d.val_end);
  std::filesystem::remove(path);
}
