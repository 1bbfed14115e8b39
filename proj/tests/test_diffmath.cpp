#include <gtest/gtest.h>

#include <cmath>

#include "tarnn/checks.hpp"
#include "tarnn/diffmath.hpp"
#include "tarnn/rng.hpp"

using namespace tarnn;

TEST(Tensor, MatvecIdentity) {
  EXPECT_EQ(matvec(Tensor::identity(2), Tensor::vector({3, -1})), Tensor::vector({3, -1}));
}

TEST(Tensor, MatvecHandArithmetic) {
  EXPECT_EQ(matvec(Tensor::matrix({{1, 2}, {0, 1}}), Tensor::vector({1, 1})), Tensor::vector({3, 1}));
}

TEST(Tensor, MatvecMatchesLoopOracle) {
  Rng rng(7);
  Tensor W(Shape{5, 3});
  Tensor v(Shape{3});
  for (auto& x : W.values()) x = rng.uniform(-2, 2);
  for (auto& x : v.values()) x = rng.uniform(-2, 2);
  const Tensor y = matvec(W, v);
  for (std::size_t i = 0; i < 5; ++i) {
    double s = 0;
    for (std::size_t j = 0; j < 3; ++j) s += W.values()[i * 3 + j] * v.values()[j];
    EXPECT_NEAR(y[i], s, 1e-15);
  }
}

TEST(Tensor, MatvecShapeMismatchNamesShapes) {
  try {
    matvec(Tensor(Shape{2, 3}), Tensor(Shape{2}));
    FAIL();
  } catch (const ShapeError& e) {
    EXPECT_NE(std::string(e.what()).find("[2x3]"), std::string::npos) << e.what();
  }
}

TEST(Tensor, Elementwise) {
  EXPECT_EQ(tanh(Tensor(Shape{3})), Tensor(Shape{3}));
  EXPECT_EQ(sigmoid(Tensor(Shape{3})), Tensor(Shape{3}, 0.5));
  EXPECT_EQ(hadamard(Tensor::vector({2, 3}), Tensor::vector({4, -1})), Tensor::vector({8, -3}));
  EXPECT_THROW(add(Tensor(Shape{2}), Tensor(Shape{3})), ShapeError);
  EXPECT_EQ(gate_mix(Tensor::vector({0, 1, 0.5}), Tensor::vector({2, 2, 2}), Tensor::vector({4, 4, 4})),
            Tensor::vector({2, 4, 3}));
}

TEST(Tensor, SkewConstruction) {
  const Tensor A = skew(Tensor::matrix({{0, 1}, {0, 0}}), 0.1);
  EXPECT_EQ(A, Tensor::matrix({{-0.1, 1}, {-1, -0.1}}));
}

TEST(Tape, SquareGradient) {
  Tape tape;
  Var v = tape.leaf(Tensor::vector({3}));
  tape.backward(sum(hadamard(v, v)));
  EXPECT_EQ(tape.grad(v)[0], 6.0);
}

TEST(Tape, MatvecWeightGradientIsOuterProduct) {
  Tape tape;
  const Tensor Wt = Tensor::matrix({{0.3, -1.2, 0.7}, {2.0, 0.1, -0.4}});
  const Tensor vt = Tensor::vector({0.5, -2.0, 1.5});
  Var W = tape.leaf(Wt);
  Var v = tape.leaf(vt);
  tape.backward(sum(matvec(W, v)));
  auto f = [&](std::span<const double> p) {
    return sum(matvec(Tensor::matrix(2, 3, {p.begin(), p.end()}), vt)).item();
  };
  const auto fd = finite_difference_gradient(f, Wt.values(), 1e-5);
  auto g = tape.grad(W);
  for (std::size_t i = 0; i < 6; ++i) {
    EXPECT_NEAR(g[i], vt[i % 3], 1e-15);
    EXPECT_NEAR(g[i], fd[i], 1e-9);
  }
}

TEST(Tape, DisconnectedLeafHasZeroGradient) {
  Tape tape;
  Var a = tape.leaf(Tensor::vector({1, 2}));
  Var b = tape.leaf(Tensor::vector({5, 6}));
  tape.backward(sum(tanh(a)));
  EXPECT_EQ(tape.grad(b)[0], 0.0);
  EXPECT_EQ(tape.grad(b)[1], 0.0);
  EXPECT_EQ(tape.gradients().size(), 2u);
}

TEST(Tape, NonScalarLossRejected) {
  Tape tape;
  Var a = tape.leaf(Tensor::vector({1, 2}));
  EXPECT_THROW(tape.backward(tanh(a)), ShapeError);
}

TEST(Tape, ConstantsAreNotTrainable) {
  Tape tape;
  Var a = tape.leaf(Tensor::vector({1, 2}));
  Var c = tape.constant(Tensor::vector({3, 4}));
  tape.backward(sum(hadamard(a, c)));
  const auto g = tape.gradients();
  EXPECT_EQ(g.size(), 1u);
  EXPECT_EQ(g.at(a.id), Tensor::vector({3, 4}));
}

TEST(Tape, ForwardValuesMatchPlainOps) {
  Rng rng(3);
  Tensor x(Shape{4}), W(Shape{4, 4});
  for (auto& v : x.values()) v = rng.uniform(-1, 1);
  for (auto& v : W.values()) v = rng.uniform(-1, 1);
  Tape tape;
  Var xv = tape.leaf(x), Wv = tape.leaf(W);
  Var y = gate_mix(sigmoid(xv), tanh(matvec(Wv, xv)), axpby(0.3, xv, -2.0, matvec(skew(Wv, 0.2), xv)));
  const Tensor ref = gate_mix(sigmoid(x), tanh(matvec(W, x)), axpby(0.3, x, -2.0, matvec(skew(W, 0.2), x)));
  EXPECT_EQ(tape.tensor(y), ref);
}

TEST(Tape, SweepOrdersAgree) {
  for (std::uint64_t s = 1; s <= 5; ++s) {
    Rng rng(s);
    Tensor x(Shape{3}), W(Shape{3, 3});
    for (auto& v : x.values()) v = rng.uniform(-1, 1);
    for (auto& v : W.values()) v = rng.uniform(-1, 1);
    auto run = [&](SweepOrder order) {
      Tape tape;
      Var xv = tape.leaf(x), Wv = tape.leaf(W);
      Var h = xv;
      for (int i = 0; i < 4; ++i) h = axpby(0.5, h, 0.5, tanh(matvec(Wv, h)));
      tape.backward(sum(hadamard(h, h)), order);
      EXPECT_EQ(tape.last_sweep_visits(), tape.entry_count());
      return tape.gradients();
    };
    const auto a = run(SweepOrder::reverse_record);
    const auto b = run(SweepOrder::depth_first);
    ASSERT_EQ(a.size(), b.size());
    for (const auto& [id, g] : a) {
      for (std::size_t i = 0; i < g.size(); ++i) EXPECT_NEAR(g[i], b.at(id)[i], 1e-12);
    }
  }
}

TEST(Tape, LossSumGradientIsSumOfGradients) {
  const Tensor x = Tensor::vector({0.3, -0.8, 1.1});
  auto grad_of = [&](auto&& loss_fn) {
    Tape tape;
    Var v = tape.leaf(x);
    tape.backward(loss_fn(v));
    return Tensor::vector(std::vector<double>(tape.grad(v).begin(), tape.grad(v).end()));
  };
  auto f1 = [](Var v) { return sum(tanh(v)); };
  auto f2 = [](Var v) { return sum(hadamard(sigmoid(v), v)); };
  const Tensor g1 = grad_of(f1), g2 = grad_of(f2);
  const Tensor g12 = grad_of([&](Var v) { return add(f1(v), f2(v)); });
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(g12[i], g1[i] + g2[i], 1e-15);
}

TEST(FiniteDifference, Square) {
  auto g = finite_difference_gradient([](std::span<const double> p) { return p[0] * p[0]; }, {3.0}, 1e-5);
  EXPECT_NEAR(g[0], 6.0, 1e-8);
}

TEST(FiniteDifference, Tanh) {
  auto g = finite_difference_gradient([](std::span<const double> p) { return std::tanh(p[0]); }, {0.5}, 1e-5);
  EXPECT_NEAR(g[0], 0.786448, 1e-6);
}

TEST(FiniteDifference, ConstantFunction) {
  auto g = finite_difference_gradient([](std::span<const double>) { return 4.2; }, {1.0, 2.0, 3.0}, 1e-5);
  for (double v : g) EXPECT_EQ(v, 0.0);
}

TEST(FiniteDifference, RejectsNonPositiveStep) {
  EXPECT_THROW(finite_difference_gradient([](std::span<const double>) { return 0.0; }, {1.0}, 0.0),
               std::invalid_argument);
}

TEST(GradCheck, ComponentsOverTwentyDraws) {
  for (std::uint64_t s = 1; s <= 20; ++s) {
    for (const auto& g : {gradcheck_gru(s), gradcheck_asrnn(s), gradcheck_embed(s), gradcheck_output(s)}) {
      EXPECT_TRUE(g.pass) << g.name << " seed " << s << " err " << g.max_rel_error;
    }
  }
}

TEST(GradCheck, Rk4StationaryRollout) {
  for (std::uint64_t s = 1; s <= 20; ++s) {
    auto g = gradcheck_rollout(s, CellKind::gru, Scheme::rk4, Formulation::stationary, Interpolation::constant);
    EXPECT_TRUE(g.pass) << g.name << " seed " << s << " err " << g.max_rel_error;
  }
}

TEST(Rng, DeterministicAndBounded) {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) {
    const double u = a.uniform();
    EXPECT_EQ(u, b.uniform());
    EXPECT_GE(u, 0.0);
    EXPECT_LT(u, 1.0);
    EXPECT_LT(a.below(7), 7u);
    b.below(7);
  }
}
