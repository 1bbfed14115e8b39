#pragma once

// Self-checks shared by the CLI and the test suites: analytic gradients
// against central differences, and convergence order of the tableaus.

#include <cmath>
#include <string>
#include <vector>

#include "tarnn/cells.hpp"
#include "tarnn/diffmath.hpp"
#include "tarnn/integrators.hpp"
#include "tarnn/rng.hpp"
#include "tarnn/training.hpp"

namespace tarnn {

struct GradCheck {
  std::string name;
  double max_rel_error = 0.0;
  std::size_t parameters = 0;
  bool pass = false;
};

inline constexpr double kGradTolerance = 1e-4;
inline constexpr double kFdStep = 1e-5;

/// Compares tape gradients of build(inputs) with central differences.
/// `build` is called with std::vector<Tensor> and std::vector<Var> and must
/// return a scalar of the same backend.
template <class Build>
GradCheck check_gradient(std::string name, const std::vector<Tensor>& inputs, Build&& build,
                         double tol = kGradTolerance) {
  Tape tape;
  std::vector<Var> leaves;
  for (const auto& t : inputs) leaves.push_back(tape.leaf(t));
  const Var loss = build(leaves);
  tape.backward(loss);
  std::vector<double> analytic, flat;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    auto g = tape.grad(leaves[i]);
    analytic.insert(analytic.end(), g.begin(), g.end());
    flat.insert(flat.end(), inputs[i].values().begin(), inputs[i].values().end());
  }
  auto f = [&](std::span<const double> p) {
    std::vector<Tensor> ts = inputs;
    std::size_t at = 0;
    for (auto& t : ts) {
      std::copy_n(p.begin() + static_cast<std::ptrdiff_t>(at), t.size(), t.values().begin());
      at += t.size();
    }
    return build(ts).item();
  };
  const auto numeric = finite_difference_gradient(f, flat, kFdStep);
  GradCheck r;
  r.name = std::move(name);
  r.parameters = flat.size();
  r.max_rel_error = max_relative_error(analytic, numeric);
  r.pass = r.max_rel_error <= tol;
  return r;
}

namespace detail {

inline Tensor random_tensor(Rng& rng, Shape shape, double scale = 1.0) {
  Tensor t(std::move(shape));
  for (auto& v : t.values()) v = rng.uniform(-scale, scale);
  return t;
}

/// sum(w * y) with fixed random weights w, so every output component matters.
template <class V>
V weighted_sum(const V& y, const Tensor& w) {
  return sum(hadamard(y, lift_constant(y, w)));
}

/// Irregularly sampled toy series, normalized and split.
inline Dataset toy_dataset(std::uint64_t seed, std::size_t n = 40, std::size_t kx = 2, std::size_t ky = 2) {
  Rng rng(seed);
  TimeSeries s;
  s.X = Tensor(Shape{n, kx});
  s.Y = Tensor(Shape{n, ky});
  double t = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    s.t.push_back(t);
    t += rng.uniform(0.5, 1.5);
    for (std::size_t c = 0; c < kx; ++c) s.X(i, c) = std::sin(0.3 * t * static_cast<double>(c + 1)) + rng.uniform(-0.1, 0.1);
    for (std::size_t c = 0; c < ky; ++c) s.Y(i, c) = std::cos(0.2 * t + static_cast<double>(c)) + rng.uniform(-0.1, 0.1);
  }
  return split_normalize(s);
}

}  // namespace detail

inline GradCheck gradcheck_embed(std::uint64_t seed) {
  Rng rng(seed);
  const std::size_t k = 4, kx = 3;
  std::vector<Tensor> in{detail::random_tensor(rng, {kx}), detail::random_tensor(rng, {k, kx}),
                         detail::random_tensor(rng, {k})};
  const Tensor w = detail::random_tensor(rng, {k});
  return check_gradient("embed_input", in, [&](const auto& v) {
    using V = std::decay_t<decltype(v[0])>;
    return detail::weighted_sum(embed_input(v[0], EmbedParams<V>{v[1], v[2]}), w);
  });
}

inline GradCheck gradcheck_gru(std::uint64_t seed) {
  Rng rng(seed);
  const std::size_t k = 3, kh = 4;
  std::vector<Tensor> in{detail::random_tensor(rng, {k}), detail::random_tensor(rng, {kh})};
  for (int i = 0; i < 3; ++i) in.push_back(detail::random_tensor(rng, {kh, k}));
  for (int i = 0; i < 3; ++i) in.push_back(detail::random_tensor(rng, {kh, kh}));
  for (int i = 0; i < 3; ++i) in.push_back(detail::random_tensor(rng, {kh}));
  const Tensor w = detail::random_tensor(rng, {kh});
  return check_gradient("gru_cell", in, [&](const auto& v) {
    using V = std::decay_t<decltype(v[0])>;
    GruParams<V> p{v[2], v[3], v[4], v[5], v[6], v[7], v[8], v[9], v[10]};
    return detail::weighted_sum(gru_cell(v[0], v[1], p), w);
  });
}

inline GradCheck gradcheck_asrnn(std::uint64_t seed) {
  Rng rng(seed);
  const std::size_t k = 3, kh = 4;
  std::vector<Tensor> in{detail::random_tensor(rng, {k}),      detail::random_tensor(rng, {kh}),
                         detail::random_tensor(rng, {kh, k}),  detail::random_tensor(rng, {kh, k}),
                         detail::random_tensor(rng, {kh, kh}), detail::random_tensor(rng, {kh}),
                         detail::random_tensor(rng, {kh})};
  const double gamma = rng.uniform(0.0, 1.0);
  const Tensor w = detail::random_tensor(rng, {kh});
  return check_gradient("asrnn_cell", in, [&](const auto& v) {
    using V = std::decay_t<decltype(v[0])>;
    AsrnnParams<V> p{v[2], v[3], v[4], v[5], v[6], gamma, 1.0};
    return detail::weighted_sum(asrnn_cell(v[0], v[1], p), w);
  });
}

inline GradCheck gradcheck_output(std::uint64_t seed) {
  Rng rng(seed);
  const std::size_t kh = 4, ko = 2;
  std::vector<Tensor> in{detail::random_tensor(rng, {kh}), detail::random_tensor(rng, {ko, kh}),
                         detail::random_tensor(rng, {ko})};
  const Tensor w = detail::random_tensor(rng, {ko});
  return check_gradient("output_map", in, [&](const auto& v) {
    using V = std::decay_t<decltype(v[0])>;
    return detail::weighted_sum(output_map(v[0], OutputParams<V>{v[1], v[2]}), w);
  });
}

/// Squared-error loss of an L-step window from the trained h0, with every
/// model parameter randomized. The numeric side uses the plain forward pass.
inline GradCheck gradcheck_rollout(std::uint64_t seed, CellKind cell, Scheme scheme, Formulation form,
                                   Interpolation interp, std::size_t L = 3) {
  const Dataset d = detail::toy_dataset(seed);
  ModelParams p = init_params(seed, ModelDims{d.series.input_channels(), 3, d.series.output_channels()}, cell,
                              0.5, 0.8);
  Rng rng(seed ^ 0x9e3779b97f4a7c15ull);
  std::vector<double> flat = p.flatten();
  for (auto& v : flat) v = rng.uniform(-1.0, 1.0);
  p.unflatten(flat);
  p.meta.scheme = scheme;
  p.meta.formulation = form;
  p.meta.interpolation = interp;
  p.meta.mu_delta = d.mu_delta;

  Tape tape;
  std::vector<Var> leaves;
  const Var loss = record_segment_loss(tape, p, d, 0, L, p.h0, leaves);
  tape.backward(loss);
  std::vector<double> analytic;
  for (Var v : leaves) {
    auto g = tape.grad(v);
    analytic.insert(analytic.end(), g.begin(), g.end());
  }
  auto f = [&](std::span<const double> x) {
    ModelParams q = p;
    q.unflatten(x);
    auto out = forward_segment(plain_view(q), d, 0, L, q.h0);
    double s = 0.0;
    for (std::size_t i = 0; i < L; ++i) {
      for (std::size_t c = 0; c < d.series.output_channels(); ++c) {
        const double e = out.predictions[i][c] - d.series.Y(i + 1, c);
        s += e * e;
      }
    }
    return s;
  };
  const auto numeric = finite_difference_gradient(f, flat, kFdStep);
  GradCheck r;
  r.name = std::string(to_string(cell)) + "/" + std::string(to_string(scheme)) + "/" +
           std::string(to_string(form)) + "/" + std::string(to_string(interp)) + " " + std::to_string(L) +
           "-step rollout";
  r.parameters = flat.size();
  r.max_rel_error = max_relative_error(analytic, numeric);
  r.pass = r.max_rel_error <= kGradTolerance;
  return r;
}

/// Component checks over `draws` random draws, then every cell x scheme x
/// formulation x interpolation rollout once.
inline std::vector<GradCheck> gradcheck_suite(std::size_t draws = 20) {
  std::vector<GradCheck> out;
  auto worst = [&](const std::string& name, auto&& one) {
    GradCheck agg;
    agg.name = name;
    agg.pass = true;
    for (std::size_t s = 0; s < draws; ++s) {
      GradCheck g = one(s + 1);
      agg.parameters = g.parameters;
      agg.max_rel_error = std::max(agg.max_rel_error, g.max_rel_error);
      agg.pass = agg.pass && g.pass;
    }
    out.push_back(agg);
  };
  worst("gru_cell", gradcheck_gru);
  worst("asrnn_cell", gradcheck_asrnn);
  worst("embed_input", gradcheck_embed);
  worst("output_map", gradcheck_output);
  worst("gru/rk4/stationary 3-step rollout", [](std::uint64_t s) {
    return gradcheck_rollout(s, CellKind::gru, Scheme::rk4, Formulation::stationary, Interpolation::constant);
  });
  std::uint64_t seed = 100;
  for (auto cell : {CellKind::gru, CellKind::asrnn}) {
    for (auto scheme : {Scheme::euler, Scheme::midpoint, Scheme::kutta3, Scheme::rk4}) {
      for (auto form : {Formulation::stationary, Formulation::non_stationary, Formulation::ignore_time}) {
        for (auto interp : {Interpolation::constant, Interpolation::linear}) {
          out.push_back(gradcheck_rollout(seed++, cell, scheme, form, interp));
        }
      }
    }
  }
  return out;
}

struct OrderCheck {
  Scheme scheme = Scheme::euler;
  int expected = 1;
  OrderEstimate estimate;
  bool pass = false;
};

inline std::vector<OrderCheck> ordercheck_suite(double band = 0.25) {
  std::vector<OrderCheck> out;
  for (auto s : {Scheme::euler, Scheme::midpoint, Scheme::kutta3, Scheme::rk4}) {
    OrderCheck c;
    c.scheme = s;
    const ButcherTableau tab = tableau(s);
    c.expected = static_cast<int>(tab.order);
    c.estimate = estimate_order(tab);
    c.pass = std::abs(c.estimate.slope - c.expected) <= band;
    out.push_back(c);
  }
  return out;
}

}  // namespace tarnn
