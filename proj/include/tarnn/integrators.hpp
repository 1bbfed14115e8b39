#pragma once

#include <cmath>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "tarnn/errors.hpp"
#include "tarnn/tensor.hpp"

namespace tarnn {

enum class Scheme { euler, midpoint, kutta3, rk4 };

/// How the slope treats the skip connection h_n.
///   stationary      F = (s*f(x,h) - h) / mu
///   non_stationary  F = (s/mu) * f(x,h)
///   ignore_time     stationary F, but every step uses delta := mu
/// where s is the cell's output scale (epsilon for the antisymmetric cell).
enum class Formulation { stationary, non_stationary, ignore_time };

enum class Interpolation { constant, linear };

inline std::string_view to_string(Scheme s) {
  switch (s) {
    case Scheme::euler: return "euler";
    case Scheme::midpoint: return "midpoint";
    case Scheme::kutta3: return "kutta3";
    case Scheme::rk4: return "rk4";
  }
  return "?";
}

inline std::string_view to_string(Formulation f) {
  switch (f) {
    case Formulation::stationary: return "stationary";
    case Formulation::non_stationary: return "non-stationary";
    case Formulation::ignore_time: return "ignore-time";
  }
  return "?";
}

inline std::string_view to_string(Interpolation i) {
  return i == Interpolation::constant ? "constant" : "linear";
}

inline Scheme parse_scheme(std::string_view s) {
  if (s == "euler") return Scheme::euler;
  if (s == "midpoint") return Scheme::midpoint;
  if (s == "kutta3") return Scheme::kutta3;
  if (s == "rk4") return Scheme::rk4;
  throw std::invalid_argument("unknown scheme '" + std::string(s) +
                              "' (expected euler|midpoint|kutta3|rk4)");
}

inline Formulation parse_formulation(std::string_view s) {
  if (s == "stationary") return Formulation::stationary;
  if (s == "non-stationary") return Formulation::non_stationary;
  if (s == "ignore-time") return Formulation::ignore_time;
  throw std::invalid_argument("unknown formulation '" + std::string(s) +
                              "' (expected stationary|non-stationary|ignore-time)");
}

inline Interpolation parse_interpolation(std::string_view s) {
  if (s == "constant") return Interpolation::constant;
  if (s == "linear") return Interpolation::linear;
  throw std::invalid_argument("unknown interpolation '" + std::string(s) +
                              "' (expected constant|linear)");
}

/// Coefficients of an explicit Runge-Kutta method. `a` is stored dense
/// [s x s] and is strictly lower triangular.
struct ButcherTableau {
  Scheme scheme = Scheme::euler;
  std::size_t stages = 1;
  std::vector<double> c;
  std::vector<double> b;
  std::vector<std::vector<double>> a;
  int order = 1;
};

inline ButcherTableau tableau(Scheme scheme) {
  ButcherTableau t;
  t.scheme = scheme;
  switch (scheme) {
    case Scheme::euler:
      t.stages = 1;
      t.c = {0.0};
      t.b = {1.0};
      t.a = {{0.0}};
      t.order = 1;
      break;
    case Scheme::midpoint:
      t.stages = 2;
      t.c = {0.0, 0.5};
      t.b = {0.0, 1.0};
      t.a = {{0.0, 0.0}, {0.5, 0.0}};
      t.order = 2;
      break;
    case Scheme::kutta3:
      t.stages = 3;
      t.c = {0.0, 0.5, 1.0};
      t.b = {1.0 / 6.0, 2.0 / 3.0, 1.0 / 6.0};
      t.a = {{0.0, 0.0, 0.0}, {0.5, 0.0, 0.0}, {-1.0, 2.0, 0.0}};
      t.order = 3;
      break;
    case Scheme::rk4:
      t.stages = 4;
      t.c = {0.0, 0.5, 0.5, 1.0};
      t.b = {1.0 / 6.0, 1.0 / 3.0, 1.0 / 3.0, 1.0 / 6.0};
      t.a = {{0.0, 0.0, 0.0, 0.0}, {0.5, 0.0, 0.0, 0.0}, {0.0, 0.5, 0.0, 0.0}, {0.0, 0.0, 1.0, 0.0}};
      t.order = 4;
      break;
  }
  return t;
}

inline ButcherTableau tableau(std::string_view name) { return tableau(parse_scheme(name)); }

struct StepSpec {
  ButcherTableau tableau;
  Formulation formulation = Formulation::stationary;
  Interpolation interpolation = Interpolation::constant;
  double mu_delta = 1.0;  ///< mean training step, in dataset time units
  double output_scale = 1.0;
};

/// Step actually taken: the ignore-time baseline pretends every gap is mu.
inline double effective_delta(const StepSpec& spec, double delta) {
  return spec.formulation == Formulation::ignore_time ? spec.mu_delta : delta;
}

/// Slope F(x, h) built from a cell function f(x, h).
template <class V, class CellFn>
V slope(const StepSpec& spec, CellFn&& cell, const V& x, const V& h) {
  if (!(spec.mu_delta > 0.0)) throw std::invalid_argument("slope: mu_delta must be > 0");
  V f = cell(x, h);
  if (spec.formulation == Formulation::non_stationary) {
    return scale(f, spec.output_scale / spec.mu_delta);
  }
  if (spec.output_scale != 1.0) f = scale(f, spec.output_scale);
  return scale(sub(f, h), 1.0 / spec.mu_delta);
}

/// Input at stage time t_n + c*delta_n. The first stage (c = 0) always
/// returns x_n unchanged.
inline Tensor interpolate_input(std::span<const double> x_n, std::span<const double> x_next,
                                double c, Interpolation mode) {
  if (x_n.size() != x_next.size()) {
    throw ShapeError("interpolate_input: input lengths differ (" + std::to_string(x_n.size()) +
                     " vs " + std::to_string(x_next.size()) + ")");
  }
  std::vector<double> out(x_n.begin(), x_n.end());
  if (mode == Interpolation::linear && c != 0.0) {
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = (1.0 - c) * x_n[i] + c * x_next[i];
  }
  return Tensor::vector(std::move(out));
}

/// One explicit Runge-Kutta step h_n -> h_{n+1} for an arbitrary stage
/// slope: stage(i, c_i, h_stage) returns k_i.
template <class V, class StageFn>
V rk_integrate(const ButcherTableau& tab, double delta, const V& h, StageFn&& stage) {
  std::vector<V> k;
  k.reserve(tab.stages);
  for (std::size_t i = 0; i < tab.stages; ++i) {
    V h_stage = h;
    for (std::size_t j = 0; j < i; ++j) {
      if (tab.a[i][j] != 0.0) h_stage = axpby(1.0, h_stage, delta * tab.a[i][j], k[j]);
    }
    k.push_back(stage(i, tab.c[i], h_stage));
  }
  V next = h;
  for (std::size_t i = 0; i < tab.stages; ++i) {
    if (tab.b[i] != 0.0) next = axpby(1.0, next, delta * tab.b[i], k[i]);
  }
  return next;
}

/// Advance the state over one observation gap. Raw inputs are interpolated
/// at each stage time and then passed through `embed`. The caller applies
/// effective_delta() first for the ignore-time baseline.
template <class V, class CellFn, class EmbedFn>
V rk_step(const StepSpec& spec, CellFn&& cell, EmbedFn&& embed, std::span<const double> x_raw_n,
          std::span<const double> x_raw_next, double delta, const V& h) {
  if (!(delta > 0.0)) {
    throw std::invalid_argument("rk_step: step size must be > 0, got " + std::to_string(delta));
  }
  // Stages sharing a c value (rk4 has two at 1/2) share the embedded input.
  std::vector<std::pair<double, V>> embedded;
  auto input_at = [&](double c) -> V {
    for (const auto& [ci, v] : embedded) {
      if (ci == c) return v;
    }
    V x = embed(interpolate_input(x_raw_n, x_raw_next, c, spec.interpolation));
    embedded.emplace_back(c, x);
    return x;
  };
  return rk_integrate(spec.tableau, delta, h, [&](std::size_t, double c, const V& h_stage) {
    return slope(spec, cell, input_at(c), h_stage);
  });
}

/// Global error at t=1 of dh/dt = -h, h(0)=1, for uniform step sizes, and
/// the least-squares slope of log(error) against log(step).
struct OrderEstimate {
  std::vector<double> steps;
  std::vector<double> errors;
  double slope = 0.0;
};

inline OrderEstimate estimate_order(const ButcherTableau& tab,
                                    std::vector<double> steps = {0.2, 0.1, 0.05, 0.025}) {
  OrderEstimate est;
  est.steps = steps;
  for (double dt : steps) {
    const auto n = static_cast<std::size_t>(std::llround(1.0 / dt));
    Tensor h = Tensor::vector({1.0});
    for (std::size_t i = 0; i < n; ++i) {
      h = rk_integrate(tab, dt, h, [](std::size_t, double, const Tensor& hs) { return scale(hs, -1.0); });
    }
    est.errors.push_back(std::abs(h[0] - std::exp(-1.0)));
  }
  double mx = 0, my = 0;
  const double m = static_cast<double>(steps.size());
  for (std::size_t i = 0; i < steps.size(); ++i) {
    mx += std::log(steps[i]) / m;
    my += std::log(est.errors[i]) / m;
  }
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < steps.size(); ++i) {
    const double dx = std::log(steps[i]) - mx;
    sxy += dx * (std::log(est.errors[i]) - my);
    sxx += dx * dx;
  }
  est.slope = sxy / sxx;
  return est;
}

}  // namespace tarnn
