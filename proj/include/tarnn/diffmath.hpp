#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>
#include <stdexcept>
#include <vector>

#include "tarnn/tape.hpp"
#include "tarnn/tensor.hpp"

namespace tarnn {

/// Central-difference gradient of a scalar function of a flat parameter
/// vector: (f(p + step*e_i) - f(p - step*e_i)) / (2*step).
inline std::vector<double> finite_difference_gradient(
    const std::function<double(std::span<const double>)>& f, std::vector<double> params,
    double step) {
  if (!(step > 0.0)) throw std::invalid_argument("finite_difference_gradient: step must be > 0");
  std::vector<double> grad(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double p = params[i];
    params[i] = p + step;
    const double up = f(params);
    params[i] = p - step;
    const double down = f(params);
    params[i] = p;
    grad[i] = (up - down) / (2.0 * step);
  }
  return grad;
}

/// max_i |analytic_i - numeric_i| / max(|analytic_i|, floor)
inline double max_relative_error(std::span<const double> analytic, std::span<const double> numeric,
                                 double floor = 1e-8) {
  if (analytic.size() != numeric.size()) {
    throw ShapeError("max_relative_error: length mismatch");
  }
  double worst = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    const double denom = std::max(std::abs(analytic[i]), floor);
    worst = std::max(worst, std::abs(analytic[i] - numeric[i]) / denom);
  }
  return worst;
}

}  // namespace tarnn
