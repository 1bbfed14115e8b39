#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "tarnn/errors.hpp"

namespace tarnn {

using Shape = std::vector<std::size_t>;

inline std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

inline std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

/// Dense row-major array of doubles. Rank 0 is a scalar, rank 1 a vector,
/// rank 2 a matrix.
class Tensor {
 public:
  Tensor() : shape_{0}, data_{} {}

  explicit Tensor(Shape shape, double fill = 0.0)
      : shape_(std::move(shape)), data_(shape_size(shape_), fill) {}

  Tensor(Shape shape, std::vector<double> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    if (data_.size() != shape_size(shape_)) {
      throw ShapeError("tensor: " + std::to_string(data_.size()) +
                       " elements do not fill shape " + shape_string(shape_));
    }
  }

  static Tensor scalar(double v) { return Tensor(Shape{}, std::vector<double>{v}); }

  static Tensor vector(std::vector<double> v) {
    const std::size_t n = v.size();
    return Tensor(Shape{n}, std::move(v));
  }

  static Tensor vector(std::initializer_list<double> v) {
    return vector(std::vector<double>(v));
  }

  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> v) {
    return Tensor(Shape{rows, cols}, std::move(v));
  }

  /// Row-list constructor, convenient in tests: matrix({{1, 2}, {0, 1}}).
  static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows) {
    const std::size_t r = rows.size();
    const std::size_t c = r ? rows.begin()->size() : 0;
    std::vector<double> v;
    v.reserve(r * c);
    for (const auto& row : rows) {
      if (row.size() != c) throw ShapeError("tensor: ragged matrix literal");
      v.insert(v.end(), row.begin(), row.end());
    }
    return Tensor(Shape{r, c}, std::move(v));
  }

  static Tensor identity(std::size_t n) {
    Tensor t(Shape{n, n});
    for (std::size_t i = 0; i < n; ++i) t(i, i) = 1.0;
    return t;
  }

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  std::size_t rows() const { return shape_.empty() ? 1 : shape_[0]; }
  std::size_t cols() const { return shape_.size() < 2 ? 1 : shape_[1]; }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  std::vector<double>& values() { return data_; }
  const std::vector<double>& values() const { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }
  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }

  std::span<double> row(std::size_t r) { return data().subspan(r * cols(), cols()); }
  std::span<const double> row(std::size_t r) const {
    return data().subspan(r * cols(), cols());
  }

  double item() const {
    if (data_.size() != 1) throw ShapeError("tensor: item() on " + shape_string(shape_));
    return data_[0];
  }

  bool all_finite() const {
    for (double v : data_) {
      if (!std::isfinite(v)) return false;
    }
    return true;
  }

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  Shape shape_;
  std::vector<double> data_;
};

namespace detail {

inline void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) +
                     " vs " + shape_string(b.shape()));
  }
}

template <class F>
Tensor map(const Tensor& a, F f) {
  Tensor out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = f(a[i]);
  return out;
}

template <class F>
Tensor zip(const char* op, const Tensor& a, const Tensor& b, F f) {
  require_same_shape(op, a, b);
  Tensor out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = f(a[i], b[i]);
  return out;
}

inline double sigmoid(double u) { return 1.0 / (1.0 + std::exp(-u)); }

}  // namespace detail

// Plain (unrecorded) primitives. The recorded counterparts in tape.hpp have
// the same names so the cell and integrator templates work on both.

inline Tensor matvec(const Tensor& W, const Tensor& v) {
  if (W.rank() != 2 || v.rank() != 1 || W.cols() != v.size()) {
    throw ShapeError("matvec: cannot multiply " + shape_string(W.shape()) + " by " +
                     shape_string(v.shape()));
  }
  const std::size_t m = W.rows();
  const std::size_t n = W.cols();
  Tensor out(Shape{m});
  const double* w = W.data().data();
  const double* x = v.data().data();
  for (std::size_t i = 0; i < m; ++i) {
    double acc = 0.0;
    const double* wr = w + i * n;
    for (std::size_t j = 0; j < n; ++j) acc += wr[j] * x[j];
    out[i] = acc;
  }
  return out;
}

inline Tensor add(const Tensor& a, const Tensor& b) {
  return detail::zip("add", a, b, [](double x, double y) { return x + y; });
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
  return detail::zip("sub", a, b, [](double x, double y) { return x - y; });
}

inline Tensor hadamard(const Tensor& a, const Tensor& b) {
  return detail::zip("hadamard", a, b, [](double x, double y) { return x * y; });
}

inline Tensor scale(const Tensor& a, double s) {
  return detail::map(a, [s](double x) { return s * x; });
}

inline Tensor tanh(const Tensor& a) {
  return detail::map(a, [](double x) { return std::tanh(x); });
}

inline Tensor sigmoid(const Tensor& a) { return detail::map(a, detail::sigmoid); }

/// alpha*a + beta*b
inline Tensor axpby(double alpha, const Tensor& a, double beta, const Tensor& b) {
  return detail::zip("axpby", a, b,
                     [alpha, beta](double x, double y) { return alpha * x + beta * y; });
}

/// (1 - gate)*a + gate*b, componentwise.
inline Tensor gate_mix(const Tensor& gate, const Tensor& a, const Tensor& b) {
  detail::require_same_shape("gate_mix", gate, a);
  detail::require_same_shape("gate_mix", gate, b);
  Tensor out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) {
    out[i] = (1.0 - gate[i]) * a[i] + gate[i] * b[i];
  }
  return out;
}

/// M - M^T - gamma*I for a square M.
inline Tensor skew(const Tensor& M, double gamma) {
  if (M.rank() != 2 || M.rows() != M.cols()) {
    throw ShapeError("skew: expected a square matrix, got " + shape_string(M.shape()));
  }
  const std::size_t n = M.rows();
  Tensor out(M.shape());
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) out(i, j) = M(i, j) - M(j, i);
    out(i, i) -= gamma;
  }
  return out;
}

inline Tensor sum(const Tensor& a) {
  double acc = 0.0;
  for (double v : a.values()) acc += v;
  return Tensor::scalar(acc);
}

/// Plain tensors are already constants; mirrors Var's lifting helper.
inline Tensor lift_constant(const Tensor& /*like*/, const Tensor& value) { return value; }

}  // namespace tarnn
