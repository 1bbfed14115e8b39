#pragma once

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "tarnn/errors.hpp"
#include "tarnn/tensor.hpp"

namespace tarnn {

class Tape;

/// Handle to one entry of a Tape.
struct Var {
  Tape* tape = nullptr;
  std::uint32_t id = 0;
};

enum class OpKind : std::uint8_t {
  leaf,
  constant,
  matvec,
  add,
  sub,
  hadamard,
  scale,
  tanh,
  sigmoid,
  axpby,
  gate_mix,
  skew,
  sum,
};

/// Valid reverse topological orders for the backward sweep.
enum class SweepOrder {
  reverse_record,  ///< entries in reverse insertion order
  depth_first,     ///< reverse post-order of a DFS rooted at the loss
};

using GradientMap = std::map<std::uint32_t, Tensor>;

/// Computation record for reverse-mode differentiation.
///
/// Every primitive appends one entry holding its operands, its output values
/// and whatever scalars its reverse rule needs. Values live in one pooled
/// buffer; clear() keeps the capacity so a tape can be reused per segment.
/// A tape is owned by a single thread.
class Tape {
 public:
  struct Entry {
    OpKind kind;
    bool trainable = false;
    std::uint8_t rank = 1;
    std::uint32_t a = 0, b = 0, c = 0;
    std::uint32_t rows = 0, cols = 1;
    std::size_t offset = 0;
    std::size_t size = 0;
    double alpha = 0.0, beta = 0.0;
  };

  void clear() {
    entries_.clear();
    values_.clear();
    grads_.clear();
    visited_ = 0;
  }

  void reserve(std::size_t entries, std::size_t values) {
    entries_.reserve(entries);
    values_.reserve(values);
  }

  std::size_t entry_count() const { return entries_.size(); }
  std::size_t value_count() const { return values_.size(); }
  const Entry& entry(Var v) const { return entries_[v.id]; }

  Var leaf(const Tensor& t, bool trainable = true) {
    Var v = push(OpKind::leaf, t.shape());
    entries_[v.id].trainable = trainable;
    std::copy(t.values().begin(), t.values().end(), values_.begin() + entries_[v.id].offset);
    return v;
  }

  Var constant(const Tensor& t) {
    Var v = push(OpKind::constant, t.shape());
    std::copy(t.values().begin(), t.values().end(), values_.begin() + entries_[v.id].offset);
    return v;
  }

  std::span<const double> value(Var v) const {
    const Entry& e = entries_[v.id];
    return {values_.data() + e.offset, e.size};
  }

  Shape shape(Var v) const { return shape_of(entries_[v.id]); }

  Tensor tensor(Var v) const {
    auto s = value(v);
    return Tensor(shape(v), std::vector<double>(s.begin(), s.end()));
  }

  /// Gradient of the last backward() loss w.r.t. v.
  std::span<const double> grad(Var v) const {
    const Entry& e = entries_[v.id];
    if (grads_.size() < e.offset + e.size) return {};
    return {grads_.data() + e.offset, e.size};
  }

  /// Gradients of all trainable leaves, keyed by entry id.
  GradientMap gradients() const {
    GradientMap out;
    for (std::uint32_t i = 0; i < entries_.size(); ++i) {
      const Entry& e = entries_[i];
      if (e.kind != OpKind::leaf || !e.trainable) continue;
      Tensor g(shape_of(e));
      if (grads_.size() >= e.offset + e.size) {
        std::copy_n(grads_.begin() + e.offset, e.size, g.values().begin());
      }
      out.emplace(i, std::move(g));
    }
    return out;
  }

  /// Number of entries processed by the last backward().
  std::size_t last_sweep_visits() const { return visited_; }

  void backward(Var loss, SweepOrder order = SweepOrder::reverse_record) {
    const Entry& le = entries_.at(loss.id);
    if (le.size != 1 || le.rank != 0) {
      throw ShapeError("backward: loss must be a scalar, got " + shape_string(shape_of(le)));
    }
    grads_.assign(values_.size(), 0.0);
    grads_[le.offset] = 1.0;
    visited_ = 0;
    if (order == SweepOrder::reverse_record) {
      for (std::uint32_t i = loss.id + 1; i-- > 0;) {
        reverse_rule(i);
        ++visited_;
      }
    } else {
      for (std::uint32_t i : depth_first_order(loss.id)) {
        reverse_rule(i);
        ++visited_;
      }
    }
  }

  // Recorded primitives. Each validates shapes, evaluates, and appends.

  Var matvec(Var W, Var v) {
    const Entry ew = entries_[W.id];
    const Entry ev = entries_[v.id];
    if (ew.rank != 2 || ev.rank != 1 || ew.cols != ev.size) {
      throw ShapeError("matvec: cannot multiply " + shape_string(shape_of(ew)) + " by " +
                       shape_string(shape_of(ev)));
    }
    Var out = push(OpKind::matvec, Shape{ew.rows}, W.id, v.id);
    const std::size_t m = ew.rows, n = ew.cols;
    const double* w = values_.data() + ew.offset;
    const double* x = values_.data() + ev.offset;
    double* y = values_.data() + entries_[out.id].offset;
    for (std::size_t i = 0; i < m; ++i) {
      double acc = 0.0;
      const double* wr = w + i * n;
      for (std::size_t j = 0; j < n; ++j) acc += wr[j] * x[j];
      y[i] = acc;
    }
    return out;
  }

  Var add(Var a, Var b) {
    return binary(OpKind::add, "add", a, b, [](double x, double y) { return x + y; });
  }
  Var sub(Var a, Var b) {
    return binary(OpKind::sub, "sub", a, b, [](double x, double y) { return x - y; });
  }
  Var hadamard(Var a, Var b) {
    return binary(OpKind::hadamard, "hadamard", a, b, [](double x, double y) { return x * y; });
  }

  Var axpby(double alpha, Var a, double beta, Var b) {
    Var out = binary(OpKind::axpby, "axpby", a, b,
                     [alpha, beta](double x, double y) { return alpha * x + beta * y; });
    entries_[out.id].alpha = alpha;
    entries_[out.id].beta = beta;
    return out;
  }

  Var scale(Var a, double s) {
    Var out = unary(OpKind::scale, a, [s](double x) { return s * x; });
    entries_[out.id].alpha = s;
    return out;
  }

  Var tanh(Var a) {
    return unary(OpKind::tanh, a, [](double x) { return std::tanh(x); });
  }

  Var sigmoid(Var a) { return unary(OpKind::sigmoid, a, detail::sigmoid); }

  Var gate_mix(Var gate, Var a, Var b) {
    require_same("gate_mix", gate, a);
    require_same("gate_mix", gate, b);
    Var out = push(OpKind::gate_mix, shape(a), gate.id, a.id, b.id);
    const std::size_t n = entries_[a.id].size;
    const double* z = values_.data() + entries_[gate.id].offset;
    const double* x = values_.data() + entries_[a.id].offset;
    const double* h = values_.data() + entries_[b.id].offset;
    double* y = values_.data() + entries_[out.id].offset;
    for (std::size_t i = 0; i < n; ++i) y[i] = (1.0 - z[i]) * x[i] + z[i] * h[i];
    return out;
  }

  Var skew(Var M, double gamma) {
    const Entry em = entries_[M.id];
    if (em.rank != 2 || em.rows != em.cols) {
      throw ShapeError("skew: expected a square matrix, got " + shape_string(shape_of(em)));
    }
    Var out = push(OpKind::skew, shape_of(em), M.id);
    entries_[out.id].alpha = gamma;
    const std::size_t n = em.rows;
    const double* m = values_.data() + em.offset;
    double* y = values_.data() + entries_[out.id].offset;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) y[i * n + j] = m[i * n + j] - m[j * n + i];
      y[i * n + i] -= gamma;
    }
    return out;
  }

  Var sum(Var a) {
    Var out = push(OpKind::sum, Shape{}, a.id);
    const Entry& ea = entries_[a.id];
    double acc = 0.0;
    for (std::size_t i = 0; i < ea.size; ++i) acc += values_[ea.offset + i];
    values_[entries_[out.id].offset] = acc;
    return out;
  }

 private:
  static Shape shape_of(const Entry& e) {
    if (e.rank == 0) return Shape{};
    if (e.rank == 1) return Shape{e.rows};
    return Shape{e.rows, e.cols};
  }

  Var push(OpKind kind, const Shape& shape, std::uint32_t a = 0, std::uint32_t b = 0,
           std::uint32_t c = 0) {
    if (shape.size() > 2) throw ShapeError("tape: rank > 2 is not supported");
    Entry e;
    e.kind = kind;
    e.rank = static_cast<std::uint8_t>(shape.size());
    e.rows = shape.empty() ? 1 : static_cast<std::uint32_t>(shape[0]);
    e.cols = shape.size() < 2 ? 1 : static_cast<std::uint32_t>(shape[1]);
    e.a = a;
    e.b = b;
    e.c = c;
    e.offset = values_.size();
    e.size = shape_size(shape);
    values_.resize(values_.size() + e.size);
    entries_.push_back(e);
    return Var{this, static_cast<std::uint32_t>(entries_.size() - 1)};
  }

  void require_same(const char* op, Var a, Var b) const {
    const Entry& ea = entries_[a.id];
    const Entry& eb = entries_[b.id];
    if (ea.rank != eb.rank || ea.rows != eb.rows || ea.cols != eb.cols) {
      throw ShapeError(std::string(op) + ": shape mismatch " + shape_string(shape_of(ea)) +
                       " vs " + shape_string(shape_of(eb)));
    }
  }

  template <class F>
  Var binary(OpKind kind, const char* op, Var a, Var b, F f) {
    require_same(op, a, b);
    Var out = push(kind, shape(a), a.id, b.id);
    const std::size_t n = entries_[a.id].size;
    const double* x = values_.data() + entries_[a.id].offset;
    const double* y = values_.data() + entries_[b.id].offset;
    double* z = values_.data() + entries_[out.id].offset;
    for (std::size_t i = 0; i < n; ++i) z[i] = f(x[i], y[i]);
    return out;
  }

  template <class F>
  Var unary(OpKind kind, Var a, F f) {
    Var out = push(kind, shape(a), a.id);
    const std::size_t n = entries_[a.id].size;
    const double* x = values_.data() + entries_[a.id].offset;
    double* z = values_.data() + entries_[out.id].offset;
    for (std::size_t i = 0; i < n; ++i) z[i] = f(x[i]);
    return out;
  }

  std::vector<std::uint32_t> depth_first_order(std::uint32_t root) const {
    std::vector<std::uint32_t> post;
    std::vector<std::uint8_t> state(root + 1, 0);  // 0 new, 1 open, 2 done
    std::vector<std::uint32_t> stack{root};
    while (!stack.empty()) {
      const std::uint32_t i = stack.back();
      if (state[i] == 2) {
        stack.pop_back();
        continue;
      }
      if (state[i] == 1) {
        state[i] = 2;
        post.push_back(i);
        stack.pop_back();
        continue;
      }
      state[i] = 1;
      for (std::uint32_t op : operands(entries_[i])) {
        if (state[op] == 0) stack.push_back(op);
      }
    }
    std::reverse(post.begin(), post.end());
    return post;
  }

  static std::vector<std::uint32_t> operands(const Entry& e) {
    switch (e.kind) {
      case OpKind::leaf:
      case OpKind::constant:
        return {};
      case OpKind::scale:
      case OpKind::tanh:
      case OpKind::sigmoid:
      case OpKind::skew:
      case OpKind::sum:
        return {e.a};
      case OpKind::gate_mix:
        return {e.a, e.b, e.c};
      default:
        return {e.a, e.b};
    }
  }

  void reverse_rule(std::uint32_t i) {
    const Entry& e = entries_[i];
    const std::size_t n = e.size;
    const double* go = grads_.data() + e.offset;
    const double* y = values_.data() + e.offset;
    auto g = [this](std::uint32_t id) { return grads_.data() + entries_[id].offset; };
    auto v = [this](std::uint32_t id) { return values_.data() + entries_[id].offset; };

    switch (e.kind) {
      case OpKind::leaf:
      case OpKind::constant:
        break;
      case OpKind::matvec: {
        const Entry& ew = entries_[e.a];
        const std::size_t m = ew.rows, cols = ew.cols;
        const double* w = v(e.a);
        const double* x = v(e.b);
        double* gw = g(e.a);
        double* gx = g(e.b);
        for (std::size_t r = 0; r < m; ++r) {
          const double gr = go[r];
          if (gr == 0.0) continue;
          const double* wr = w + r * cols;
          double* gwr = gw + r * cols;
          for (std::size_t c = 0; c < cols; ++c) {
            gwr[c] += gr * x[c];
            gx[c] += gr * wr[c];
          }
        }
        break;
      }
      case OpKind::add: {
        double* ga = g(e.a);
        for (std::size_t k = 0; k < n; ++k) ga[k] += go[k];
        double* gb = g(e.b);
        for (std::size_t k = 0; k < n; ++k) gb[k] += go[k];
        break;
      }
      case OpKind::sub: {
        double* ga = g(e.a);
        for (std::size_t k = 0; k < n; ++k) ga[k] += go[k];
        double* gb = g(e.b);
        for (std::size_t k = 0; k < n; ++k) gb[k] -= go[k];
        break;
      }
      case OpKind::hadamard: {
        const double* a = v(e.a);
        const double* b = v(e.b);
        double* ga = g(e.a);
        for (std::size_t k = 0; k < n; ++k) ga[k] += go[k] * b[k];
        double* gb = g(e.b);
        for (std::size_t k = 0; k < n; ++k) gb[k] += go[k] * a[k];
        break;
      }
      case OpKind::scale: {
        double* ga = g(e.a);
        for (std::size_t k = 0; k < n; ++k) ga[k] += e.alpha * go[k];
        break;
      }
      case OpKind::tanh: {
        double* ga = g(e.a);
        for (std::size_t k = 0; k < n; ++k) ga[k] += go[k] * (1.0 - y[k] * y[k]);
        break;
      }
      case OpKind::sigmoid: {
        double* ga = g(e.a);
        for (std::size_t k = 0; k < n; ++k) ga[k] += go[k] * y[k] * (1.0 - y[k]);
        break;
      }
      case OpKind::axpby: {
        double* ga = g(e.a);
        for (std::size_t k = 0; k < n; ++k) ga[k] += e.alpha * go[k];
        double* gb = g(e.b);
        for (std::size_t k = 0; k < n; ++k) gb[k] += e.beta * go[k];
        break;
      }
      case OpKind::gate_mix: {
        const double* z = v(e.a);
        const double* a = v(e.b);
        const double* b = v(e.c);
        double* gz = g(e.a);
        for (std::size_t k = 0; k < n; ++k) gz[k] += go[k] * (b[k] - a[k]);
        double* ga = g(e.b);
        for (std::size_t k = 0; k < n; ++k) ga[k] += go[k] * (1.0 - z[k]);
        double* gb = g(e.c);
        for (std::size_t k = 0; k < n; ++k) gb[k] += go[k] * z[k];
        break;
      }
      case OpKind::skew: {
        const std::size_t dim = e.rows;
        double* gm = g(e.a);
        for (std::size_t r = 0; r < dim; ++r) {
          for (std::size_t c = 0; c < dim; ++c) gm[r * dim + c] += go[r * dim + c] - go[c * dim + r];
        }
        break;
      }
      case OpKind::sum: {
        const Entry& ea = entries_[e.a];
        double* ga = g(e.a);
        for (std::size_t k = 0; k < ea.size; ++k) ga[k] += go[0];
        break;
      }
    }
  }

  std::vector<Entry> entries_;
  std::vector<double> values_;
  std::vector<double> grads_;
  std::size_t visited_ = 0;
};

// Free-function spellings so templated model code reads the same for Tensor
// and Var operands.

namespace detail {
inline Tape& tape_of(Var a, Var b) {
  assert(a.tape && a.tape == b.tape);
  (void)b;
  return *a.tape;
}
}  // namespace detail

inline Var matvec(Var W, Var v) { return detail::tape_of(W, v).matvec(W, v); }
inline Var add(Var a, Var b) { return detail::tape_of(a, b).add(a, b); }
inline Var sub(Var a, Var b) { return detail::tape_of(a, b).sub(a, b); }
inline Var hadamard(Var a, Var b) { return detail::tape_of(a, b).hadamard(a, b); }
inline Var scale(Var a, double s) { return a.tape->scale(a, s); }
inline Var tanh(Var a) { return a.tape->tanh(a); }
inline Var sigmoid(Var a) { return a.tape->sigmoid(a); }
inline Var axpby(double alpha, Var a, double beta, Var b) {
  return detail::tape_of(a, b).axpby(alpha, a, beta, b);
}
inline Var gate_mix(Var gate, Var a, Var b) {
  detail::tape_of(gate, a);
  return detail::tape_of(a, b).gate_mix(gate, a, b);
}
inline Var skew(Var M, double gamma) { return M.tape->skew(M, gamma); }
inline Var sum(Var a) { return a.tape->sum(a); }

/// Brings a data tensor onto the tape that owns `like`.
inline Var lift_constant(Var like, const Tensor& value) { return like.tape->constant(value); }

}  // namespace tarnn
