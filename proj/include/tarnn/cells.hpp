#pragma once

// Recurrent cell functions, the input embedding and the output map.
//
// Everything is templated on the value type V: `Tensor` for plain evaluation
// and `Var` for recorded evaluation on a Tape. Parameter structs are likewise
// templated so a model can be lifted onto a tape with transform().

#include <cmath>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>

#include "tarnn/tape.hpp"
#include "tarnn/tensor.hpp"

namespace tarnn {

enum class CellKind { gru, asrnn };

inline std::string_view to_string(CellKind k) { return k == CellKind::gru ? "gru" : "asrnn"; }

inline CellKind parse_cell_kind(std::string_view s) {
  if (s == "gru") return CellKind::gru;
  if (s == "asrnn") return CellKind::asrnn;
  throw std::invalid_argument("unknown cell kind '" + std::string(s) + "' (expected gru|asrnn)");
}

template <class V>
struct EmbedParams {
  V W_e;  // [k x k_x_raw]
  V b_e;  // [k]

  template <class F>
  void for_each(F&& f) {
    f("W_e", W_e);
    f("b_e", b_e);
  }
  template <class F>
  void for_each(F&& f) const {
    f("W_e", W_e);
    f("b_e", b_e);
  }
  template <class F>
  auto transform(F&& f) const {
    using U = decltype(f(W_e));
    return EmbedParams<U>{f(W_e), f(b_e)};
  }
};

template <class V>
struct GruParams {
  V W_h, W_z, W_r;  // [k_h x k]
  V U_h, U_z, U_r;  // [k_h x k_h]
  V b_h, b_z, b_r;  // [k_h]

  template <class Self, class F>
  static void visit(Self& p, F&& f) {
    f("W_h", p.W_h);
    f("W_z", p.W_z);
    f("W_r", p.W_r);
    f("U_h", p.U_h);
    f("U_z", p.U_z);
    f("U_r", p.U_r);
    f("b_h", p.b_h);
    f("b_z", p.b_z);
    f("b_r", p.b_r);
  }
  template <class F>
  void for_each(F&& f) { visit(*this, f); }
  template <class F>
  void for_each(F&& f) const { visit(*this, f); }
  template <class F>
  auto transform(F&& f) const {
    using U = decltype(f(W_h));
    return GruParams<U>{f(W_h), f(W_z), f(W_r), f(U_h), f(U_z), f(U_r), f(b_h), f(b_z), f(b_r)};
  }
};

/// Gated antisymmetric cell. The hidden-to-hidden matrix is
/// A = M - M^T - gamma*I, with M a free square generator.
template <class V>
struct AsrnnParams {
  V W_h, W_z;  // [k_h x k]
  V M;         // [k_h x k_h]
  V b_h, b_z;  // [k_h]
  double gamma = 1.0;
  double epsilon = 1.0;

  template <class Self, class F>
  static void visit(Self& p, F&& f) {
    f("W_h", p.W_h);
    f("W_z", p.W_z);
    f("M", p.M);
    f("b_h", p.b_h);
    f("b_z", p.b_z);
  }
  template <class F>
  void for_each(F&& f) { visit(*this, f); }
  template <class F>
  void for_each(F&& f) const { visit(*this, f); }
  template <class F>
  auto transform(F&& f) const {
    using U = decltype(f(W_h));
    return AsrnnParams<U>{f(W_h), f(W_z), f(M), f(b_h), f(b_z), gamma, epsilon};
  }
};

template <class V>
struct OutputParams {
  V W_o;  // [k_out x k_h]
  V b_o;  // [k_out]

  template <class F>
  void for_each(F&& f) {
    f("W_o", W_o);
    f("b_o", b_o);
  }
  template <class F>
  void for_each(F&& f) const {
    f("W_o", W_o);
    f("b_o", b_o);
  }
  template <class F>
  auto transform(F&& f) const {
    using U = decltype(f(W_o));
    return OutputParams<U>{f(W_o), f(b_o)};
  }
};

/// tanh(W_e x + b_e)
template <class V>
V embed_input(const V& x_raw, const EmbedParams<V>& p) {
  return tanh(add(matvec(p.W_e, x_raw), p.b_e));
}

template <class V>
V gru_cell(const V& x, const V& h, const GruParams<V>& p) {
  V z = sigmoid(add(add(matvec(p.W_z, x), matvec(p.U_z, h)), p.b_z));
  V r = sigmoid(add(add(matvec(p.W_r, x), matvec(p.U_r, h)), p.b_r));
  V c = tanh(add(add(matvec(p.W_h, x), matvec(p.U_h, hadamard(r, h))), p.b_h));
  return gate_mix(z, c, h);
}

/// Variant taking a precomputed A, so a rollout builds it once.
template <class V>
V asrnn_cell(const V& x, const V& h, const AsrnnParams<V>& p, const V& A) {
  V Ah = matvec(A, h);
  V z = sigmoid(add(add(matvec(p.W_z, x), Ah), p.b_z));
  return hadamard(z, tanh(add(add(matvec(p.W_h, x), Ah), p.b_h)));
}

template <class V>
V asrnn_cell(const V& x, const V& h, const AsrnnParams<V>& p) {
  return asrnn_cell(x, h, p, skew(p.M, p.gamma));
}

/// Affine read-out G(h) = W_o h + b_o.
template <class V>
V output_map(const V& h, const OutputParams<V>& p) {
  return add(matvec(p.W_o, h), p.b_o);
}

}  // namespace tarnn
