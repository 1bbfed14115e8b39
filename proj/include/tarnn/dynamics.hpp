#pragma once

// A model bound to a value backend (plain Tensor or recorded Var) and the
// single-gap state update built from it.

#include <variant>
#include <vector>

#include "tarnn/cells.hpp"
#include "tarnn/data.hpp"
#include "tarnn/integrators.hpp"
#include "tarnn/model.hpp"
#include "tarnn/tape.hpp"

namespace tarnn {

template <class V>
struct ModelView {
  CellKind kind = CellKind::gru;
  EmbedParams<V> embed;
  GruParams<V> gru;
  AsrnnParams<V> asrnn;
  V A;  // antisymmetric hidden matrix, asrnn only
  OutputParams<V> out;
  V h0;
  StepSpec spec;

  V cell(const V& x, const V& h) const {
    return kind == CellKind::gru ? gru_cell(x, h, gru) : asrnn_cell(x, h, asrnn, A);
  }
};

inline StepSpec step_spec(const ModelParams& p) {
  StepSpec s;
  s.tableau = tableau(p.meta.scheme);
  s.formulation = p.meta.formulation;
  s.interpolation = p.meta.interpolation;
  s.mu_delta = p.meta.mu_delta;
  s.output_scale = p.kind == CellKind::asrnn ? p.epsilon() : 1.0;
  return s;
}

namespace detail {
template <class V, class Lift>
ModelView<V> make_view(const ModelParams& p, Lift&& lift) {
  ModelView<V> v;
  v.kind = p.kind;
  v.embed = p.embed.transform(lift);
  if (p.kind == CellKind::gru) {
    v.gru = std::get<GruParams<Tensor>>(p.cell).transform(lift);
  } else {
    v.asrnn = std::get<AsrnnParams<Tensor>>(p.cell).transform(lift);
    v.A = skew(v.asrnn.M, v.asrnn.gamma);
  }
  v.out = p.out.transform(lift);
  v.h0 = lift(p.h0);
  v.spec = step_spec(p);
  return v;
}
}  // namespace detail

inline ModelView<Tensor> plain_view(const ModelParams& p) {
  return detail::make_view<Tensor>(p, [](const Tensor& t) { return t; });
}

/// Lifts every parameter onto `tape` as a trainable leaf. `leaves` receives
/// the leaf handles in ModelParams::for_each_tensor order.
inline ModelView<Var> tape_view(const ModelParams& p, Tape& tape, std::vector<Var>* leaves = nullptr) {
  std::vector<Var> order;
  p.for_each_tensor([&](const std::string&, const Tensor& t) { order.push_back(tape.leaf(t)); });
  std::size_t i = 0;
  auto next = [&](const Tensor&) { return order[i++]; };
  ModelView<Var> v;
  v.kind = p.kind;
  v.embed = p.embed.transform(next);
  if (p.kind == CellKind::gru) {
    v.gru = std::get<GruParams<Tensor>>(p.cell).transform(next);
  } else {
    v.asrnn = std::get<AsrnnParams<Tensor>>(p.cell).transform(next);
  }
  v.out = p.out.transform(next);
  v.h0 = next(p.h0);
  if (p.kind == CellKind::asrnn) v.A = skew(v.asrnn.M, v.asrnn.gamma);
  v.spec = step_spec(p);
  if (leaves) *leaves = std::move(order);
  return v;
}

/// State update across the gap from row n to row n+1.
template <class V>
V advance(const ModelView<V>& m, const Dataset& d, std::size_t n, const V& h) {
  const double delta = effective_delta(m.spec, d.delta(n));
  auto cell = [&m](const V& x, const V& hh) { return m.cell(x, hh); };
  auto embed = [&m, &h](const Tensor& raw) { return embed_input(lift_constant(h, raw), m.embed); };
  return rk_step(m.spec, cell, embed, d.series.X.row(n), d.series.X.row(n + 1), delta, h);
}

}  // namespace tarnn
