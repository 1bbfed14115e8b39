#pragma once

// Model parameters, initialization and the text model file.
//
// Model file layout (one item per line, '#' lines ignored):
//
//   format = tarnn-model-1
//   <key> = <value>                 metadata, see ModelMeta / ModelParams
//   tensor <name> <dim>...          followed by the values, one matrix row
//   <v> <v> ...                     per line (a vector is a single line)
//
// Reals are written with 17 significant digits so a save/load round trip is
// bit-exact.

#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "tarnn/cells.hpp"
#include "tarnn/data.hpp"
#include "tarnn/errors.hpp"
#include "tarnn/integrators.hpp"
#include "tarnn/rng.hpp"
#include "tarnn/tensor.hpp"

namespace tarnn {

struct ModelDims {
  std::size_t k_x_raw = 1;  ///< observed input channels (+1 with the delta channel)
  std::size_t k = 1;        ///< cell input size = state size
  std::size_t k_out = 1;

  friend bool operator==(const ModelDims&, const ModelDims&) = default;
};

/// Everything besides the weights that is needed to reuse a model on data.
struct ModelMeta {
  Scheme scheme = Scheme::euler;
  Formulation formulation = Formulation::stationary;
  Interpolation interpolation = Interpolation::constant;
  bool delta_channel = false;
  double mu_delta = 1.0;
  double p_missing = 0.0;  ///< subsampling applied to the data file at load time
  std::uint64_t missing_seed = 0;
  NormStats stats;
  std::string data_digest;
  std::string config_digest;
  std::uint64_t seed = 0;
  std::size_t epochs = 0;  ///< epochs run by the training that produced this file
};

struct ModelParams {
  CellKind kind = CellKind::gru;
  ModelDims dims;
  EmbedParams<Tensor> embed;
  std::variant<GruParams<Tensor>, AsrnnParams<Tensor>> cell;
  OutputParams<Tensor> out;
  Tensor h0;
  ModelMeta meta;

  double gamma() const {
    return kind == CellKind::asrnn ? std::get<AsrnnParams<Tensor>>(cell).gamma : 0.0;
  }
  double epsilon() const {
    return kind == CellKind::asrnn ? std::get<AsrnnParams<Tensor>>(cell).epsilon : 1.0;
  }

  /// Visits every trainable tensor in a fixed order with a qualified name.
  template <class F>
  void for_each_tensor(F&& f) {
    embed.for_each([&](const char* n, Tensor& t) { f(std::string("embed.") + n, t); });
    std::visit([&](auto& c) { c.for_each([&](const char* n, Tensor& t) { f(std::string("cell.") + n, t); }); },
               cell);
    out.for_each([&](const char* n, Tensor& t) { f(std::string("out.") + n, t); });
    f(std::string("h0"), h0);
  }
  template <class F>
  void for_each_tensor(F&& f) const {
    const_cast<ModelParams*>(this)->for_each_tensor(
        [&](const std::string& n, Tensor& t) { f(n, static_cast<const Tensor&>(t)); });
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for_each_tensor([&](const std::string&, const Tensor& t) { n += t.size(); });
    return n;
  }

  std::vector<double> flatten() const {
    std::vector<double> v;
    for_each_tensor([&](const std::string&, const Tensor& t) {
      v.insert(v.end(), t.values().begin(), t.values().end());
    });
    return v;
  }

  void unflatten(std::span<const double> v) {
    std::size_t at = 0;
    for_each_tensor([&](const std::string&, Tensor& t) {
      std::copy_n(v.begin() + static_cast<std::ptrdiff_t>(at), t.size(), t.values().begin());
      at += t.size();
    });
  }
};

namespace detail {
inline Tensor uniform_matrix(Rng& rng, std::size_t rows, std::size_t cols) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(cols));
  Tensor t(Shape{rows, cols});
  for (auto& v : t.values()) v = rng.uniform(-bound, bound);
  return t;
}
}  // namespace detail

/// Matrices ~ U(-1/sqrt(cols), 1/sqrt(cols)), biases zero, h0 ~ U(-0.1, 0.1).
inline ModelParams init_params(std::uint64_t seed, ModelDims dims, CellKind kind, double gamma = 1.0,
                               double epsilon = 1.0) {
  if (dims.k_x_raw == 0 || dims.k == 0 || dims.k_out == 0) {
    throw std::invalid_argument("init_params: dimensions must be positive");
  }
  Rng rng(seed);
  const std::size_t k = dims.k;
  ModelParams p;
  p.kind = kind;
  p.dims = dims;
  p.embed.W_e = detail::uniform_matrix(rng, k, dims.k_x_raw);
  p.embed.b_e = Tensor(Shape{k});
  if (kind == CellKind::gru) {
    GruParams<Tensor> g;
    g.W_h = detail::uniform_matrix(rng, k, k);
    g.W_z = detail::uniform_matrix(rng, k, k);
    g.W_r = detail::uniform_matrix(rng, k, k);
    g.U_h = detail::uniform_matrix(rng, k, k);
    g.U_z = detail::uniform_matrix(rng, k, k);
    g.U_r = detail::uniform_matrix(rng, k, k);
    g.b_h = g.b_z = g.b_r = Tensor(Shape{k});
    p.cell = std::move(g);
  } else {
    if (gamma < 0.0) throw std::invalid_argument("init_params: gamma must be non-negative");
    if (!(epsilon > 0.0)) throw std::invalid_argument("init_params: epsilon must be positive");
    AsrnnParams<Tensor> a;
    a.W_h = detail::uniform_matrix(rng, k, k);
    a.W_z = detail::uniform_matrix(rng, k, k);
    a.M = detail::uniform_matrix(rng, k, k);
    a.b_h = a.b_z = Tensor(Shape{k});
    a.gamma = gamma;
    a.epsilon = epsilon;
    p.cell = std::move(a);
  }
  p.out.W_o = detail::uniform_matrix(rng, dims.k_out, k);
  p.out.b_o = Tensor(Shape{dims.k_out});
  p.h0 = Tensor(Shape{k});
  for (auto& v : p.h0.values()) v = rng.uniform(-0.1, 0.1);
  return p;
}

// ---------------------------------------------------------------------------
// Serialization

namespace detail {

inline std::string join_doubles(const std::vector<double>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += ' ';
    s += format_double(v[i]);
  }
  return s;
}

inline std::vector<double> split_doubles(const std::string& s, const std::string& where) {
  std::vector<double> out;
  std::istringstream is(s);
  std::string tok;
  while (is >> tok) {
    char* end = nullptr;
    const double v = std::strtod(tok.c_str(), &end);
    if (end != tok.c_str() + tok.size()) throw DataError(where + ": bad number '" + tok + "'");
    out.push_back(v);
  }
  return out;
}

}  // namespace detail

inline void save_model(std::ostream& os, const ModelParams& p) {
  const auto& m = p.meta;
  os << "# tarnn model\n";
  os << "format = tarnn-model-1\n";
  os << "cell = " << to_string(p.kind) << '\n';
  os << "k_x_raw = " << p.dims.k_x_raw << '\n';
  os << "k = " << p.dims.k << '\n';
  os << "k_out = " << p.dims.k_out << '\n';
  os << "gamma = " << format_double(p.gamma()) << '\n';
  os << "epsilon = " << format_double(p.epsilon()) << '\n';
  os << "scheme = " << to_string(m.scheme) << '\n';
  os << "formulation = " << to_string(m.formulation) << '\n';
  os << "interpolation = " << to_string(m.interpolation) << '\n';
  os << "delta_channel = " << (m.delta_channel ? 1 : 0) << '\n';
  os << "mu_delta = " << format_double(m.mu_delta) << '\n';
  os << "p_missing = " << format_double(m.p_missing) << '\n';
  os << "missing_seed = " << m.missing_seed << '\n';
  os << "input_mean = " << detail::join_doubles(m.stats.x_mean) << '\n';
  os << "input_std = " << detail::join_doubles(m.stats.x_std) << '\n';
  os << "output_mean = " << detail::join_doubles(m.stats.y_mean) << '\n';
  os << "output_std = " << detail::join_doubles(m.stats.y_std) << '\n';
  os << "data_digest = " << m.data_digest << '\n';
  os << "config_digest = " << m.config_digest << '\n';
  os << "seed = " << m.seed << '\n';
  os << "epochs = " << m.epochs << '\n';
  p.for_each_tensor([&](const std::string& name, const Tensor& t) {
    os << "tensor " << name;
    for (auto d : t.shape()) os << ' ' << d;
    os << '\n';
    const std::size_t rows = t.rank() == 2 ? t.rows() : 1;
    const std::size_t cols = t.size() / (rows ? rows : 1);
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < cols; ++c) {
        if (c) os << ' ';
        os << format_double(t[r * cols + c]);
      }
      os << '\n';
    }
  });
}

inline std::string model_to_string(const ModelParams& p) {
  std::ostringstream os;
  save_model(os, p);
  return os.str();
}

inline void save_model(const std::string& path, const ModelParams& p) {
  // Write to a temporary first so a failure never leaves a partial model.
  const std::string tmp = path + ".tmp";
  {
    std::ofstream os(tmp);
    if (!os) throw DataError(path + ": cannot open for writing");
    save_model(os, p);
    if (!os) throw DataError(path + ": write failed");
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) {
    std::remove(tmp.c_str());
    throw DataError(path + ": cannot move model into place");
  }
}

inline ModelParams load_model(std::istream& is, const std::string& where = "<model>") {
  std::map<std::string, std::string> kv;
  std::map<std::string, Tensor> tensors;
  std::string line;
  std::size_t line_no = 0;
  auto fail = [&](const std::string& msg) -> DataError {
    return DataError(where + ":" + std::to_string(line_no) + ": " + msg);
  };
  while (std::getline(is, line)) {
    ++line_no;
    if (detail::is_blank_or_comment(line)) continue;
    if (line.rfind("tensor ", 0) == 0) {
      std::istringstream hs(line.substr(7));
      std::string name;
      hs >> name;
      Shape shape;
      std::size_t d;
      while (hs >> d) shape.push_back(d);
      const std::size_t rows = shape.size() == 2 ? shape[0] : 1;
      std::vector<double> values;
      for (std::size_t r = 0; r < rows; ++r) {
        if (!std::getline(is, line)) throw fail("truncated tensor " + name);
        ++line_no;
        auto row = detail::split_doubles(line, where + ":" + std::to_string(line_no));
        values.insert(values.end(), row.begin(), row.end());
      }
      if (values.size() != shape_size(shape)) throw fail("tensor " + name + " has wrong element count");
      tensors.emplace(name, Tensor(shape, std::move(values)));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw fail("expected 'key = value'");
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      const auto e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }

  auto get = [&](const std::string& key) -> const std::string& {
    auto it = kv.find(key);
    if (it == kv.end()) throw DataError(where + ": missing key '" + key + "'");
    return it->second;
  };
  if (get("format") != "tarnn-model-1") throw DataError(where + ": unsupported format " + get("format"));

  ModelParams p;
  p.kind = parse_cell_kind(get("cell"));
  p.dims.k_x_raw = std::stoul(get("k_x_raw"));
  p.dims.k = std::stoul(get("k"));
  p.dims.k_out = std::stoul(get("k_out"));
  const double gamma = std::strtod(get("gamma").c_str(), nullptr);
  const double epsilon = std::strtod(get("epsilon").c_str(), nullptr);
  auto& m = p.meta;
  m.scheme = parse_scheme(get("scheme"));
  m.formulation = parse_formulation(get("formulation"));
  m.interpolation = parse_interpolation(get("interpolation"));
  m.delta_channel = get("delta_channel") == "1";
  m.mu_delta = std::strtod(get("mu_delta").c_str(), nullptr);
  m.p_missing = std::strtod(get("p_missing").c_str(), nullptr);
  m.missing_seed = std::stoull(get("missing_seed"));
  m.stats.x_mean = detail::split_doubles(get("input_mean"), where);
  m.stats.x_std = detail::split_doubles(get("input_std"), where);
  m.stats.y_mean = detail::split_doubles(get("output_mean"), where);
  m.stats.y_std = detail::split_doubles(get("output_std"), where);
  m.data_digest = get("data_digest");
  m.config_digest = get("config_digest");
  m.seed = std::stoull(get("seed"));
  m.epochs = std::stoul(get("epochs"));

  if (p.kind == CellKind::gru) {
    p.cell = GruParams<Tensor>{};
  } else {
    AsrnnParams<Tensor> a;
    a.gamma = gamma;
    a.epsilon = epsilon;
    p.cell = a;
  }
  p.for_each_tensor([&](const std::string& name, Tensor& t) {
    auto it = tensors.find(name);
    if (it == tensors.end()) throw DataError(where + ": missing tensor '" + name + "'");
    t = it->second;
  });
  // Shapes are checked against the declared dimensions.
  const ModelParams ref = init_params(0, p.dims, p.kind, std::max(gamma, 0.0), epsilon > 0 ? epsilon : 1.0);
  std::vector<Shape> expected;
  ref.for_each_tensor([&](const std::string&, const Tensor& t) { expected.push_back(t.shape()); });
  std::size_t i = 0;
  p.for_each_tensor([&](const std::string& name, const Tensor& t) {
    if (t.shape() != expected[i++]) {
      throw DataError(where + ": tensor '" + name + "' has shape " + shape_string(t.shape()) +
                      ", expected " + shape_string(expected[i - 1]));
    }
  });
  return p;
}

inline ModelParams load_model(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw DataError(path + ": cannot open model file");
  return load_model(is, path);
}

}  // namespace tarnn
