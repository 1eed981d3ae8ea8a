// Copyright (c) 2026 The servolnn Authors
// SPDX-License-Identifier: Apache-2.0
//
// Multiheaded network NN(q) -> (V, l_diag, l_lower) and the positive-definite
// mass matrix M = L L^T + eps I built from it.

#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "servolnn/autodiff.hpp"
#include "servolnn/dynamics.hpp"
#include "servolnn/error.hpp"
#include "servolnn/linalg.hpp"
#include "servolnn/tensor.hpp"

namespace servolnn {

struct NetworkConfig {
  std::size_t n_free = 1;
  std::size_t n_external = 1;
  std::vector<std::size_t> hidden{64};
  double epsilon = 0.01;

  std::size_t dim() const { return n_free + n_external; }
  std::size_t lower_count() const { return dim() * (dim() - 1) / 2; }

  void validate() const {
    if (n_free < 1) throw ConfigError("network needs at least one free coordinate");
    if (!(epsilon > 0.0)) throw ConfigError("epsilon must be positive");
    if (hidden.empty()) throw ConfigError("network needs a hidden layer");
    for (std::size_t w : hidden)
      if (w == 0) throw ConfigError("hidden layer width must be positive");
  }

  friend bool operator==(const NetworkConfig&, const NetworkConfig&) = default;
};

/// Weights in declaration order: per hidden layer (W, b), then the V head,
/// the l_diag head, and (when N > 1) the l_lower head, each as (W, b).
/// Biases are column vectors.
struct NetworkParams {
  NetworkConfig config;
  std::uint64_t seed = 0;
  std::vector<DenseTensor> tensors;

  friend bool operator==(const NetworkParams&, const NetworkParams&) = default;
};

struct NetworkOutput {
  double V = 0.0;
  Vec<double> l_diag, l_lower;
  Vec<double> dV_dq;
  std::vector<Matrix<double>> dL_dq;  // [k] = dL / dq_k
};

/// (rows, cols) of every parameter tensor, in declaration order.
inline std::vector<std::pair<std::size_t, std::size_t>> parameter_shapes(
    const NetworkConfig& c) {
  std::vector<std::pair<std::size_t, std::size_t>> shapes;
  std::size_t fan_in = c.dim();
  for (std::size_t w : c.hidden) {
    shapes.emplace_back(w, fan_in);
    shapes.emplace_back(w, 1);
    fan_in = w;
  }
  shapes.emplace_back(1, fan_in);
  shapes.emplace_back(1, 1);
  shapes.emplace_back(c.dim(), fan_in);
  shapes.emplace_back(c.dim(), 1);
  if (c.lower_count() > 0) {
    shapes.emplace_back(c.lower_count(), fan_in);
    shapes.emplace_back(c.lower_count(), 1);
  }
  return shapes;
}

/// Weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)), biases zero.
inline NetworkParams init_params(const NetworkConfig& config,
                                 std::uint64_t seed) {
  config.validate();
  NetworkParams p{config, seed, {}};
  std::mt19937_64 rng(seed);
  for (auto [rows, cols] : parameter_shapes(config)) {
    DenseTensor t = DenseTensor::matrix(rows, cols);
    if (p.tensors.size() % 2 == 0) {
      const double bound = 1.0 / std::sqrt(static_cast<double>(cols));
      std::uniform_real_distribution<double> u(-bound, bound);
      for (double& v : t.storage()) v = u(rng);
    }
    p.tensors.push_back(std::move(t));
  }
  return p;
}

/// l_diag on the diagonal; l_lower fills the strict lower triangle row by
/// row: (1,0), (2,0), (2,1), (3,0), ...
template <class T>
Matrix<T> assemble_cholesky(const Vec<T>& l_diag, const Vec<T>& l_lower) {
  const std::size_t n = l_diag.size();
  if (l_lower.size() != n * (n - 1) / 2) {
    throw UsageError("assemble_cholesky: expected " +
                     std::to_string(n * (n - 1) / 2) + " lower entries, got " +
                     std::to_string(l_lower.size()));
  }
  Matrix<T> L(n, n);
  std::size_t idx = 0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < i; ++j) L(i, j) = l_lower[idx++];
    L(i, i) = l_diag[i];
  }
  return L;
}

/// M = L L^T + eps I. Only the lower triangle is computed; the upper one is
/// a copy, so M is symmetric bit for bit.
template <class T>
Matrix<T> mass_matrix(const Matrix<T>& L, double epsilon) {
  const std::size_t n = L.rows();
  Matrix<T> M(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j <= i; ++j) {
      T acc{};
      for (std::size_t k = 0; k <= j; ++k) acc = acc + L(i, k) * L(j, k);
      if (i == j) acc = acc + epsilon;
      M(i, j) = acc;
      M(j, i) = acc;
    }
  }
  return M;
}

// -- graph form -----------------------------------------------------------

/// The network as a computation graph over a batch of B samples. Each
/// coordinate q_k is a 1 x B input row; every output is a 1 x B row.
struct NetworkGraph {
  NetworkConfig config;
  std::size_t batch = 1;
  std::vector<autodiff::NodePtr> params;  // aligned with NetworkParams::tensors
  std::vector<autodiff::NodePtr> q;
  autodiff::Expr V;
  Vec<autodiff::Expr> l_diag, l_lower;
  Vec<autodiff::Expr> dV_dq;
  std::vector<Vec<autodiff::Expr>> dl_diag_dq, dl_lower_dq;  // [k][entry]
  MassData<autodiff::Expr> mass;
};

inline NetworkGraph build_network_graph(const NetworkConfig& config,
                                        std::size_t batch) {
  using namespace autodiff;
  config.validate();
  if (batch == 0) throw ConfigError("batch size must be positive");
  const std::size_t n = config.dim();

  NetworkGraph g;
  g.config = config;
  g.batch = batch;
  const auto shapes = parameter_shapes(config);
  for (std::size_t i = 0; i < shapes.size(); ++i) {
    g.params.push_back(parameter("p" + std::to_string(i), shapes[i].first,
                                 shapes[i].second));
  }
  for (std::size_t k = 0; k < n; ++k) {
    g.q.push_back(input("q" + std::to_string(k), 1, batch));
  }

  const NodePtr ones = filled(1, batch, 1.0);
  auto affine = [&](std::size_t w_index, const NodePtr& x) {
    return add(matmul(g.params[w_index], x),
               matmul(g.params[w_index + 1], ones));
  };
  auto rows_of = [&](const NodePtr& m) {
    Vec<Expr> out;
    for (std::size_t r = 0; r < m->rows; ++r) out.emplace_back(select(m, r, 1));
    return out;
  };

  NodePtr h = n == 1 ? g.q[0] : concat(g.q);
  std::size_t w = 0;
  for (std::size_t l = 0; l < config.hidden.size(); ++l, w += 2) {
    h = softplus(affine(w, h));
  }
  g.V = Expr(affine(w, h));
  g.l_diag = rows_of(relu(affine(w + 2, h)));
  if (config.lower_count() > 0) g.l_lower = rows_of(affine(w + 4, h));

  const Matrix<Expr> L = assemble_cholesky(g.l_diag, g.l_lower);
  const Matrix<Expr> M = mass_matrix(L, config.epsilon);

  g.mass.M = M;
  g.mass.V = g.V;
  for (std::size_t k = 0; k < n; ++k) {
    Differentiator d(g.q[k]);
    auto t = [&](const Expr& e) {
      return e.is_zero() ? Expr() : Expr(d.tangent(e.node()));
    };
    g.dV_dq.push_back(t(g.V));
    Vec<Expr> dd, dl;
    for (const auto& e : g.l_diag) dd.push_back(t(e));
    for (const auto& e : g.l_lower) dl.push_back(t(e));
    g.dl_diag_dq.push_back(std::move(dd));
    g.dl_lower_dq.push_back(std::move(dl));

    Matrix<Expr> dM(n, n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j <= i; ++j) {
        dM(i, j) = t(M(i, j));
        dM(j, i) = dM(i, j);
      }
    g.mass.dM_dq.push_back(std::move(dM));
  }
  g.mass.dV_dq = g.dV_dq;
  return g;
}

/// Repeated single-sample evaluation of one parameter set. Holds a compiled
/// plan, so each instance must stay on one thread.
class NetworkEvaluator {
 public:
  explicit NetworkEvaluator(const NetworkParams& params)
      : graph_(build_network_graph(params.config, 1)),
        plan_(collect_roots(graph_)) {
    set_params(params);
  }

  const NetworkConfig& config() const { return graph_.config; }

  void set_params(const NetworkParams& params) {
    if (!(params.config == graph_.config)) {
      throw ConfigError("parameters do not match evaluator configuration");
    }
    if (params.tensors.size() != graph_.params.size()) {
      throw ConfigError("parameter tensor count mismatch");
    }
    for (std::size_t i = 0; i < graph_.params.size(); ++i) {
      plan_.bind(graph_.params[i], params.tensors[i]);
    }
  }

  NetworkOutput forward(std::span<const double> q) {
    run(q);
    const std::size_t n = graph_.config.dim();
    NetworkOutput out;
    out.V = value(graph_.V);
    for (const auto& e : graph_.l_diag) out.l_diag.push_back(value(e));
    for (const auto& e : graph_.l_lower) out.l_lower.push_back(value(e));
    for (const auto& e : graph_.dV_dq) out.dV_dq.push_back(value(e));
    for (std::size_t k = 0; k < n; ++k) {
      Vec<double> dd, dl;
      for (const auto& e : graph_.dl_diag_dq[k]) dd.push_back(value(e));
      for (const auto& e : graph_.dl_lower_dq[k]) dl.push_back(value(e));
      out.dL_dq.push_back(assemble_cholesky(dd, dl));
    }
    return out;
  }

  MassData<double> mass_data(std::span<const double> q) {
    run(q);
    const std::size_t n = graph_.config.dim();
    MassData<double> m;
    m.M = Matrix<double>(n, n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) m.M(i, j) = value(graph_.mass.M(i, j));
    for (std::size_t k = 0; k < n; ++k) {
      Matrix<double> d(n, n);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
          d(i, j) = value(graph_.mass.dM_dq[k](i, j));
      m.dM_dq.push_back(std::move(d));
    }
    m.V = value(graph_.V);
    for (const auto& e : graph_.dV_dq) m.dV_dq.push_back(value(e));
    return m;
  }

 private:
  static std::vector<autodiff::NodePtr> collect_roots(const NetworkGraph& g) {
    std::vector<autodiff::NodePtr> roots;
    auto push = [&](const autodiff::Expr& e) {
      if (!e.is_zero()) roots.push_back(e.node());
    };
    push(g.V);
    for (const auto& e : g.l_diag) push(e);
    for (const auto& e : g.l_lower) push(e);
    for (const auto& e : g.dV_dq) push(e);
    for (const auto& v : g.dl_diag_dq)
      for (const auto& e : v) push(e);
    for (const auto& v : g.dl_lower_dq)
      for (const auto& e : v) push(e);
    for (const auto& e : g.mass.M.data()) push(e);
    for (const auto& m : g.mass.dM_dq)
      for (const auto& e : m.data()) push(e);
    return roots;
  }

  void run(std::span<const double> q) {
    if (q.size() != graph_.q.size()) {
      throw UsageError("network input has " + std::to_string(q.size()) +
                       " coordinates, expected " +
                       std::to_string(graph_.q.size()));
    }
    for (std::size_t k = 0; k < q.size(); ++k) plan_.bind(graph_.q[k], q.subspan(k, 1));
    plan_.run();
  }

  double value(const autodiff::Expr& e) const {
    return e.is_zero() ? 0.0 : plan_.value(e.node())[0];
  }

  NetworkGraph graph_;
  autodiff::Plan plan_;
};

inline NetworkOutput forward(const NetworkParams& params,
                             std::span<const double> q) {
  NetworkEvaluator eval(params);
  return eval.forward(q);
}

// -- parameter files ------------------------------------------------------
//
// Little-endian binary:
//   char[8]  magic "SLNNPAR1"
//   u32      format version (1)
//   u32      n_free, u32 n_external
//   u32      hidden layer count H, then u32[H] widths
//   f64      epsilon
//   u64      seed
//   u32      tensor count
//   per tensor: u32 rows, u32 cols, f64[rows * cols] row-major

namespace detail {

inline constexpr char kParamMagic[8] = {'S', 'L', 'N', 'N', 'P', 'A', 'R', '1'};
inline constexpr std::uint32_t kParamVersion = 1;

template <class U>
U to_little(U v) {
  if constexpr (std::endian::native == std::endian::big) {
    unsigned char b[sizeof(U)];
    std::memcpy(b, &v, sizeof(U));
    for (std::size_t i = 0; i < sizeof(U) / 2; ++i) std::swap(b[i], b[sizeof(U) - 1 - i]);
    std::memcpy(&v, b, sizeof(U));
  }
  return v;
}

class BinaryWriter {
 public:
  explicit BinaryWriter(std::ostream& os) : os_(os) {}
  template <class U>
  void put(U v) {
    v = to_little(v);
    os_.write(reinterpret_cast<const char*>(&v), sizeof(U));
  }
  void put_f64(double d) { put(std::bit_cast<std::uint64_t>(d)); }

 private:
  std::ostream& os_;
};

class BinaryReader {
 public:
  BinaryReader(std::istream& is, std::string path)
      : is_(is), path_(std::move(path)) {}
  template <class U>
  U get() {
    U v;
    if (!is_.read(reinterpret_cast<char*>(&v), sizeof(U))) {
      throw ParseError(path_ + ": truncated parameter file");
    }
    return to_little(v);
  }
  double get_f64() { return std::bit_cast<double>(get<std::uint64_t>()); }
  bool at_end() { return is_.peek() == std::char_traits<char>::eof(); }

 private:
  std::istream& is_;
  std::string path_;
};

}  // namespace detail

inline void save_params(const NetworkParams& p, const std::string& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open '" + path + "' for writing");
  detail::BinaryWriter w(os);
  os.write(detail::kParamMagic, sizeof(detail::kParamMagic));
  w.put<std::uint32_t>(detail::kParamVersion);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(p.config.n_free));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(p.config.n_external));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(p.config.hidden.size()));
  for (std::size_t h : p.config.hidden) w.put<std::uint32_t>(static_cast<std::uint32_t>(h));
  w.put_f64(p.config.epsilon);
  w.put<std::uint64_t>(p.seed);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(p.tensors.size()));
  for (const auto& t : p.tensors) {
    w.put<std::uint32_t>(static_cast<std::uint32_t>(t.rows()));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(t.cols()));
    for (double v : t.storage()) w.put_f64(v);
  }
  if (!os.flush()) throw IoError("write to '" + path + "' failed");
}

inline NetworkParams load_params(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open '" + path + "' for reading");
  char magic[8];
  if (!is.read(magic, 8) || std::memcmp(magic, detail::kParamMagic, 8) != 0) {
    throw ParseError(path + ": not a servolnn parameter file");
  }
  detail::BinaryReader r(is, path);
  if (r.get<std::uint32_t>() != detail::kParamVersion) {
    throw ParseError(path + ": unsupported parameter file version");
  }
  NetworkParams p;
  p.config.n_free = r.get<std::uint32_t>();
  p.config.n_external = r.get<std::uint32_t>();
  const std::uint32_t layers = r.get<std::uint32_t>();
  if (layers > 64) throw ParseError(path + ": implausible layer count");
  p.config.hidden.clear();
  for (std::uint32_t i = 0; i < layers; ++i) p.config.hidden.push_back(r.get<std::uint32_t>());
  p.config.epsilon = r.get_f64();
  p.seed = r.get<std::uint64_t>();
  try {
    p.config.validate();
  } catch (const ConfigError& e) {
    throw ParseError(path + ": invalid header: " + e.what());
  }
  const auto shapes = parameter_shapes(p.config);
  const std::uint32_t count = r.get<std::uint32_t>();
  if (count != shapes.size()) {
    throw ParseError(path + ": tensor count does not match header");
  }
  for (const auto& [rows, cols] : shapes) {
    const std::uint32_t fr = r.get<std::uint32_t>();
    const std::uint32_t fc = r.get<std::uint32_t>();
    if (fr != rows || fc != cols) {
      throw ParseError(path + ": tensor shape does not match header");
    }
    DenseTensor t = DenseTensor::matrix(rows, cols);
    for (double& v : t.storage()) v = r.get_f64();
    p.tensors.push_back(std::move(t));
  }
  if (!r.at_end()) throw ParseError(path + ": trailing bytes");
  return p;
}

/// Loads and checks the stored configuration against the expected one.
inline NetworkParams load_params(const std::string& path,
                                 const NetworkConfig& expected) {
  NetworkParams p = load_params(path);
  if (!(p.config == expected)) {
    throw ConfigError(path + ": stored network configuration does not match");
  }
  return p;
}

}  // namespace servolnn
