// Copyright (c) 2026 The servolnn Authors
// SPDX-License-Identifier: Apache-2.0
//
// Minimal dense computation graph with symbolic forward-mode differentiation
// and numeric reverse-mode accumulation.
//
// derive() returns a new graph built from the same op kinds, so it can be
// differentiated again: a loss containing dV/dq is an ordinary graph whose
// parameter gradient comes from backward(). Graphs are immutable; all
// evaluation state lives in a Plan, one per worker.
//
// Every node is a matrix (rows x cols). Scalars are 1x1.

#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "servolnn/error.hpp"
#include "servolnn/tensor.hpp"

namespace servolnn::autodiff {

enum class OpKind {
  input,
  parameter,
  constant,
  add,
  matmul,
  hadamard,
  scale,
  transpose,
  softplus,
  relu,
  sigmoid,
  sum,
  square,
  concat,
  select,
  // Heaviside step with step(0) = 0; the derivative of relu.
  step,
  // Element-wise 1/x; needed by the linear solves in forward dynamics.
  reciprocal,
};

inline const char* op_name(OpKind kind) {
  switch (kind) {
    case OpKind::input: return "input";
    case OpKind::parameter: return "parameter";
    case OpKind::constant: return "constant";
    case OpKind::add: return "add";
    case OpKind::matmul: return "matmul";
    case OpKind::hadamard: return "hadamard";
    case OpKind::scale: return "scale";
    case OpKind::transpose: return "transpose";
    case OpKind::softplus: return "softplus";
    case OpKind::relu: return "relu";
    case OpKind::sigmoid: return "sigmoid";
    case OpKind::sum: return "sum";
    case OpKind::square: return "square";
    case OpKind::concat: return "concat";
    case OpKind::select: return "select";
    case OpKind::step: return "step";
    case OpKind::reciprocal: return "reciprocal";
  }
  return "?";
}

struct Node;
using NodePtr = std::shared_ptr<const Node>;

struct Node {
  OpKind kind;
  std::vector<NodePtr> parents;
  std::size_t rows = 1;
  std::size_t cols = 1;
  double factor = 1.0;      // scale
  std::size_t offset = 0;   // select: first row taken from the parent
  DenseTensor value;        // constant payload
  std::string name;         // input / parameter label
  std::uint64_t id = 0;

  Shape shape() const { return Shape{rows, cols}; }
  std::size_t size() const { return rows * cols; }
  bool is_leaf() const {
    return kind == OpKind::input || kind == OpKind::parameter ||
           kind == OpKind::constant;
  }
};

namespace detail {

inline std::uint64_t next_id() {
  static std::atomic<std::uint64_t> counter{1};
  return counter.fetch_add(1, std::memory_order_relaxed);
}

inline NodePtr make(OpKind kind, std::vector<NodePtr> parents,
                    std::size_t rows, std::size_t cols) {
  auto node = std::make_shared<Node>();
  node->kind = kind;
  node->parents = std::move(parents);
  node->rows = rows;
  node->cols = cols;
  node->id = next_id();
  return node;
}

inline void require(const NodePtr& n, const char* what) {
  if (!n) throw UsageError(std::string(what) + ": null node");
}

inline void require_same_shape(const NodePtr& a, const NodePtr& b,
                               const char* what) {
  require(a, what);
  require(b, what);
  if (a->rows != b->rows || a->cols != b->cols) {
    throw ConfigError(std::string(what) + ": shape mismatch " +
                      shape_string(a->shape()) + " vs " +
                      shape_string(b->shape()));
  }
}

inline double softplus(double x) {
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace detail

// -- graph builders -------------------------------------------------------

inline NodePtr input(std::string name, std::size_t rows, std::size_t cols) {
  auto n = detail::make(OpKind::input, {}, rows, cols);
  const_cast<Node&>(*n).name = std::move(name);
  return n;
}

inline NodePtr parameter(std::string name, std::size_t rows,
                         std::size_t cols) {
  auto n = detail::make(OpKind::parameter, {}, rows, cols);
  const_cast<Node&>(*n).name = std::move(name);
  return n;
}

inline NodePtr constant(DenseTensor value) {
  auto n = detail::make(OpKind::constant, {}, value.rows(), value.cols());
  Shape shape{value.rows(), value.cols()};
  const_cast<Node&>(*n).value = DenseTensor(std::move(shape), std::move(value.storage()));
  return n;
}

inline NodePtr filled(std::size_t rows, std::size_t cols, double v) {
  return constant(DenseTensor::matrix(rows, cols, v));
}

inline NodePtr add(const NodePtr& a, const NodePtr& b) {
  detail::require_same_shape(a, b, "add");
  return detail::make(OpKind::add, {a, b}, a->rows, a->cols);
}

inline NodePtr matmul(const NodePtr& a, const NodePtr& b) {
  detail::require(a, "matmul");
  detail::require(b, "matmul");
  if (a->cols != b->rows) {
    throw ConfigError("matmul: inner dimensions differ " +
                      shape_string(a->shape()) + " x " +
                      shape_string(b->shape()));
  }
  return detail::make(OpKind::matmul, {a, b}, a->rows, b->cols);
}

inline NodePtr hadamard(const NodePtr& a, const NodePtr& b) {
  detail::require_same_shape(a, b, "hadamard");
  return detail::make(OpKind::hadamard, {a, b}, a->rows, a->cols);
}

inline NodePtr scale(const NodePtr& a, double factor) {
  detail::require(a, "scale");
  auto n = detail::make(OpKind::scale, {a}, a->rows, a->cols);
  const_cast<Node&>(*n).factor = factor;
  return n;
}

inline NodePtr transpose(const NodePtr& a) {
  detail::require(a, "transpose");
  return detail::make(OpKind::transpose, {a}, a->cols, a->rows);
}

inline NodePtr unary(OpKind kind, const NodePtr& a) {
  detail::require(a, op_name(kind));
  return detail::make(kind, {a}, a->rows, a->cols);
}

inline NodePtr softplus(const NodePtr& a) { return unary(OpKind::softplus, a); }
inline NodePtr relu(const NodePtr& a) { return unary(OpKind::relu, a); }
inline NodePtr sigmoid(const NodePtr& a) { return unary(OpKind::sigmoid, a); }
inline NodePtr square(const NodePtr& a) { return unary(OpKind::square, a); }
inline NodePtr step(const NodePtr& a) { return unary(OpKind::step, a); }
inline NodePtr reciprocal(const NodePtr& a) {
  return unary(OpKind::reciprocal, a);
}

inline NodePtr sum(const NodePtr& a) {
  detail::require(a, "sum");
  return detail::make(OpKind::sum, {a}, 1, 1);
}

/// Vertical stack; all parts must share the column count.
inline NodePtr concat(std::vector<NodePtr> parts) {
  if (parts.empty()) throw UsageError("concat: no parts");
  std::size_t rows = 0;
  const std::size_t cols = parts.front() ? parts.front()->cols : 0;
  for (const auto& p : parts) {
    detail::require(p, "concat");
    if (p->cols != cols) throw ConfigError("concat: column count mismatch");
    rows += p->rows;
  }
  return detail::make(OpKind::concat, std::move(parts), rows, cols);
}

/// Rows [offset, offset + count) of a.
inline NodePtr select(const NodePtr& a, std::size_t offset,
                      std::size_t count) {
  detail::require(a, "select");
  if (offset + count > a->rows || count == 0) {
    throw ConfigError("select: rows out of range");
  }
  auto n = detail::make(OpKind::select, {a}, count, a->cols);
  const_cast<Node&>(*n).offset = offset;
  return n;
}

// -- symbolic differentiation ---------------------------------------------

/// Forward-mode symbolic tangent with respect to one leaf.
///
/// The seed is the all-ones tensor of the leaf's shape, so for a scalar leaf
/// the tangent is the ordinary derivative, and for a 1 x B batch row whose
/// columns are independent samples it is the per-sample partial derivative.
/// Tangents are memoized, so differentiating several roots with one
/// Differentiator shares all common subgraphs. A null result means the
/// tangent is identically zero.
class Differentiator {
 public:
  explicit Differentiator(NodePtr wrt) : wrt_(std::move(wrt)) {
    detail::require(wrt_, "derive");
    if (wrt_->kind != OpKind::input && wrt_->kind != OpKind::parameter) {
      throw UsageError("derive: target must be an input or parameter node");
    }
  }

  const NodePtr& wrt() const { return wrt_; }

  NodePtr tangent(const NodePtr& node) {
    detail::require(node, "derive");
    if (auto it = memo_.find(node.get()); it != memo_.end()) return it->second;
    NodePtr t = compute(node);
    memo_.emplace(node.get(), t);
    return t;
  }

  /// Tangent with zero materialized as a constant of the node's shape.
  NodePtr dense_tangent(const NodePtr& node) {
    NodePtr t = tangent(node);
    return t ? t : filled(node->rows, node->cols, 0.0);
  }

 private:
  static NodePtr plus(const NodePtr& a, const NodePtr& b) {
    if (!a) return b;
    if (!b) return a;
    return add(a, b);
  }

  NodePtr compute(const NodePtr& n) {
    const auto& p = n->parents;
    switch (n->kind) {
      case OpKind::input:
      case OpKind::parameter:
        return n == wrt_ ? filled(n->rows, n->cols, 1.0) : nullptr;
      case OpKind::constant:
      case OpKind::step:
        return nullptr;
      case OpKind::add:
        return plus(tangent(p[0]), tangent(p[1]));
      case OpKind::matmul: {
        NodePtr da = tangent(p[0]);
        NodePtr db = tangent(p[1]);
        return plus(da ? matmul(da, p[1]) : nullptr,
                    db ? matmul(p[0], db) : nullptr);
      }
      case OpKind::hadamard: {
        NodePtr da = tangent(p[0]);
        NodePtr db = tangent(p[1]);
        return plus(da ? hadamard(da, p[1]) : nullptr,
                    db ? hadamard(p[0], db) : nullptr);
      }
      case OpKind::scale: {
        NodePtr da = tangent(p[0]);
        return da ? scale(da, n->factor) : nullptr;
      }
      case OpKind::transpose: {
        NodePtr da = tangent(p[0]);
        return da ? transpose(da) : nullptr;
      }
      case OpKind::softplus: {
        NodePtr da = tangent(p[0]);
        return da ? hadamard(sigmoid(p[0]), da) : nullptr;
      }
      case OpKind::relu: {
        NodePtr da = tangent(p[0]);
        return da ? hadamard(step(p[0]), da) : nullptr;
      }
      case OpKind::sigmoid: {
        NodePtr da = tangent(p[0]);
        if (!da) return nullptr;
        // s (1 - s) da, with s the node itself
        NodePtr one_minus = add(filled(n->rows, n->cols, 1.0), scale(n, -1.0));
        return hadamard(hadamard(n, one_minus), da);
      }
      case OpKind::sum: {
        NodePtr da = tangent(p[0]);
        return da ? sum(da) : nullptr;
      }
      case OpKind::square: {
        NodePtr da = tangent(p[0]);
        return da ? scale(hadamard(p[0], da), 2.0) : nullptr;
      }
      case OpKind::concat: {
        std::vector<NodePtr> parts;
        bool any = false;
        for (const auto& part : p) {
          NodePtr t = tangent(part);
          any = any || t;
          parts.push_back(t ? t : filled(part->rows, part->cols, 0.0));
        }
        return any ? concat(std::move(parts)) : nullptr;
      }
      case OpKind::select: {
        NodePtr da = tangent(p[0]);
        return da ? select(da, n->offset, n->rows) : nullptr;
      }
      case OpKind::reciprocal: {
        NodePtr da = tangent(p[0]);
        return da ? scale(hadamard(square(n), da), -1.0) : nullptr;
      }
    }
    throw UsageError("derive: unknown op");
  }

  NodePtr wrt_;
  std::unordered_map<const Node*, NodePtr> memo_;
};

inline bool depends_on(const NodePtr& graph, const Node* target) {
  std::unordered_set<const Node*> seen;
  std::vector<const Node*> stack{graph.get()};
  while (!stack.empty()) {
    const Node* n = stack.back();
    stack.pop_back();
    if (n == target) return true;
    if (!seen.insert(n).second) continue;
    for (const auto& p : n->parents) stack.push_back(p.get());
  }
  return false;
}

/// Graph evaluating to the tangent of `graph` along the all-ones direction of
/// `wrt` (see Differentiator). The result is itself differentiable.
inline NodePtr derive(const NodePtr& graph, const NodePtr& wrt) {
  detail::require(graph, "derive");
  detail::require(wrt, "derive");
  if (!depends_on(graph, wrt.get())) {
    throw UsageError("derive: node '" + wrt->name + "' is not in the graph");
  }
  Differentiator d(wrt);
  return d.dense_tangent(graph);
}

// -- evaluation -----------------------------------------------------------

using GradientMap = std::unordered_map<const Node*, DenseTensor>;
using Bindings = std::vector<std::pair<NodePtr, DenseTensor>>;

/// Topologically ordered evaluation context for a fixed set of roots.
///
/// Holds the value buffers and adjoint buffers, so repeated evaluation with
/// new bindings does not allocate. Not thread-safe; use one Plan per worker.
class Plan {
 public:
  explicit Plan(std::vector<NodePtr> roots) : roots_(std::move(roots)) {
    std::unordered_set<const Node*> visited;
    for (const auto& r : roots_) {
      detail::require(r, "plan");
      visit(r, visited);
    }
    values_.resize(order_.size());
    bound_.assign(order_.size(), 0);
    parent_slots_.resize(order_.size());
    for (std::size_t i = 0; i < order_.size(); ++i) {
      for (const auto& p : order_[i]->parents) {
        parent_slots_[i].push_back(slot_.at(p.get()));
      }
    }
    for (std::size_t i = 0; i < order_.size(); ++i) {
      const Node* n = order_[i];
      if (n->kind == OpKind::constant) {
        values_[i] = n->value;
        bound_[i] = 1;
      } else {
        values_[i].reset(n->shape(), 0.0);
      }
    }
  }

  explicit Plan(NodePtr root) : Plan(std::vector<NodePtr>{std::move(root)}) {}

  bool contains(const NodePtr& n) const { return slot_.count(n.get()) > 0; }
  std::size_t node_count() const { return order_.size(); }

  void bind(const NodePtr& node, std::span<const double> values) {
    const std::size_t i = leaf_slot(node);
    if (values.size() != node->size()) {
      throw ConfigError("bind '" + node->name + "': expected " +
                        std::to_string(node->size()) + " values, got " +
                        std::to_string(values.size()));
    }
    std::copy(values.begin(), values.end(), values_[i].storage().begin());
    bound_[i] = 1;
  }

  void bind(const NodePtr& node, const DenseTensor& value) {
    if (value.rows() != node->rows || value.cols() != node->cols) {
      throw ConfigError("bind '" + node->name + "': shape " +
                        shape_string(value.shape()) + " does not match " +
                        shape_string(node->shape()));
    }
    bind(node, value.values());
  }

  void bind(const Bindings& bindings) {
    for (const auto& [node, value] : bindings) {
      if (contains(node)) bind(node, value);
    }
  }

  void run() {
    for (std::size_t i = 0; i < order_.size(); ++i) {
      const Node* n = order_[i];
      if (n->is_leaf()) {
        if (!bound_[i]) {
          throw UsageError(std::string("unbound ") + op_name(n->kind) +
                           " node '" + n->name + "'");
        }
        continue;
      }
      compute(i);
    }
  }

  const DenseTensor& value(const NodePtr& node) const {
    auto it = slot_.find(node.get());
    if (it == slot_.end()) throw UsageError("node not in plan");
    return values_[it->second];
  }

  /// Reverse-mode gradient of a scalar root. Requires a preceding run().
  GradientMap backward(const NodePtr& root, std::span<const NodePtr> targets) {
    detail::require(root, "backward");
    if (root->size() != 1) {
      throw UsageError("backward: root must be scalar, got " +
                       shape_string(root->shape()));
    }
    auto it = slot_.find(root.get());
    if (it == slot_.end()) throw UsageError("backward: root not in plan");
    const std::size_t root_slot = it->second;

    if (adjoint_.size() != order_.size()) {
      adjoint_.resize(order_.size());
      touched_.assign(order_.size(), 0);
    }
    std::fill(touched_.begin(), touched_.end(), 0);
    touch(root_slot).fill(1.0);

    for (std::size_t i = root_slot + 1; i-- > 0;) {
      if (!touched_[i] || order_[i]->is_leaf()) continue;
      propagate(i);
    }

    GradientMap out;
    for (const auto& t : targets) {
      detail::require(t, "backward");
      auto s = slot_.find(t.get());
      if (s != slot_.end() && touched_[s->second]) {
        out.emplace(t.get(), adjoint_[s->second]);
      } else {
        out.emplace(t.get(), DenseTensor(t->shape(), 0.0));
      }
    }
    return out;
  }

 private:
  void visit(const NodePtr& root, std::unordered_set<const Node*>& visited) {
    // Iterative post-order DFS; graphs from derive() can be deep.
    std::vector<std::pair<const Node*, std::size_t>> stack;
    if (visited.count(root.get())) return;
    stack.emplace_back(root.get(), 0);
    visited.insert(root.get());
    while (!stack.empty()) {
      auto& [n, next] = stack.back();
      if (next < n->parents.size()) {
        const Node* p = n->parents[next++].get();
        if (visited.insert(p).second) stack.emplace_back(p, 0);
        continue;
      }
      slot_.emplace(n, order_.size());
      order_.push_back(n);
      stack.pop_back();
    }
  }

  std::size_t leaf_slot(const NodePtr& node) const {
    detail::require(node, "bind");
    if (node->kind != OpKind::input && node->kind != OpKind::parameter) {
      throw UsageError("bind: only input and parameter nodes can be bound");
    }
    auto it = slot_.find(node.get());
    if (it == slot_.end()) {
      throw UsageError("bind: node '" + node->name + "' is not in the plan");
    }
    return it->second;
  }

  const DenseTensor& in(std::size_t i, std::size_t k) const {
    return values_[parent_slots_[i][k]];
  }

  std::size_t parent_slot(std::size_t i, std::size_t k) const {
    return parent_slots_[i][k];
  }

  DenseTensor& touch(std::size_t i) {
    if (!touched_[i]) {
      adjoint_[i].reset(order_[i]->shape(), 0.0);
      touched_[i] = 1;
    }
    return adjoint_[i];
  }

  void compute(std::size_t i) {
    const Node* n = order_[i];
    auto& out = values_[i].storage();
    switch (n->kind) {
      case OpKind::add: {
        const auto& a = in(i, 0).storage();
        const auto& b = in(i, 1).storage();
        for (std::size_t j = 0; j < out.size(); ++j) out[j] = a[j] + b[j];
        break;
      }
      case OpKind::matmul: {
        const DenseTensor& a = in(i, 0);
        const DenseTensor& b = in(i, 1);
        const std::size_t r = n->rows, c = n->cols, k = a.cols();
        std::fill(out.begin(), out.end(), 0.0);
        for (std::size_t row = 0; row < r; ++row) {
          double* o = out.data() + row * c;
          for (std::size_t p = 0; p < k; ++p) {
            const double av = a.storage()[row * k + p];
            if (av == 0.0) continue;
            const double* bp = b.storage().data() + p * c;
            for (std::size_t col = 0; col < c; ++col) o[col] += av * bp[col];
          }
        }
        break;
      }
      case OpKind::hadamard: {
        const auto& a = in(i, 0).storage();
        const auto& b = in(i, 1).storage();
        for (std::size_t j = 0; j < out.size(); ++j) out[j] = a[j] * b[j];
        break;
      }
      case OpKind::scale: {
        const auto& a = in(i, 0).storage();
        for (std::size_t j = 0; j < out.size(); ++j) out[j] = n->factor * a[j];
        break;
      }
      case OpKind::transpose: {
        const DenseTensor& a = in(i, 0);
        for (std::size_t r = 0; r < a.rows(); ++r)
          for (std::size_t c = 0; c < a.cols(); ++c)
            out[c * n->cols + r] = a(r, c);
        break;
      }
      case OpKind::softplus:
        map(i, [](double x) { return detail::softplus(x); });
        break;
      case OpKind::relu:
        map(i, [](double x) { return x > 0.0 ? x : 0.0; });
        break;
      case OpKind::sigmoid:
        map(i, [](double x) { return detail::sigmoid(x); });
        break;
      case OpKind::square:
        map(i, [](double x) { return x * x; });
        break;
      case OpKind::step:
        map(i, [](double x) { return x > 0.0 ? 1.0 : 0.0; });
        break;
      case OpKind::reciprocal:
        map(i, [](double x) { return 1.0 / x; });
        break;
      case OpKind::sum: {
        double s = 0.0;
        for (double v : in(i, 0).storage()) s += v;
        out[0] = s;
        break;
      }
      case OpKind::concat: {
        std::size_t pos = 0;
        for (std::size_t k = 0; k < n->parents.size(); ++k) {
          const auto& a = in(i, k).storage();
          std::copy(a.begin(), a.end(), out.begin() + pos);
          pos += a.size();
        }
        break;
      }
      case OpKind::select: {
        const auto& a = in(i, 0).storage();
        const auto first = a.begin() + n->offset * n->cols;
        std::copy(first, first + out.size(), out.begin());
        break;
      }
      default:
        break;
    }
  }

  template <class F>
  void map(std::size_t i, F f) {
    const auto& a = in(i, 0).storage();
    auto& out = values_[i].storage();
    for (std::size_t j = 0; j < out.size(); ++j) out[j] = f(a[j]);
  }

  void propagate(std::size_t i) {
    const Node* n = order_[i];
    const auto& g = adjoint_[i].storage();
    switch (n->kind) {
      case OpKind::add: {
        for (std::size_t k = 0; k < 2; ++k) {
          auto& ga = touch(parent_slot(i, k)).storage();
          for (std::size_t j = 0; j < g.size(); ++j) ga[j] += g[j];
        }
        break;
      }
      case OpKind::matmul: {
        const std::size_t sa = parent_slot(i, 0), sb = parent_slot(i, 1);
        const DenseTensor& a = values_[sa];
        const DenseTensor& b = values_[sb];
        const std::size_t r = n->rows, c = n->cols, k = a.cols();
        if (order_[sa]->kind != OpKind::constant) {
          auto& ga = touch(sa).storage();  // ga += g b^T
          for (std::size_t row = 0; row < r; ++row) {
            const double* gr = g.data() + row * c;
            for (std::size_t p = 0; p < k; ++p) {
              const double* bp = b.storage().data() + p * c;
              double acc = 0.0;
              for (std::size_t col = 0; col < c; ++col) acc += gr[col] * bp[col];
              ga[row * k + p] += acc;
            }
          }
        }
        if (order_[sb]->kind != OpKind::constant) {
          auto& gb = touch(sb).storage();  // gb += a^T g
          for (std::size_t row = 0; row < r; ++row) {
            const double* gr = g.data() + row * c;
            for (std::size_t p = 0; p < k; ++p) {
              const double av = a.storage()[row * k + p];
              if (av == 0.0) continue;
              double* gbp = gb.data() + p * c;
              for (std::size_t col = 0; col < c; ++col) gbp[col] += av * gr[col];
            }
          }
        }
        break;
      }
      case OpKind::hadamard: {
        const std::size_t sa = parent_slot(i, 0), sb = parent_slot(i, 1);
        const auto& a = values_[sa].storage();
        const auto& b = values_[sb].storage();
        if (order_[sa]->kind != OpKind::constant) {
          auto& ga = touch(sa).storage();
          for (std::size_t j = 0; j < g.size(); ++j) ga[j] += g[j] * b[j];
        }
        if (order_[sb]->kind != OpKind::constant) {
          auto& gb = touch(sb).storage();
          for (std::size_t j = 0; j < g.size(); ++j) gb[j] += g[j] * a[j];
        }
        break;
      }
      case OpKind::scale: {
        auto& ga = touch(parent_slot(i, 0)).storage();
        for (std::size_t j = 0; j < g.size(); ++j) ga[j] += n->factor * g[j];
        break;
      }
      case OpKind::transpose: {
        auto& ga = touch(parent_slot(i, 0));
        for (std::size_t r = 0; r < n->rows; ++r)
          for (std::size_t c = 0; c < n->cols; ++c)
            ga(c, r) += g[r * n->cols + c];
        break;
      }
      case OpKind::softplus:
        chain(i, [](double x, double) { return detail::sigmoid(x); });
        break;
      case OpKind::relu:
        chain(i, [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
        break;
      case OpKind::sigmoid:
        chain(i, [](double, double y) { return y * (1.0 - y); });
        break;
      case OpKind::square:
        chain(i, [](double x, double) { return 2.0 * x; });
        break;
      case OpKind::reciprocal:
        chain(i, [](double, double y) { return -y * y; });
        break;
      case OpKind::step:
        break;
      case OpKind::sum: {
        auto& ga = touch(parent_slot(i, 0)).storage();
        for (double& v : ga) v += g[0];
        break;
      }
      case OpKind::concat: {
        std::size_t pos = 0;
        for (std::size_t k = 0; k < n->parents.size(); ++k) {
          const std::size_t s = parent_slot(i, k);
          const std::size_t len = order_[s]->size();
          if (order_[s]->kind != OpKind::constant) {
            auto& ga = touch(s).storage();
            for (std::size_t j = 0; j < len; ++j) ga[j] += g[pos + j];
          }
          pos += len;
        }
        break;
      }
      case OpKind::select: {
        auto& ga = touch(parent_slot(i, 0)).storage();
        const std::size_t first = n->offset * n->cols;
        for (std::size_t j = 0; j < g.size(); ++j) ga[first + j] += g[j];
        break;
      }
      default:
        break;
    }
  }

  // ga += g * f'(x, y) where x is the parent value and y the node value.
  template <class F>
  void chain(std::size_t i, F dfdx) {
    const std::size_t s = parent_slot(i, 0);
    if (order_[s]->kind == OpKind::constant) return;
    const auto& x = values_[s].storage();
    const auto& y = values_[i].storage();
    const auto& g = adjoint_[i].storage();
    auto& ga = touch(s).storage();
    for (std::size_t j = 0; j < g.size(); ++j) ga[j] += g[j] * dfdx(x[j], y[j]);
  }

  std::vector<NodePtr> roots_;
  std::vector<const Node*> order_;
  std::unordered_map<const Node*, std::size_t> slot_;
  std::vector<std::vector<std::size_t>> parent_slots_;
  std::vector<DenseTensor> values_;
  std::vector<char> bound_;
  std::vector<DenseTensor> adjoint_;
  std::vector<char> touched_;
};

inline DenseTensor evaluate(const NodePtr& root, const Bindings& bindings) {
  Plan plan(root);
  plan.bind(bindings);
  plan.run();
  return plan.value(root);
}

inline GradientMap backward(const NodePtr& root,
                            std::span<const NodePtr> targets,
                            const Bindings& bindings) {
  Plan plan(root);
  plan.bind(bindings);
  plan.run();
  return plan.backward(root, targets);
}

/// Compares analytic derivatives against central differences of step `step`
/// and returns max |analytic - fd| / (|analytic| + step).
///
/// For a scalar graph every component of `node` is perturbed separately and
/// compared with the reverse-mode gradient. For a non-scalar graph the whole
/// of `node` is perturbed along the all-ones direction and every output
/// component is compared with derive().
inline double finite_difference_check(const NodePtr& graph,
                                      const NodePtr& node,
                                      const Bindings& bindings, double step) {
  if (!(step > 0.0)) throw UsageError("finite_difference_check: step <= 0");
  auto base = std::find_if(bindings.begin(), bindings.end(),
                           [&](const auto& b) { return b.first == node; });
  if (base == bindings.end()) {
    throw UsageError("finite_difference_check: node is not bound");
  }
  const DenseTensor x0 = base->second;
  Plan plan(graph);
  plan.bind(bindings);
  auto eval_at = [&](const DenseTensor& x) {
    plan.bind(node, x);
    plan.run();
    return plan.value(graph);
  };

  double worst = 0.0;
  auto record = [&](double analytic, double fd) {
    worst = std::max(worst, std::abs(analytic - fd) / (std::abs(analytic) + step));
  };

  if (graph->size() == 1) {
    eval_at(x0);
    const NodePtr targets[] = {node};
    const DenseTensor grad = plan.backward(graph, targets).at(node.get());
    for (std::size_t j = 0; j < x0.size(); ++j) {
      DenseTensor xp = x0, xm = x0;
      xp[j] += step;
      xm[j] -= step;
      const double fp = eval_at(xp).item();
      const double fm = eval_at(xm).item();
      record(grad[j], (fp - fm) / (2.0 * step));
    }
  } else {
    if (!depends_on(graph, node.get())) {
      return 0.0;
    }
    const NodePtr d = derive(graph, node);
    const DenseTensor analytic = evaluate(d, bindings);
    DenseTensor xp = x0, xm = x0;
    for (std::size_t j = 0; j < x0.size(); ++j) {
      xp[j] += step;
      xm[j] -= step;
    }
    const DenseTensor fp = eval_at(xp);
    const DenseTensor fm = eval_at(xm);
    for (std::size_t j = 0; j < analytic.size(); ++j) {
      record(analytic[j], (fp[j] - fm[j]) / (2.0 * step));
    }
  }
  return worst;
}

// -- expression wrapper ---------------------------------------------------

/// Value-semantic handle used to run the templated physics code on graphs.
/// A default-constructed Expr is a symbolic zero and folds away in
/// arithmetic, which keeps graphs for sparse mass-matrix derivatives small.
class Expr {
 public:
  Expr() = default;
  Expr(NodePtr node) : node_(std::move(node)) {}  // NOLINT(google-explicit-constructor)

  bool is_zero() const { return !node_; }
  const NodePtr& node() const { return node_; }

  /// Node with zero materialized at the given shape.
  NodePtr dense(std::size_t rows, std::size_t cols) const {
    return node_ ? node_ : filled(rows, cols, 0.0);
  }

  Expr& operator+=(const Expr& o) { return *this = *this + o; }
  Expr& operator-=(const Expr& o) { return *this = *this - o; }

  friend Expr operator+(const Expr& a, const Expr& b) {
    if (a.is_zero()) return b;
    if (b.is_zero()) return a;
    return Expr(add(a.node_, b.node_));
  }
  friend Expr operator-(const Expr& a) {
    return a.is_zero() ? a : Expr(scale(a.node_, -1.0));
  }
  friend Expr operator-(const Expr& a, const Expr& b) { return a + (-b); }
  friend Expr operator*(const Expr& a, const Expr& b) {
    if (a.is_zero() || b.is_zero()) return Expr();
    return Expr(hadamard(a.node_, b.node_));
  }
  friend Expr operator*(double c, const Expr& a) {
    if (a.is_zero() || c == 0.0) return Expr();
    if (c == 1.0) return a;
    return Expr(scale(a.node_, c));
  }
  friend Expr operator*(const Expr& a, double c) { return c * a; }
  friend Expr operator+(const Expr& a, double c) {
    if (a.is_zero()) throw UsageError("Expr + scalar: shape of zero unknown");
    if (c == 0.0) return a;
    return Expr(add(a.node_, filled(a.node_->rows, a.node_->cols, c)));
  }
  friend Expr operator+(double c, const Expr& a) { return a + c; }

 private:
  NodePtr node_;
};

inline Expr reciprocal(const Expr& a) {
  if (a.is_zero()) throw NumericalError("reciprocal of symbolic zero");
  return Expr(reciprocal(a.node()));
}

inline Expr square(const Expr& a) {
  return a.is_zero() ? a : Expr(square(a.node()));
}

}  // namespace servolnn::autodiff
