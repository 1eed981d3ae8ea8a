// Copyright (c) 2026 The servolnn Authors
// SPDX-License-Identifier: Apache-2.0
//
// Losses, ADAM, and the training loop.
//
// The loss for a batch is one computation graph: network -> dynamics ->
// residuals -> mean. Input derivatives of the network (dV/dq, dM/dq) are
// symbolic tangent subgraphs, so reverse accumulation over the loss yields
// the mixed second derivatives needed for the parameter gradient.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "servolnn/autodiff.hpp"
#include "servolnn/dynamics.hpp"
#include "servolnn/error.hpp"
#include "servolnn/network.hpp"
#include "servolnn/tensor.hpp"

namespace servolnn {

enum class PowerMode { true_power, estimated_power, off };

inline const char* power_mode_name(PowerMode m) {
  switch (m) {
    case PowerMode::true_power: return "true";
    case PowerMode::estimated_power: return "estimated";
    case PowerMode::off: return "off";
  }
  return "?";
}

inline PowerMode parse_power_mode(const std::string& s) {
  if (s == "true" || s == "true_power") return PowerMode::true_power;
  if (s == "estimated" || s == "estimated_power") return PowerMode::estimated_power;
  if (s == "off") return PowerMode::off;
  throw ConfigError("unknown power mode '" + s + "'");
}

struct LossConfig {
  bool use_inverse = true;
  bool use_forward = true;
  PowerMode power_mode = PowerMode::true_power;

  void validate() const {
    if (!use_inverse && !use_forward) {
      throw ConfigError("at least one of the inverse and forward losses is required");
    }
  }
};

struct TrainConfig {
  double learning_rate = 1e-4;
  double weight_decay = 1e-5;
  std::size_t batch_size = 2048;
  std::size_t epochs = 10000;
  std::uint64_t seed = 42;
  double convergence_threshold = 1e-2;

  void validate() const {
    if (!(learning_rate > 0.0)) throw ConfigError("learning rate must be positive");
    if (weight_decay < 0.0) throw ConfigError("weight decay must be non-negative");
    if (batch_size == 0) throw ConfigError("batch size must be positive");
    if (!(convergence_threshold > 0.0)) {
      throw ConfigError("convergence threshold must be positive");
    }
  }
};

/// Training samples stored column-wise: column b of every tensor is sample b,
/// row k is coordinate k (q = [q_f; q_e]).
struct Batch {
  std::size_t n_free = 1;
  std::size_t n_external = 1;
  DenseTensor q, qd, qdd;        // N x B
  DenseTensor Q_f;               // N_f x B
  std::optional<DenseTensor> Q_e;  // N_e x B, when the data carries it

  std::size_t dim() const { return n_free + n_external; }
  std::size_t size() const { return q.cols(); }
  bool has_qe() const { return Q_e.has_value(); }

  static Batch empty(std::size_t n_free, std::size_t n_external,
                     std::size_t count, bool with_qe) {
    const std::size_t n = n_free + n_external;
    Batch b;
    b.n_free = n_free;
    b.n_external = n_external;
    b.q = DenseTensor::matrix(n, count);
    b.qd = DenseTensor::matrix(n, count);
    b.qdd = DenseTensor::matrix(n, count);
    b.Q_f = DenseTensor::matrix(n_free, count);
    if (with_qe) b.Q_e = DenseTensor::matrix(n_external, count);
    return b;
  }

  Batch subset(std::span<const std::size_t> index) const {
    Batch out = empty(n_free, n_external, index.size(), has_qe());
    auto copy = [&](const DenseTensor& from, DenseTensor& to) {
      for (std::size_t r = 0; r < from.rows(); ++r)
        for (std::size_t c = 0; c < index.size(); ++c) to(r, c) = from(r, index[c]);
    };
    copy(q, out.q);
    copy(qd, out.qd);
    copy(qdd, out.qdd);
    copy(Q_f, out.Q_f);
    if (Q_e) copy(*Q_e, *out.Q_e);
    return out;
  }

  void validate() const {
    const std::size_t n = dim(), b = size();
    auto check = [&](const DenseTensor& t, std::size_t rows, const char* what) {
      if (t.rows() != rows || t.cols() != b) {
        throw ConfigError(std::string("batch field ") + what + " has shape " +
                          shape_string(t.shape()));
      }
    };
    check(q, n, "q");
    check(qd, n, "qd");
    check(qdd, n, "qdd");
    check(Q_f, n_free, "Q_f");
    if (Q_e) check(*Q_e, n_external, "Q_e");
  }
};

// -- per-sample loss kernels ----------------------------------------------
//
// Templated so the double-valued API below and the training graph share one
// formula. With T = Expr each value is a 1 x B row of per-sample values.

template <class T>
T squared_residual(const Vec<T>& predicted, const Vec<T>& target) {
  if (predicted.size() != target.size()) {
    throw ConfigError("loss: prediction and target sizes differ");
  }
  T acc{};
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    const T r = predicted[i] - target[i];
    acc = acc + r * r;
  }
  return acc;
}

/// (qd_f^T (Qhat_f - Q_f))^2, the reduced estimated power residual.
template <class T>
T estimated_power_residual(const Vec<T>& Qhat_f, const Vec<T>& Q_f,
                           const Vec<T>& qd_f) {
  const T r = dot(qd_f, Qhat_f - Q_f);
  return r * r;
}

namespace detail {

inline double batch_mean(std::size_t n, const std::function<double(std::size_t)>& f) {
  if (n == 0) return 0.0;
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += f(i);
  return s / static_cast<double>(n);
}

inline void require_same_count(std::size_t a, std::size_t b) {
  if (a != b) throw ConfigError("loss: batch sizes differ");
}

}  // namespace detail

/// Mean over samples of ||Qhat_f - Q_f||^2.
inline double inverse_loss(const std::vector<Vec<double>>& predicted,
                           const std::vector<Vec<double>>& target) {
  detail::require_same_count(predicted.size(), target.size());
  return detail::batch_mean(predicted.size(), [&](std::size_t i) {
    return squared_residual(predicted[i], target[i]);
  });
}

/// Mean over samples of ||qddhat_f - qdd_f||^2.
inline double forward_loss(const std::vector<Vec<double>>& predicted,
                           const std::vector<Vec<double>>& target) {
  return inverse_loss(predicted, target);
}

/// Mean over samples of (Edothat - qd^T [Q_f; Q_e])^2.
inline double power_loss_true(const Vec<double>& Edot_hat,
                              const std::vector<Vec<double>>& qd,
                              const std::vector<Vec<double>>& Q_f,
                              const std::optional<std::vector<Vec<double>>>& Q_e) {
  if (!Q_e) throw ConfigError("true power loss requires Q_e targets");
  detail::require_same_count(Edot_hat.size(), qd.size());
  detail::require_same_count(Edot_hat.size(), Q_f.size());
  detail::require_same_count(Edot_hat.size(), Q_e->size());
  return detail::batch_mean(Edot_hat.size(), [&](std::size_t i) {
    const double r = Edot_hat[i] - dot(qd[i], concat(Q_f[i], (*Q_e)[i]));
    return r * r;
  });
}

/// Mean over samples of (qd_f^T (Qhat_f - Q_f))^2.
inline double power_loss_estimated(const std::vector<Vec<double>>& Qhat_f,
                                   const std::vector<Vec<double>>& Q_f,
                                   const std::vector<Vec<double>>& qd_f) {
  detail::require_same_count(Qhat_f.size(), Q_f.size());
  detail::require_same_count(Qhat_f.size(), qd_f.size());
  return detail::batch_mean(Qhat_f.size(), [&](std::size_t i) {
    return estimated_power_residual(Qhat_f[i], Q_f[i], qd_f[i]);
  });
}

// -- loss graph -----------------------------------------------------------

struct LossTerms {
  double inverse = 0.0;
  double forward = 0.0;
  double power = 0.0;
  double qe = 0.0;
  double total = 0.0;
};

struct LossEvaluation {
  LossTerms terms;
  std::vector<DenseTensor> gradients;  // aligned with NetworkParams::tensors
};

/// Compiled loss for a fixed batch size. Reusable across batches and epochs.
class LossGraph {
 public:
  LossGraph(const NetworkConfig& net_config, const LossConfig& loss_config,
            std::size_t batch, bool has_qe)
      : loss_config_(loss_config),
        has_qe_(has_qe),
        net_(build_network_graph(net_config, batch)) {
    using autodiff::Expr;
    loss_config.validate();
    if (loss_config.power_mode == PowerMode::true_power && !has_qe) {
      throw ConfigError("true power loss requires a dataset carrying Q_e");
    }
    const std::size_t nf = net_config.n_free, n = net_config.dim();
    const std::size_t ne = n - nf;
    auto rows = [&](const char* name, std::size_t count) {
      std::vector<autodiff::NodePtr> out;
      for (std::size_t k = 0; k < count; ++k)
        out.push_back(autodiff::input(name + std::to_string(k), 1, batch));
      return out;
    };
    qd_ = rows("qd", n);
    qdd_ = rows("qdd", n);
    Qf_ = rows("Qf", nf);
    if (has_qe) Qe_ = rows("Qe", ne);

    auto as_expr = [](const std::vector<autodiff::NodePtr>& v, std::size_t first,
                      std::size_t count) {
      Vec<Expr> out;
      for (std::size_t i = first; i < first + count; ++i) out.emplace_back(v[i]);
      return out;
    };

    GeneralizedState<Expr> s;
    s.q_f = as_expr(net_.q, 0, nf);
    s.q_e = as_expr(net_.q, nf, ne);
    s.qd_f = as_expr(qd_, 0, nf);
    s.qd_e = as_expr(qd_, nf, ne);
    s.qdd_f = as_expr(qdd_, 0, nf);
    s.qdd_e = as_expr(qdd_, nf, ne);
    const Vec<Expr> Q_f = as_expr(Qf_, 0, nf);

    const double inv_b = 1.0 / static_cast<double>(batch);
    auto mean = [&](const Expr& per_sample) -> autodiff::NodePtr {
      return autodiff::scale(autodiff::sum(per_sample.dense(1, batch)), inv_b);
    };

    const ForceDecomposition<Expr> d = force_decomposition(s, net_.mass);
    const Vec<Expr> Qhat_f = ((d.Q_ffm + d.Q_fem) + d.Q_fc) + d.Q_fg;
    std::vector<autodiff::NodePtr> enabled;
    if (loss_config.use_inverse) {
      inverse_ = mean(squared_residual(Qhat_f, Q_f));
      enabled.push_back(inverse_);
    }
    if (loss_config.use_forward) {
      GeneralizedState<Expr> fs = s;
      fs.qdd_f.reset();
      const Vec<Expr> qddhat_f = forward_dynamics(fs, net_.mass, Q_f);
      forward_ = mean(squared_residual(qddhat_f, *s.qdd_f));
      enabled.push_back(forward_);
    }
    if (loss_config.power_mode == PowerMode::true_power) {
      const Vec<Expr> Q = concat(Q_f, as_expr(Qe_, 0, ne));
      const EnergyReport<Expr> r = energy_report(s, net_.mass, Q);
      const Expr res = first_law_residual(r);
      power_ = mean(res * res);
      enabled.push_back(power_);
    } else if (loss_config.power_mode == PowerMode::estimated_power) {
      power_ = mean(estimated_power_residual(Qhat_f, Q_f, s.qd_f));
      enabled.push_back(power_);
    }
    if (has_qe && ne > 0) {
      const Vec<Expr> Qhat_e = ((d.Q_eem + d.Q_efm) + d.Q_ec) + d.Q_eg;
      qe_ = mean(squared_residual(Qhat_e, as_expr(Qe_, 0, ne)));
      enabled.push_back(qe_);
    }
    total_ = enabled.front();
    for (std::size_t i = 1; i < enabled.size(); ++i) total_ = autodiff::add(total_, enabled[i]);

    std::vector<autodiff::NodePtr> roots{total_};
    for (const auto& t : {inverse_, forward_, power_, qe_})
      if (t) roots.push_back(t);
    plan_ = std::make_unique<autodiff::Plan>(std::move(roots));
  }

  std::size_t batch_size() const { return net_.batch; }
  bool has_qe() const { return has_qe_; }
  const autodiff::NodePtr& total_node() const { return total_; }
  const std::vector<autodiff::NodePtr>& parameter_nodes() const { return net_.params; }

  LossEvaluation evaluate(const NetworkParams& params, const Batch& batch,
                          bool with_gradient) {
    if (batch.size() != net_.batch) throw ConfigError("loss graph batch size mismatch");
    if (batch.has_qe() != has_qe_) {
      throw ConfigError("batch Q_e availability does not match the loss graph");
    }
    if (params.tensors.size() != net_.params.size()) {
      throw ConfigError("parameter count does not match the network");
    }
    for (std::size_t i = 0; i < net_.params.size(); ++i) {
      if (plan_->contains(net_.params[i])) plan_->bind(net_.params[i], params.tensors[i]);
    }
    bind_rows(net_.q, batch.q);
    bind_rows(qd_, batch.qd);
    bind_rows(qdd_, batch.qdd);
    bind_rows(Qf_, batch.Q_f);
    if (has_qe_) bind_rows(Qe_, *batch.Q_e);
    plan_->run();

    LossEvaluation out;
    auto val = [&](const autodiff::NodePtr& n) { return n ? plan_->value(n)[0] : 0.0; };
    out.terms.inverse = val(inverse_);
    out.terms.forward = val(forward_);
    out.terms.power = val(power_);
    out.terms.qe = val(qe_);
    out.terms.total = val(total_);
    if (with_gradient) {
      const auto grads = plan_->backward(total_, net_.params);
      for (const auto& p : net_.params) out.gradients.push_back(grads.at(p.get()));
    }
    return out;
  }

 private:
  void bind_rows(const std::vector<autodiff::NodePtr>& nodes, const DenseTensor& data) {
    const std::size_t b = data.cols();
    for (std::size_t k = 0; k < nodes.size(); ++k) {
      if (plan_->contains(nodes[k])) plan_->bind(nodes[k], std::span<const double>(data.storage().data() + k * b, b));
    }
  }

  LossConfig loss_config_;
  bool has_qe_;
  NetworkGraph net_;
  std::vector<autodiff::NodePtr> qd_, qdd_, Qf_, Qe_;
  autodiff::NodePtr inverse_, forward_, power_, qe_, total_;
  std::unique_ptr<autodiff::Plan> plan_;
};

/// Loss terms and parameter gradient for one batch.
inline LossEvaluation total_loss(const LossConfig& config, const Batch& batch,
                                 const NetworkParams& params) {
  batch.validate();
  LossGraph graph(params.config, config, batch.size(), batch.has_qe());
  return graph.evaluate(params, batch, true);
}

// -- optimizer ------------------------------------------------------------

struct AdamState {
  std::vector<DenseTensor> m, v;
  std::uint64_t step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  static AdamState like(const NetworkParams& p) {
    AdamState s;
    for (const auto& t : p.tensors) {
      s.m.emplace_back(t.shape(), 0.0);
      s.v.emplace_back(t.shape(), 0.0);
    }
    return s;
  }
};

/// ADAM with bias correction and decoupled weight decay: every parameter is
/// first scaled by (1 - lr * wd), then moved by the adaptive step.
inline void adam_step(NetworkParams& params, const std::vector<DenseTensor>& grads,
                      AdamState& state, const TrainConfig& config) {
  if (grads.size() != params.tensors.size() || state.m.size() != grads.size()) {
    throw ConfigError("adam_step: gradient count mismatch");
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  const double decay = 1.0 - config.learning_rate * config.weight_decay;
  for (std::size_t i = 0; i < grads.size(); ++i) {
    auto& p = params.tensors[i].storage();
    const auto& g = grads[i].storage();
    auto& m = state.m[i].storage();
    auto& v = state.v[i].storage();
    if (g.size() != p.size()) throw ConfigError("adam_step: gradient shape mismatch");
    for (std::size_t j = 0; j < p.size(); ++j) {
      m[j] = state.beta1 * m[j] + (1.0 - state.beta1) * g[j];
      v[j] = state.beta2 * v[j] + (1.0 - state.beta2) * g[j] * g[j];
      const double mhat = m[j] / c1;
      const double vhat = v[j] / c2;
      p[j] = p[j] * decay - config.learning_rate * mhat / (std::sqrt(vhat) + state.eps);
    }
  }
}

// -- training loop --------------------------------------------------------

struct EpochRecord {
  std::size_t epoch = 0;
  LossTerms loss;
};

struct TrainResult {
  NetworkParams params;
  std::vector<EpochRecord> history;
  bool converged = false;

  double final_loss() const {
    return history.empty() ? std::numeric_limits<double>::infinity()
                           : history.back().loss.total;
  }
};

/// Mini-batch training. Samples are reshuffled every epoch from a generator
/// seeded with config.seed; the recorded epoch loss is the sample-weighted
/// mean of the batch losses seen during that epoch. Stops after
/// config.epochs epochs or once the epoch loss drops below the threshold.
inline TrainResult train(NetworkParams params, const Batch& data,
                         const TrainConfig& config, const LossConfig& loss_config,
                         const std::function<void(const EpochRecord&)>& on_epoch = {}) {
  config.validate();
  loss_config.validate();
  data.validate();
  if (data.size() == 0) throw ConfigError("training set is empty");
  if (loss_config.power_mode == PowerMode::true_power && !data.has_qe()) {
    throw ConfigError("true power loss requires a dataset carrying Q_e");
  }

  TrainResult result;
  AdamState adam = AdamState::like(params);
  std::mt19937_64 rng(config.seed);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::map<std::size_t, std::unique_ptr<LossGraph>> graphs;
  auto graph_for = [&](std::size_t b) -> LossGraph& {
    auto& g = graphs[b];
    if (!g) g = std::make_unique<LossGraph>(params.config, loss_config, b, data.has_qe());
    return *g;
  };

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    LossTerms sum;
    std::size_t batch_index = 0;
    for (std::size_t first = 0; first < order.size(); first += config.batch_size, ++batch_index) {
      const std::size_t count = std::min(config.batch_size, order.size() - first);
      const Batch batch = data.subset(std::span(order).subspan(first, count));
      LossEvaluation e = graph_for(count).evaluate(params, batch, true);
      const std::pair<const char*, double> terms[] = {
          {"L_inv", e.terms.inverse}, {"L_fwd", e.terms.forward},
          {"L_power", e.terms.power}, {"L_Qe", e.terms.qe}, {"total", e.terms.total}};
      for (const auto& [name, value] : terms) {
        if (!std::isfinite(value)) {
          throw NumericalError("non-finite loss at epoch " + std::to_string(epoch) +
                               ", batch " + std::to_string(batch_index) +
                               ", term " + name);
        }
      }
      const double w = static_cast<double>(count);
      sum.inverse += w * e.terms.inverse;
      sum.forward += w * e.terms.forward;
      sum.power += w * e.terms.power;
      sum.qe += w * e.terms.qe;
      sum.total += w * e.terms.total;
      adam_step(params, e.gradients, adam, config);
    }
    const double n = static_cast<double>(data.size());
    EpochRecord rec{epoch, {sum.inverse / n, sum.forward / n, sum.power / n,
                            sum.qe / n, sum.total / n}};
    result.history.push_back(rec);
    if (on_epoch) on_epoch(rec);
    if (rec.loss.total < config.convergence_threshold) {
      result.converged = true;
      break;
    }
  }
  result.params = std::move(params);
  return result;
}

inline void write_loss_history(const std::string& path,
                               const std::vector<EpochRecord>& history) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw IoError("cannot open '" + path + "' for writing");
  os.precision(17);
  os << "epoch,L_inv,L_fwd,L_power,L_Qe,total\n";
  for (const auto& r : history) {
    os << r.epoch << ',' << r.loss.inverse << ',' << r.loss.forward << ','
       << r.loss.power << ',' << r.loss.qe << ',' << r.loss.total << '\n';
  }
  if (!os) throw IoError("write to '" + path + "' failed");
}

}  // namespace servolnn
