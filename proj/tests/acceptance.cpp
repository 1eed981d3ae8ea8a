// Copyright (c) 2026 The servolnn Authors
// SPDX-License-Identifier: Apache-2.0
//
// End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
// exits non-zero if any criterion fails. The training criteria sweep seeds
// and take tens of minutes on one core.

#include <Eigen/Dense>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "servolnn/checks.hpp"
#include "servolnn/evaluation.hpp"

using namespace servolnn;

namespace {

using Clock = std::chrono::steady_clock;

const PendulumCartParams kCart;
const NetworkConfig kNet{1, 1, {64}, 0.01};

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

int failures = 0;

void verdict(int id, const char* name, bool pass, const std::string& detail) {
  if (!pass) ++failures;
  std::printf("C%d %s %s: %s\n", id, pass ? "PASS" : "FAIL", name, detail.c_str());
  std::fflush(stdout);
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

NetworkParams random_params(std::uint64_t seed, double bias_scale) {
  NetworkParams p = init_params(kNet, seed);
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
  std::normal_distribution<double> n(0.0, bias_scale);
  for (std::size_t i = 1; i < p.tensors.size(); i += 2)
    for (double& v : p.tensors[i].storage()) v = n(rng);
  return p;
}

MassData<double> oracle_at(const GeneralizedState<double>& s) {
  const double q[2] = {s.q_f[0], s.q_e[0]};
  return oracle_provider(kCart, q);
}

Batch oracle_batch(std::size_t count, std::mt19937_64& rng, bool with_qe) {
  Batch b = Batch::empty(1, 1, count, with_qe);
  for (std::size_t i = 0; i < count; ++i) {
    const GeneralizedState<double> s = random_cart_state(rng);
    const MassData<double> m = oracle_at(s);
    b.q(0, i) = s.q_f[0];
    b.q(1, i) = s.q_e[0];
    b.qd(0, i) = s.qd_f[0];
    b.qd(1, i) = s.qd_e[0];
    b.qdd(0, i) = (*s.qdd_f)[0];
    b.qdd(1, i) = s.qdd_e[0];
    b.Q_f(0, i) = inverse_dynamics(s, m)[0];
    if (with_qe) (*b.Q_e)(0, i) = equivalent_force(s, m)[0];
  }
  return b;
}

void oracle_identities() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(1);
  double round_trip = 0, first_law = 0, extended = 0, tdot = 0;
  for (int i = 0; i < 1000; ++i) {
    GeneralizedState<double> s = random_cart_state(rng);
    const MassData<double> m = oracle_at(s);
    const Vec<double> Qf = inverse_dynamics(s, m), Qe = equivalent_force(s, m);
    const Vec<double> Q = concat(Qf, Qe);

    const EnergyReport<double> r = energy_report(s, m, Q);
    first_law = std::max(first_law, std::abs(first_law_residual(r)) / (1e-9 * (1 + std::abs(r.Edot))));
    const Vec<double> ext = extended_force(s, m);
    for (std::size_t k = 0; k < 2; ++k) extended = std::max(extended, std::abs(ext[k] - Q[k]));
    tdot = std::max(tdot, std::abs(r.Tdot - kinetic_energy_rate_product_form(s, m)));

    const double qdd = (*s.qdd_f)[0];
    s.qdd_f.reset();
    const double back = forward_dynamics(s, m, Qf)[0];
    round_trip = std::max(round_trip, std::abs(back - qdd) / std::max(1.0, std::abs(qdd)));
  }
  const double elapsed = seconds_since(t0);
  verdict(1, "oracle_identities",
          round_trip < 1e-10 && first_law < 1 && extended < 1e-12 && tdot < 1e-12 && elapsed < 5,
          fmt("round_trip %.2e (<1e-10) first_law %.2e of bound extended %.2e tdot %.2e (<1e-12) "
              "%.2fs (<5s)",
              round_trip, first_law, extended, tdot, elapsed));
}

double relative_gradient_error(const LossConfig& lc, const Batch& batch,
                               const NetworkParams& params) {
  LossGraph graph(params.config, lc, batch.size(), batch.has_qe());
  const LossEvaluation base = graph.evaluate(params, batch, true);
  double gmax = 0.0;
  for (const auto& g : base.gradients)
    for (double v : g.values()) gmax = std::max(gmax, std::abs(v));
  double worst = 0.0;
  const double h = 1e-6;
  for (std::size_t t = 0; t < params.tensors.size(); ++t) {
    for (std::size_t j = 0; j < params.tensors[t].size(); ++j) {
      NetworkParams pp = params, pm = params;
      pp.tensors[t][j] += h;
      pm.tensors[t][j] -= h;
      const double fd = (graph.evaluate(pp, batch, false).terms.total -
                         graph.evaluate(pm, batch, false).terms.total) /
                        (2 * h);
      const double a = base.gradients[t][j];
      worst = std::max(worst, std::abs(a - fd) / (std::abs(a) + 1e-3 * gmax));
    }
  }
  return worst;
}

void autodiff_correctness() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  const double h = 1e-5;
  auto rel = [](double a, double fd) { return std::abs(a - fd) / std::max(std::abs(a), 1e-3); };
  double jac = 0.0, grad = 0.0;
  const LossConfig modes[] = {{true, true, PowerMode::true_power},
                              {true, true, PowerMode::estimated_power},
                              {true, true, PowerMode::off}};
  for (int draw = 0; draw < 100; ++draw) {
    const NetworkParams p = random_params(100 + draw, 0.3);
    NetworkEvaluator eval(p);
    const std::vector<double> q = {u(rng), u(rng)};
    const NetworkOutput out = eval.forward(q);
    const MassData<double> m = eval.mass_data(q);
    for (std::size_t k = 0; k < 2; ++k) {
      std::vector<double> qp = q, qm = q;
      qp[k] += h;
      qm[k] -= h;
      const NetworkOutput op = eval.forward(qp), om = eval.forward(qm);
      const Matrix<double> Lp = assemble_cholesky(op.l_diag, op.l_lower);
      const Matrix<double> Lm = assemble_cholesky(om.l_diag, om.l_lower);
      const MassData<double> mp = eval.mass_data(qp), mm = eval.mass_data(qm);
      jac = std::max(jac, rel(out.dV_dq[k], (op.V - om.V) / (2 * h)));
      for (std::size_t i = 0; i < 2; ++i)
        for (std::size_t j = 0; j < 2; ++j) {
          jac = std::max(jac, rel(out.dL_dq[k](i, j), (Lp(i, j) - Lm(i, j)) / (2 * h)));
          jac = std::max(jac, rel(m.dM_dq[k](i, j), (mp.M(i, j) - mm.M(i, j)) / (2 * h)));
        }
    }
    const LossConfig& lc = modes[draw % 3];
    const Batch b = oracle_batch(4, rng, lc.power_mode == PowerMode::true_power);
    grad = std::max(grad, relative_gradient_error(lc, b, p));
  }
  const double elapsed = seconds_since(t0);
  verdict(2, "autodiff_correctness", jac < 1e-5 && grad < 1e-4 && elapsed < 30,
          fmt("input_jacobian %.2e (<1e-5) loss_gradient %.2e (<1e-4) %.1fs (<30s)", jac, grad,
              elapsed));
}

void positive_definite() {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  double worst = 1e300;
  int failed = 0;
  for (int draw = 0; draw < 1000; ++draw) {
    NetworkEvaluator eval(random_params(5000 + draw, 2.0));
    const double q[2] = {u(rng), u(rng)};
    const MassData<double> m = eval.mass_data(q);
    Eigen::Matrix2d e;
    e << m.M(0, 0), m.M(0, 1), m.M(1, 0), m.M(1, 1);
    const double lo = Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d>(e).eigenvalues()[0];
    worst = std::min(worst, lo);
    if (lo < 0.01 - 1e-12 || m.M(0, 1) != m.M(1, 0)) ++failed;
  }
  verdict(3, "positive_definite", failed == 0,
          fmt("min eigenvalue %.15f (>=0.01) failures %d", worst, failed));
}

TrialSpec still_trial(double theta0) {
  TrialSpec t;
  t.name = "still";
  t.theta0 = theta0;
  t.duration = 20.0;
  t.rtol = 1e-10;
  t.atol = 1e-10;
  return t;
}

void simulator_conservation() {
  const auto swing = integrate_trial(kCart, still_trial(1.0), 0);
  double drift = 0.0;
  for (const auto& s : swing) drift = std::max(drift, std::abs(s.E - swing.front().E));

  const auto small = integrate_trial(kCart, still_trial(0.01), 0);
  std::vector<double> up;
  for (std::size_t i = 1; i < small.size(); ++i) {
    const auto& a = small[i - 1];
    const auto& b = small[i];
    if (a.theta < 0.0 && b.theta >= 0.0)
      up.push_back(a.t + (b.t - a.t) * (-a.theta) / (b.theta - a.theta));
  }
  const double period = up.size() > 1 ? (up.back() - up.front()) / (up.size() - 1) : 0.0;
  const double expected = 2.0 * std::numbers::pi * std::sqrt(kCart.L / kCart.g);
  const double err = std::abs(period - expected) / expected;
  verdict(4, "simulator_conservation", drift < 1e-6 && err < 0.01,
          fmt("energy drift %.2e J (<1e-6) over %zu steps, period %.4f s vs %.4f s (%.3f%%, <1%%)",
              drift, swing.size(), period, expected, 100 * err));
}

void estimated_power_reduction() {
  NetworkEvaluator eval(random_params(4, 0.3));
  std::mt19937_64 rng(4);
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const GeneralizedState<double> s = random_cart_state(rng);
    const Vec<double> Q_f = inverse_dynamics(s, oracle_at(s));
    const MassData<double> m = eval.mass_data(s.q());
    const Vec<double> Qhat_f = inverse_dynamics(s, m);
    const Vec<double> Qhat_e = equivalent_force(s, m);
    const double Edot_hat = energy_report(s, m, concat(Qhat_f, Qhat_e)).Edot;
    const double unreduced = Edot_hat - dot(s.qd(), concat(Q_f, Qhat_e));
    const double reduced = power_loss_estimated({Qhat_f}, {Q_f}, {s.qd_f});
    worst = std::max(worst, std::abs(unreduced * unreduced - reduced));
  }
  verdict(5, "estimated_power_reduction", worst < 1e-10,
          fmt("max |unreduced - reduced| %.2e (<1e-10)", worst));
}

struct SweepModel {
  std::uint64_t seed;
  NetworkParams params;
  double final_loss;
  std::size_t epochs;
  std::vector<QuantityRow> rows;
  double v_spread_probe;
};

struct Sweep {
  std::vector<SweepModel> converged;
  std::size_t tried = 0;
  double seconds = 0.0;
};

constexpr std::size_t kMaxSeeds = 12;
constexpr std::size_t kWantConverged = 5;
constexpr double kConvergedLoss = 1e-2;

// Potential difference between two cart positions at the same swing angle.
// The true potential does not depend on the cart position, so this is zero
// for the ground truth; its spread across seeds measures how far the learned
// potentials differ by functions of the cart position alone.
double cart_potential_difference(const NetworkParams& p) {
  NetworkEvaluator eval(p);
  const double ref[2] = {0.0, 1.0}, anchor[2] = {0.0, 0.0};
  return eval.forward(ref).V - eval.forward(anchor).V;
}

Sweep sweep(const Batch& train_data, const std::vector<TrajectorySample>& test, bool with_qe) {
  const auto t0 = Clock::now();
  TrainConfig tc;
  tc.learning_rate = 1e-4;
  tc.weight_decay = 1e-5;
  tc.batch_size = 16;
  tc.epochs = 4000;
  tc.convergence_threshold = 1e-4;
  LossConfig lc;
  lc.power_mode = with_qe ? PowerMode::true_power : PowerMode::estimated_power;

  Sweep out;
  for (std::uint64_t seed = 1; seed <= kMaxSeeds && out.converged.size() < kWantConverged; ++seed) {
    tc.seed = seed;
    ++out.tried;
    TrainResult r = train(init_params(kNet, seed), train_data, tc, lc);
    const bool converged = r.final_loss() < kConvergedLoss;
    std::printf("  %s seed %llu: epochs %zu final loss %.4g%s\n", with_qe ? "with Q_e" : "without Q_e",
                static_cast<unsigned long long>(seed), r.history.size(), r.final_loss(),
                converged ? " converged" : "");
    std::fflush(stdout);
    if (!converged) continue;
    SweepModel m{seed, r.params, r.final_loss(), r.history.size(),
                 evaluate_samples(make_network_provider(r.params), test),
                 cart_potential_difference(r.params)};
    out.converged.push_back(std::move(m));
  }
  out.seconds = seconds_since(t0);
  return out;
}

double spread(const Sweep& s) {
  std::vector<double> v;
  for (const auto& m : s.converged) v.push_back(m.v_spread_probe);
  return v.empty() ? 0.0 : summarize(v).std;
}

struct Accuracy {
  double qdd_f = 0, Q_f = 0, Q_e = 0, V = 0;
};

Accuracy worst_accuracy(const Sweep& s, const std::vector<QuantityRow>& truth) {
  Accuracy a;
  for (const auto& m : s.converged) {
    a.qdd_f = std::max(a.qdd_f, rmse(m.rows, truth, kQddF));
    a.Q_f = std::max(a.Q_f, rmse(m.rows, truth, kQF));
    a.Q_e = std::max(a.Q_e, rmse(m.rows, truth, kQE));
    a.V = std::max(a.V, rmse(m.rows, truth, kV));
  }
  return a;
}

double latency_ms(const NetworkParams& params, const std::vector<TrajectorySample>& samples,
                  bool& deterministic) {
  const Provider net = make_network_provider(params);
  const std::size_t n = std::min<std::size_t>(samples.size(), 2000);
  std::vector<QuantityRow> first(n);
  const auto t0 = Clock::now();
  for (std::size_t i = 0; i < n; ++i) first[i] = evaluate_sample(net, samples[i]);
  const double ms = 1e3 * seconds_since(t0) / static_cast<double>(n);
  const Provider fresh = make_network_provider(params);
  deterministic = true;
  for (std::size_t i = 0; i < n; ++i) {
    deterministic = deterministic && evaluate_sample(net, samples[i]) == first[i] &&
                    evaluate_sample(fresh, samples[i]) == first[i];
  }
  return ms;
}

}  // namespace

int main() {
  try {
    oracle_identities();
    autodiff_correctness();
    positive_definite();
    simulator_conservation();
    estimated_power_reduction();

    const DatasetSplit split = build_dataset(generate_trials(kCart, default_trials()), 7, 1024);
    const std::vector<QuantityRow> truth = truth_rows(kCart, split.test);
    const double std_qdd = column_std(truth, kQddF), std_qe = column_std(truth, kQE);
    const double swing_scale = kCart.m2 * kCart.g * kCart.L;
    std::printf("  train %zu samples, test %zu samples, test std(qdd_f) %.4f std(Q_e) %.4f\n",
                split.train.size(), split.test.size(), std_qdd, std_qe);

    const Sweep with_qe = sweep(to_batch(split.train, true), split.test, true);
    const Accuracy a6 = worst_accuracy(with_qe, truth);
    const bool ok6 = with_qe.converged.size() >= 3 && a6.qdd_f < 0.05 * std_qdd &&
                     a6.Q_f < 0.05 * swing_scale && a6.Q_e < 0.10 * std_qe &&
                     a6.V < 0.10 * swing_scale;
    verdict(6, "training_with_qe", ok6,
            fmt("%zu/%zu seeds converged (>=3), worst over converged: rmse qdd_f %.4f (<%.4f) "
                "Q_f %.4f (<%.4f) Q_e %.4f (<%.4f) V %.4f J (<%.4f), %.0fs",
                with_qe.converged.size(), with_qe.tried, a6.qdd_f, 0.05 * std_qdd, a6.Q_f,
                0.05 * swing_scale, a6.Q_e, 0.10 * std_qe, a6.V, 0.10 * swing_scale,
                with_qe.seconds));

    const Sweep no_qe = sweep(to_batch(split.train, false), split.test, false);
    const Accuracy a7 = worst_accuracy(no_qe, truth);
    const double s6 = spread(with_qe), s7 = spread(no_qe);
    const bool ok7 = no_qe.converged.size() >= 3 && with_qe.converged.size() >= 3 &&
                     a7.qdd_f < 0.05 * std_qdd && a7.Q_f < 0.05 * swing_scale && s7 >= 5 * s6;
    verdict(7, "training_without_qe", ok7,
            fmt("%zu/%zu seeds converged (>=3), worst rmse qdd_f %.4f (<%.4f) Q_f %.4f (<%.4f), "
                "potential spread %.4f J vs %.4f J with Q_e (ratio %.1f, >=5), %.0fs",
                no_qe.converged.size(), no_qe.tried, a7.qdd_f, 0.05 * std_qdd, a7.Q_f,
                0.05 * swing_scale, s7, s6, s6 > 0 ? s7 / s6 : INFINITY, no_qe.seconds));

    double worst_ratio = INFINITY;
    for (const auto& m : with_qe.converged) {
      const auto untrained = evaluate_samples(make_network_provider(init_params(kNet, m.seed)), split.test);
      worst_ratio = std::min(worst_ratio, rmse(untrained, truth, kQddF) / rmse(m.rows, truth, kQddF));
    }
    verdict(8, "untrained_baseline", !with_qe.converged.empty() && worst_ratio >= 10,
            fmt("untrained/trained qdd_f rmse ratio %.1f (>=10) over %zu models", worst_ratio,
                with_qe.converged.size()));

    const NetworkParams& model =
        with_qe.converged.empty() ? init_params(kNet, 1) : with_qe.converged.front().params;
    bool deterministic = false;
    const double ms = latency_ms(model, split.test, deterministic);
    TrainConfig tc;
    tc.batch_size = 64;
    tc.epochs = 3;
    const Batch small = to_batch(split.train, true);
    const bool retrain_same = train(init_params(kNet, 1), small, tc, LossConfig{}).params ==
                              train(init_params(kNet, 1), small, tc, LossConfig{}).params;
    verdict(9, "inference_latency", ms < 1.7 && deterministic && retrain_same,
            fmt("mean %.4f ms per sample (<1.7), repeat inference identical %s, retraining identical %s",
                ms, deterministic ? "yes" : "no", retrain_same ? "yes" : "no"));
  } catch (const std::exception& e) {
    std::printf("acceptance aborted: %s\n", e.what());
    return 2;
  }
  std::printf("%s: %d criteria failed\n", failures ? "FAIL" : "PASS", failures);
  return failures ? 1 : 0;
}
