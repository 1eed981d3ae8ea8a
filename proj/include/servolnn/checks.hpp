// Copyright (c) 2026 The servolnn Authors
// SPDX-License-Identifier: Apache-2.0
//
// End-to-end invariant suite for a mass-matrix provider on the pendulum
// cart. Run against the analytic oracle, every check must pass; a provider
// with a wrong sign or a wrong derivative fails a named check.

#pragma once

#include <cmath>
#include <numbers>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "servolnn/dataset.hpp"
#include "servolnn/dynamics.hpp"
#include "servolnn/evaluation.hpp"
#include "servolnn/simulator.hpp"

namespace servolnn {

struct CheckResult {
  std::string name;
  bool passed = false;
  double worst = 0.0;      // largest normalized violation seen
  double tolerance = 0.0;
};

struct CheckReport {
  std::vector<CheckResult> results;

  bool passed() const {
    for (const auto& r : results)
      if (!r.passed) return false;
    return true;
  }
  const CheckResult* find(const std::string& name) const {
    for (const auto& r : results)
      if (r.name == name) return &r;
    return nullptr;
  }
};

/// Random pendulum-cart state with |theta| <= pi, |theta_dot| <= 3,
/// |x| <= 2, |x_dot| <= 2, |x_ddot| <= 3 and |theta_ddot| <= 10.
inline GeneralizedState<double> random_cart_state(std::mt19937_64& rng) {
  auto u = [&](double a) { return std::uniform_real_distribution<double>(-a, a)(rng); };
  GeneralizedState<double> s;
  s.q_f = {u(std::numbers::pi)};
  s.q_e = {u(2.0)};
  s.qd_f = {u(3.0)};
  s.qd_e = {u(2.0)};
  s.qdd_f = Vec<double>{u(10.0)};
  s.qdd_e = {u(3.0)};
  return s;
}

struct OracleCheckOptions {
  std::uint64_t seed = 1;
  std::size_t states = 1000;
  bool include_simulation = true;
  std::filesystem::path scratch_dir = std::filesystem::temp_directory_path();
};

inline CheckReport run_oracle_checks(const Provider& provider,
                                     const PendulumCartParams& system,
                                     const OracleCheckOptions& opt = {}) {
  CheckReport rep;
  std::mt19937_64 rng(opt.seed);
  CheckResult round_trip{"forward_inverse_round_trip", true, 0.0, 1e-10};
  CheckResult first_law{"first_law", true, 0.0, 1e-9};
  CheckResult partition{"partition_consistency", true, 0.0, 1e-12};
  CheckResult kinetic{"kinetic_rate_forms", true, 0.0, 1e-12};
  CheckResult derivs{"provider_derivatives", true, 0.0, 1e-6};
  auto note = [](CheckResult& c, double v) {
    if (!(v <= c.worst)) c.worst = std::isnan(v) ? INFINITY : v;
  };

  for (std::size_t i = 0; i < opt.states; ++i) {
    const GeneralizedState<double> s = random_cart_state(rng);
    const Vec<double> q = s.q();
    const MassData<double> m = provider(q);

    const Vec<double> Q_f = inverse_dynamics(s, m);
    GeneralizedState<double> f = s;
    f.qdd_f.reset();
    const double qdd = forward_dynamics(f, m, Q_f)[0];
    note(round_trip, std::abs(qdd - (*s.qdd_f)[0]) / std::max(1.0, std::abs((*s.qdd_f)[0])));

    const Vec<double> Q_e = equivalent_force(s, m);
    const EnergyReport<double> r = energy_report(s, m, concat(Q_f, Q_e));
    note(first_law, std::abs(first_law_residual(r)) / (1.0 + std::abs(r.Edot)));

    const Vec<double> ext = extended_force(s, m);
    note(partition, std::max(std::abs(ext[0] - Q_f[0]), std::abs(ext[1] - Q_e[0])) /
                        (1.0 + std::abs(ext[0]) + std::abs(ext[1])));

    const double tdot_default = kinetic_energy_rate_product_form(s, m);
    note(kinetic, std::abs(r.Tdot - tdot_default) / (1.0 + std::abs(r.Tdot)));

    // Central differences of the provider's own M and V.
    const double h = 1e-6;
    for (std::size_t k = 0; k < 2; ++k) {
      Vec<double> qp = q, qm = q;
      qp[k] += h;
      qm[k] -= h;
      const MassData<double> mp = provider(qp), mm = provider(qm);
      const double dv = (mp.V - mm.V) / (2 * h);
      note(derivs, std::abs(dv - m.dV_dq[k]) / (1.0 + std::abs(dv)));
      for (std::size_t a = 0; a < 2; ++a)
        for (std::size_t b = 0; b < 2; ++b) {
          const double dm = (mp.M(a, b) - mm.M(a, b)) / (2 * h);
          note(derivs, std::abs(dm - m.dM_dq[k](a, b)) / (1.0 + std::abs(dm)));
        }
    }
  }
  for (CheckResult* c : {&round_trip, &first_law, &partition, &kinetic, &derivs}) {
    c->passed = c->worst < c->tolerance;
    rep.results.push_back(*c);
  }
  if (!opt.include_simulation) return rep;

  // Simulated free swing under a cart drive: the provider must see zero
  // torque on the swing coordinate.
  TrialSpec drive;
  drive.name = "check_drive";
  drive.drive = {DriveKind::cosine_sum, {{0.4, 1.7, 0.3, 0.0}, {0.2, 3.1, 0.0, 0.0}}};
  drive.theta0 = 1.0;
  drive.duration = 5.0;
  const auto driven = integrate_trial(system, drive, 0);
  CheckResult free_swing{"free_swing_zero_torque", true, 0.0, 1e-9};
  for (const auto& s : driven) {
    const double q[2] = {s.theta, s.x};
    note(free_swing, std::abs(inverse_dynamics(to_state(s), provider(q))[0]));
  }
  free_swing.passed = free_swing.worst < free_swing.tolerance;
  rep.results.push_back(free_swing);

  // Energy conservation of the undriven pendulum, measured by the provider.
  TrialSpec still;
  still.name = "check_still";
  still.theta0 = 1.0;
  still.duration = 20.0;
  const auto swing = integrate_trial(system, still, 0);
  CheckResult conservation{"energy_conservation", true, 0.0, 1e-6};
  double E0 = 0.0;
  for (std::size_t i = 0; i < swing.size(); ++i) {
    const auto& s = swing[i];
    const double q[2] = {s.theta, s.x};
    const MassData<double> m = provider(q);
    const double E = kinetic_energy(m.M, Vec<double>{s.theta_dot, s.x_dot}) + m.V;
    if (i == 0) E0 = E;
    note(conservation, std::abs(E - E0));
  }
  conservation.passed = conservation.worst < conservation.tolerance;
  rep.results.push_back(conservation);

  // Dataset file round trip.
  CheckResult csv{"dataset_round_trip", true, 0.0, 0.0};
  const auto path = opt.scratch_dir / ("servolnn_check_" + std::to_string(opt.seed) + ".csv");
  write_dataset(path.string(), driven);
  const LoadedDataset back = read_dataset(path.string());
  std::filesystem::remove(path);
  csv.passed = back.samples == driven;
  csv.worst = csv.passed ? 0.0 : 1.0;
  rep.results.push_back(csv);
  return rep;
}

}  // namespace servolnn
