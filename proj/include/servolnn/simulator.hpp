// Copyright (c) 2026 The servolnn Authors
// SPDX-License-Identifier: Apache-2.0
//
// Ground truth for the pendulum on a position-driven cart.
//
// Coordinates q = [theta, x]: theta is the free swing angle (0 = hanging
// down), x the cart position prescribed by the drive. The bob (m2) hangs on a
// massless string of length L from the cart (m1).

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "servolnn/config.hpp"
#include "servolnn/dynamics.hpp"
#include "servolnn/error.hpp"
#include "servolnn/integrator.hpp"
#include "servolnn/linalg.hpp"

namespace servolnn {

struct PendulumCartParams {
  double m1 = 0.45;
  double m2 = 0.13;
  double L = 1.5;
  double g = 9.8;

  void validate() const {
    if (!(m1 > 0.0 && m2 > 0.0 && L > 0.0 && g > 0.0)) {
      throw ConfigError("pendulum-cart parameters must be strictly positive");
    }
  }
};

/// Closed-form M, dM/dq, V, dV/dq at q = [theta, x].
inline MassData<double> oracle_provider(const PendulumCartParams& p,
                                        std::span<const double> q) {
  if (q.size() != 2) throw UsageError("oracle_provider: q must have 2 entries");
  const double c = std::cos(q[0]), s = std::sin(q[0]);
  MassData<double> m;
  m.M = Matrix<double>(2, 2);
  m.M(0, 0) = p.m2 * p.L * p.L;
  m.M(0, 1) = m.M(1, 0) = p.m2 * p.L * c;
  m.M(1, 1) = p.m1 + p.m2;
  m.dM_dq.assign(2, Matrix<double>(2, 2));
  m.dM_dq[0](0, 1) = m.dM_dq[0](1, 0) = -p.m2 * p.L * s;
  m.V = -p.m2 * p.g * p.L * c;
  m.dV_dq = {p.m2 * p.g * p.L * s, 0.0};
  return m;
}

/// Swing acceleration for a prescribed cart acceleration.
inline double pendulum_acceleration(const PendulumCartParams& p, double theta,
                                    double x_ddot) {
  return -(p.g * std::sin(theta) + x_ddot * std::cos(theta)) / p.L;
}

// -- drives ---------------------------------------------------------------

enum class DriveKind { stationary, cosine_sum, decaying_cosine, force_driven };

inline const char* drive_kind_name(DriveKind k) {
  switch (k) {
    case DriveKind::stationary: return "stationary";
    case DriveKind::cosine_sum: return "cosine_sum";
    case DriveKind::decaying_cosine: return "decaying_cosine";
    case DriveKind::force_driven: return "force_driven";
  }
  return "?";
}

inline DriveKind parse_drive_kind(const std::string& s) {
  for (auto k : {DriveKind::stationary, DriveKind::cosine_sum,
                 DriveKind::decaying_cosine, DriveKind::force_driven})
    if (s == drive_kind_name(k)) return k;
  throw ConfigError("unknown drive kind '" + s + "'");
}

struct DriveTerm {
  double amplitude = 0.0;  // m, or N for force drives
  double omega = 0.0;      // rad/s
  double phase = 0.0;      // rad
  double decay = 0.0;      // 1/s
};

/// Each term contributes A exp(-decay t) cos(omega t + phase). Position
/// drives subtract the t = 0 value so that x(0) = 0; force drives use the sum
/// directly as the applied cart force.
struct DriveFunction {
  DriveKind kind = DriveKind::stationary;
  std::vector<DriveTerm> terms;

  bool is_position() const { return kind != DriveKind::force_driven; }

  void validate() const {
    for (const auto& t : terms) {
      if (!std::isfinite(t.amplitude) || !std::isfinite(t.phase) ||
          !(t.omega >= 0.0) || !(t.decay >= 0.0)) {
        throw ConfigError("drive term needs finite amplitude/phase and "
                          "non-negative omega/decay");
      }
    }
    if (kind == DriveKind::stationary && !terms.empty()) {
      throw ConfigError("stationary drive takes no terms");
    }
    if (kind == DriveKind::cosine_sum) {
      for (const auto& t : terms)
        if (t.decay != 0.0) throw ConfigError("cosine_sum terms must have zero decay");
    }
    if (kind != DriveKind::stationary && terms.empty()) {
      throw ConfigError(std::string(drive_kind_name(kind)) + " drive needs terms");
    }
  }

  /// Value, first, and second time derivative of the term sum.
  struct Eval {
    double value = 0.0, rate = 0.0, accel = 0.0;
  };
  Eval raw(double t) const {
    Eval out;
    for (const auto& d : terms) {
      const double env = d.amplitude * std::exp(-d.decay * t);
      const double c = std::cos(d.omega * t + d.phase);
      const double s = std::sin(d.omega * t + d.phase);
      out.value += env * c;
      out.rate += env * (-d.decay * c - d.omega * s);
      out.accel += env * ((d.decay * d.decay - d.omega * d.omega) * c +
                          2.0 * d.decay * d.omega * s);
    }
    return out;
  }

  double offset() const {
    double o = 0.0;
    for (const auto& d : terms) o += d.amplitude * std::cos(d.phase);
    return o;
  }

  double position(double t) const { return is_position() ? raw(t).value - offset() : 0.0; }
  double velocity(double t) const { return is_position() ? raw(t).rate : 0.0; }
  double acceleration(double t) const { return is_position() ? raw(t).accel : 0.0; }
  double force(double t) const {
    if (is_position()) throw UsageError("position drive has no applied force");
    return raw(t).value;
  }
};

enum class Split { train, test };

struct TrialSpec {
  std::string name;
  DriveFunction drive;
  double theta0 = 0.0;
  double duration = 20.0;
  double rtol = 1e-10;
  double atol = 1e-10;
  Split split = Split::train;

  void validate() const {
    drive.validate();
    if (!(duration > 0.0)) throw ConfigError("trial '" + name + "': duration must be positive");
    if (!(rtol > 0.0 && atol > 0.0)) throw ConfigError("trial '" + name + "': tolerances must be positive");
    if (!std::isfinite(theta0)) throw ConfigError("trial '" + name + "': theta0 must be finite");
  }
};

struct TrajectorySample {
  int trial_id = 0;
  double t = 0.0;
  double theta = 0.0, x = 0.0;
  double theta_dot = 0.0, x_dot = 0.0;
  double theta_ddot = 0.0, x_ddot = 0.0;
  double Q_theta = 0.0;
  std::optional<double> Q_x;
  double T = 0.0, V = 0.0, E = 0.0;

  bool operator==(const TrajectorySample&) const = default;
};

inline GeneralizedState<double> to_state(const TrajectorySample& s) {
  GeneralizedState<double> g;
  g.q_f = {s.theta};
  g.q_e = {s.x};
  g.qd_f = {s.theta_dot};
  g.qd_e = {s.x_dot};
  g.qdd_f = Vec<double>{s.theta_ddot};
  g.qdd_e = {s.x_ddot};
  return g;
}

namespace detail {

inline TrajectorySample make_sample(const PendulumCartParams& p, int trial_id,
                                    double t, double theta, double x,
                                    double theta_dot, double x_dot,
                                    double theta_ddot, double x_ddot) {
  TrajectorySample s{trial_id, t, theta, x, theta_dot, x_dot, theta_ddot, x_ddot};
  const double q[2] = {theta, x};
  const MassData<double> m = oracle_provider(p, q);
  s.T = kinetic_energy(m.M, Vec<double>{theta_dot, x_dot});
  s.V = m.V;
  s.E = s.T + s.V;
  return s;
}

}  // namespace detail

/// Integrates a position-driven trial. Samples are taken at the initial point
/// and every accepted integrator step; Q_x is the equivalent cart force.
inline std::vector<TrajectorySample> integrate_position_trial(
    const PendulumCartParams& p, const TrialSpec& trial, int trial_id) {
  p.validate();
  trial.validate();
  if (!trial.drive.is_position()) throw UsageError("integrate_position_trial: force drive");
  const DriveFunction& drive = trial.drive;
  const OdeRhs rhs = [&](double t, const State& y) -> State {
    return {y[1], pendulum_acceleration(p, y[0], drive.acceleration(t))};
  };
  AdaptiveOptions opt;
  opt.rtol = trial.rtol;
  opt.atol = trial.atol;
  std::vector<TrajectorySample> out;
  integrate_adaptive(rhs, 0.0, {trial.theta0, 0.0}, trial.duration, opt,
                     [&](double t, const State& y) {
    const double xdd = drive.acceleration(t);
    TrajectorySample s = detail::make_sample(
        p, trial_id, t, y[0], drive.position(t), y[1], drive.velocity(t),
        pendulum_acceleration(p, y[0], xdd), xdd);
    const GeneralizedState<double> g = to_state(s);
    const double q[2] = {s.theta, s.x};
    s.Q_x = equivalent_force(g, oracle_provider(p, q))[0];
    out.push_back(s);
  });
  return out;
}

/// Free accelerations of the unconstrained 2-dof system under generalized
/// force Q: M qdd = Q - Mdot qd + c - dV/dq.
inline Vec<double> free_system_acceleration(const PendulumCartParams& p,
                                            const Vec<double>& q,
                                            const Vec<double>& qd,
                                            const Vec<double>& Q) {
  const MassData<double> m = oracle_provider(p, q);
  const Matrix<double> Mdot = mass_time_derivative(m.dM_dq, qd);
  const Vec<double> rhs =
      ((Q - matvec(Mdot, qd)) + velocity_quadratic_term(m.dM_dq, qd)) - m.dV_dq;
  return ldlt_solve(ldlt(m.M), rhs);
}

/// Integrates a force-driven trial with both coordinates free, then labels
/// the recorded cart motion as prescribed input and the applied force as
/// its equivalent force.
inline std::vector<TrajectorySample> replay_force_driven(
    const PendulumCartParams& p, const TrialSpec& trial, int trial_id) {
  p.validate();
  trial.validate();
  if (trial.drive.is_position()) throw UsageError("replay_force_driven: position drive");
  const DriveFunction& drive = trial.drive;
  const OdeRhs rhs = [&](double t, const State& y) -> State {
    const Vec<double> a =
        free_system_acceleration(p, {y[0], y[1]}, {y[2], y[3]}, {0.0, drive.force(t)});
    return {y[2], y[3], a[0], a[1]};
  };
  AdaptiveOptions opt;
  opt.rtol = trial.rtol;
  opt.atol = trial.atol;
  std::vector<TrajectorySample> out;
  integrate_adaptive(rhs, 0.0, {trial.theta0, 0.0, 0.0, 0.0}, trial.duration, opt,
                     [&](double t, const State& y) {
    const double Qx = drive.force(t);
    const Vec<double> a = free_system_acceleration(p, {y[0], y[1]}, {y[2], y[3]}, {0.0, Qx});
    TrajectorySample s = detail::make_sample(p, trial_id, t, y[0], y[1], y[2], y[3], a[0], a[1]);
    s.Q_x = Qx;
    out.push_back(s);
  });
  return out;
}

inline std::vector<TrajectorySample> integrate_trial(const PendulumCartParams& p,
                                                     const TrialSpec& trial,
                                                     int trial_id) {
  return trial.drive.is_position() ? integrate_position_trial(p, trial, trial_id)
                                   : replay_force_driven(p, trial, trial_id);
}

// -- trial files ----------------------------------------------------------

/// "A omega phase decay; A omega phase decay; ..." (phase and decay optional).
inline std::vector<DriveTerm> parse_drive_terms(const std::string& text,
                                                const std::string& where) {
  std::vector<DriveTerm> out;
  if (trim(text).empty()) return out;
  for (const auto& chunk : split(text, ';')) {
    std::vector<double> v;
    std::istringstream is(chunk);
    std::string tok;
    while (is >> tok) v.push_back(parse_double(tok, where));
    if (v.size() < 2 || v.size() > 4) {
      throw ConfigError(where + ": term '" + chunk + "' needs 2 to 4 numbers");
    }
    v.resize(4, 0.0);
    out.push_back({v[0], v[1], v[2], v[3]});
  }
  return out;
}

inline std::string format_drive_terms(const std::vector<DriveTerm>& terms) {
  std::ostringstream os;
  os.precision(17);
  for (std::size_t i = 0; i < terms.size(); ++i) {
    if (i) os << "; ";
    os << terms[i].amplitude << ' ' << terms[i].omega << ' ' << terms[i].phase
       << ' ' << terms[i].decay;
  }
  return os.str();
}

/// Reads every [trial] section. theta0 defaults to alternating 1, 0, 1, ...
/// by trial index; split defaults to train.
inline std::vector<TrialSpec> trials_from_ini(const IniDocument& doc) {
  std::vector<TrialSpec> out;
  const auto sections = doc.all("trial");
  for (std::size_t i = 0; i < sections.size(); ++i) {
    const IniSection& s = *sections[i];
    TrialSpec t;
    t.name = s.text("name", "trial" + std::to_string(i));
    t.drive.kind = parse_drive_kind(s.text("kind", "stationary"));
    t.drive.terms = parse_drive_terms(s.text("terms", ""), s.where("terms"));
    t.theta0 = s.number("theta0", i % 2 == 0 ? 1.0 : 0.0);
    t.duration = s.number("duration", 20.0);
    t.rtol = s.number("rtol", 1e-10);
    t.atol = s.number("atol", 1e-10);
    const std::string split_name = s.text("split", "train");
    if (split_name == "train") t.split = Split::train;
    else if (split_name == "test") t.split = Split::test;
    else throw ConfigError(s.where("split") + ": expected train or test");
    for (const auto& [key, value] : s.values) {
      static const char* known[] = {"name", "kind", "terms", "theta0", "duration",
                                    "rtol", "atol", "split"};
      if (std::find(std::begin(known), std::end(known), key) == std::end(known)) {
        throw ConfigError(s.where(key) + ": unknown key");
      }
    }
    t.validate();
    out.push_back(std::move(t));
  }
  return out;
}

inline PendulumCartParams system_from_ini(const IniDocument& doc) {
  PendulumCartParams p;
  if (const IniSection* s = doc.find("system")) {
    p.m1 = s->number("m1", p.m1);
    p.m2 = s->number("m2", p.m2);
    p.L = s->number("L", p.L);
    p.g = s->number("g", p.g);
  }
  p.validate();
  return p;
}

/// Writes trials back in the [trial] format read by trials_from_ini.
inline void trials_to_ini(const std::vector<TrialSpec>& trials, IniDocument& doc) {
  for (const auto& t : trials) {
    IniSection s{"trial", 0, {}};
    std::ostringstream num;
    num.precision(17);
    auto put = [&](const char* key, double v) {
      num.str("");
      num << v;
      s.values[key] = num.str();
    };
    s.values["name"] = t.name;
    s.values["kind"] = drive_kind_name(t.drive.kind);
    if (!t.drive.terms.empty()) s.values["terms"] = format_drive_terms(t.drive.terms);
    put("theta0", t.theta0);
    put("duration", t.duration);
    put("rtol", t.rtol);
    put("atol", t.atol);
    s.values["split"] = t.split == Split::train ? "train" : "test";
    doc.sections.push_back(std::move(s));
  }
}

/// Eleven representative trials: one free swing, six position drives, and
/// four force drives; six for training and five held out.
inline const char* default_trials_ini() {
  return R"(# amplitude [m or N]  omega [rad/s]  phase [rad]  decay [1/s]
[trial]
name = free_swing
kind = stationary
theta0 = 1
split = train

[trial]
name = slow_cosine
kind = cosine_sum
terms = 0.5 1.0
theta0 = 0
split = train

[trial]
name = two_tone
kind = cosine_sum
terms = 0.3 2.0; 0.2 3.5 0.5
theta0 = 1
split = test

[trial]
name = decaying_sweep
kind = decaying_cosine
terms = 1.0 1.5 0 0.1
theta0 = 0
split = train

[trial]
name = slow_and_fast
kind = cosine_sum
terms = 0.4 0.5; 0.1 4.0
theta0 = 1
split = test

[trial]
name = fast_cosine
kind = cosine_sum
terms = 0.2 3.0
theta0 = 0
split = test

[trial]
name = decaying_mix
kind = decaying_cosine
terms = 0.6 2.5 1.0 0.2; 0.2 1.2
theta0 = 1
split = train

[trial]
name = force_slow
kind = force_driven
terms = 1.0 1.5
theta0 = 0
split = train

[trial]
name = force_two_tone
kind = force_driven
terms = 0.5 2.0; 0.3 3.0
theta0 = 1
split = train

[trial]
name = force_decaying
kind = force_driven
terms = 0.8 2.5 0 0.05
theta0 = 0
split = test

[trial]
name = force_mix
kind = force_driven
terms = 0.6 3.5; 0.4 1.8
theta0 = 1
split = test
)";
}

inline std::vector<TrialSpec> default_trials() {
  return trials_from_ini(parse_ini(default_trials_ini()));
}

}  // namespace servolnn
