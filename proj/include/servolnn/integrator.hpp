// Copyright (c) 2026 The servolnn Authors
// SPDX-License-Identifier: Apache-2.0
//
// Dormand-Prince 5(4) Runge-Kutta with PI step-size control.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <sstream>
#include <vector>

#include "servolnn/error.hpp"

namespace servolnn {

using State = std::vector<double>;
using OdeRhs = std::function<State(double, const State&)>;

namespace dp {

inline constexpr double c[7] = {0.0, 1.0 / 5, 3.0 / 10, 4.0 / 5, 8.0 / 9, 1.0, 1.0};
inline constexpr double a[7][6] = {
    {},
    {1.0 / 5},
    {3.0 / 40, 9.0 / 40},
    {44.0 / 45, -56.0 / 15, 32.0 / 9},
    {19372.0 / 6561, -25360.0 / 2187, 64448.0 / 6561, -212.0 / 729},
    {9017.0 / 3168, -355.0 / 33, 46732.0 / 5247, 49.0 / 176, -5103.0 / 18656},
    {35.0 / 384, 0.0, 500.0 / 1113, 125.0 / 192, -2187.0 / 6784, 11.0 / 84}};
// 5th-order weights minus embedded 4th-order weights.
inline constexpr double e[7] = {71.0 / 57600,  0.0,          -71.0 / 16695,
                                71.0 / 1920,   -17253.0 / 339200, 22.0 / 525,
                                -1.0 / 40};

/// One DP step of size h from (t, y) with k[0] = f(t, y) already filled.
/// Fills k[1..6]; returns the 5th-order solution (k[6] = f at it, FSAL).
inline State step(const OdeRhs& f, double t, const State& y, double h,
                  std::vector<State>& k) {
  const std::size_t n = y.size();
  State tmp(n);
  for (int s = 1; s < 7; ++s) {
    for (std::size_t i = 0; i < n; ++i) {
      double acc = 0.0;
      for (int j = 0; j < s; ++j) acc += a[s][j] * k[j][i];
      tmp[i] = y[i] + h * acc;
    }
    k[s] = f(t + c[s] * h, tmp);
  }
  return tmp;  // stage 7 point is the 5th-order solution
}

}  // namespace dp

struct AdaptiveOptions {
  double rtol = 1e-10;
  double atol = 1e-10;
  double safety = 0.9;
  double min_factor = 0.2;
  double max_factor = 10.0;
  double beta = 0.04;  // PI memory exponent
  std::size_t max_steps = 10'000'000;
};

/// Integrates y' = f(t, y) from t0 to t1. on_accept(t, y) is called for the
/// initial point and after every accepted step, the last one landing at t1.
inline void integrate_adaptive(const OdeRhs& f, double t0, State y, double t1,
                               const AdaptiveOptions& opt,
                               const std::function<void(double, const State&)>& on_accept) {
  if (!(t1 > t0)) throw ConfigError("integration interval must be increasing");
  const std::size_t n = y.size();
  auto norm = [&](const State& v, const State& y0, const State& y1) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double sc = opt.atol + opt.rtol * std::max(std::abs(y0[i]), std::abs(y1[i]));
      s += (v[i] / sc) * (v[i] / sc);
    }
    return std::sqrt(s / static_cast<double>(std::max<std::size_t>(n, 1)));
  };

  std::vector<State> k(7);
  k[0] = f(t0, y);
  double t = t0;
  on_accept(t, y);

  // Starting step size.
  double h;
  {
    const State zero(n, 0.0);
    const double d0 = norm(y, y, zero), d1 = norm(k[0], y, zero);
    double h0 = (d0 < 1e-5 || d1 < 1e-5) ? 1e-6 : 0.01 * d0 / d1;
    State y1(n);
    for (std::size_t i = 0; i < n; ++i) y1[i] = y[i] + h0 * k[0][i];
    State f1 = f(t + h0, y1), df(n);
    for (std::size_t i = 0; i < n; ++i) df[i] = f1[i] - k[0][i];
    const double d2 = norm(df, y, zero) / h0;
    const double m = std::max(d1, d2);
    const double h1 = m <= 1e-15 ? std::max(1e-6, h0 * 1e-3) : std::pow(0.01 / m, 0.2);
    h = std::min({100.0 * h0, h1, t1 - t0});
  }

  const double expo = 0.2 - 0.75 * opt.beta;
  double err_prev = 1e-4;
  bool rejected_last = false;
  State err(n);
  for (std::size_t steps = 0; t < t1; ++steps) {
    if (steps >= opt.max_steps) {
      std::ostringstream os;
      os << "integrator exceeded " << opt.max_steps << " steps at t = " << t;
      throw NumericalError(os.str());
    }
    if (h < 1e-14 * std::max(1.0, std::abs(t))) {
      std::ostringstream os;
      os.precision(17);
      os << "step size underflow at t = " << t;
      throw NumericalError(os.str());
    }
    const bool last = t + h >= t1;
    if (last) h = t1 - t;
    State y_new = dp::step(f, t, y, h, k);
    for (std::size_t i = 0; i < n; ++i) {
      double acc = 0.0;
      for (int s = 0; s < 7; ++s) acc += dp::e[s] * k[s][i];
      err[i] = h * acc;
    }
    double en = norm(err, y, y_new);
    if (!std::isfinite(en)) en = 1e10;

    if (en <= 1.0) {
      double fac = std::pow(en, expo) / std::pow(err_prev, opt.beta) / opt.safety;
      fac = std::clamp(fac, 1.0 / opt.max_factor, 1.0 / opt.min_factor);
      double h_next = h / fac;
      if (rejected_last) h_next = std::min(h_next, h);
      err_prev = std::max(en, 1e-4);
      t = last ? t1 : t + h;
      y = std::move(y_new);
      k[0] = k[6];
      on_accept(t, y);
      rejected_last = false;
      h = h_next;
    } else {
      const double fac = std::min(1.0 / opt.min_factor, std::pow(en, expo) / opt.safety);
      h /= fac;
      rejected_last = true;
    }
  }
}

/// Fixed-step 5th-order Dormand-Prince solution at t1.
inline State integrate_fixed(const OdeRhs& f, double t0, State y, double t1,
                             std::size_t steps) {
  if (steps == 0) throw ConfigError("fixed-step integration needs at least one step");
  const double h = (t1 - t0) / static_cast<double>(steps);
  std::vector<State> k(7);
  for (std::size_t s = 0; s < steps; ++s) {
    const double t = t0 + static_cast<double>(s) * h;
    k[0] = f(t, y);
    y = dp::step(f, t, y, h, k);
  }
  return y;
}

}  // namespace servolnn
