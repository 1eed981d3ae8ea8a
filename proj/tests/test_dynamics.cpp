// Copyright (c) 2026 The servolnn Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "servolnn/checks.hpp"
#include "servolnn/dynamics.hpp"
#include "servolnn/simulator.hpp"

using namespace servolnn;

namespace {

const PendulumCartParams kCart;

MassData<double> cart_mass(double theta, double x = 0.0) {
  const double q[2] = {theta, x};
  return oracle_provider(kCart, q);
}

GeneralizedState<double> cart_state(double th, double x, double thd, double xd,
                                    std::optional<double> thdd, double xdd) {
  GeneralizedState<double> s;
  s.q_f = {th};
  s.q_e = {x};
  s.qd_f = {thd};
  s.qd_e = {xd};
  if (thdd) s.qdd_f = Vec<double>{*thdd};
  s.qdd_e = {xdd};
  return s;
}

// Constant unit mass, constant potential, N free coordinates and none external.
MassData<double> unit_mass(std::size_t n) {
  MassData<double> m;
  m.M = Matrix<double>::identity(n);
  m.dM_dq.assign(n, Matrix<double>(n, n));
  m.V = 3.0;
  m.dV_dq.assign(n, 0.0);
  return m;
}

// Cart equations of motion written out by hand, both coordinates free.
Vec<double> cart_generalized_force(double th, double thd, double thdd, double xdd) {
  const double m1 = kCart.m1, m2 = kCart.m2, L = kCart.L, g = kCart.g;
  return {m2 * L * L * thdd + m2 * L * std::cos(th) * xdd + m2 * g * L * std::sin(th),
          (m1 + m2) * xdd + m2 * L * std::cos(th) * thdd - m2 * L * std::sin(th) * thd * thd};
}

}  // namespace

TEST(Oracle, MassMatrixAtBottom) {
  const MassData<double> m = cart_mass(0.0);
  EXPECT_NEAR(m.M(0, 0), 0.2925, 1e-15);
  EXPECT_NEAR(m.M(0, 1), 0.195, 1e-15);
  EXPECT_NEAR(m.M(1, 0), 0.195, 1e-15);
  EXPECT_NEAR(m.M(1, 1), 0.58, 1e-15);
  EXPECT_EQ(m.dV_dq[0], 0.0);
  EXPECT_NEAR(cart_mass(std::numbers::pi / 2).M(0, 1), 0.0, 1e-16);
}

TEST(MassRate, Examples) {
  const MassData<double> m = cart_mass(std::numbers::pi / 2);
  const Matrix<double> Md = mass_time_derivative(m.dM_dq, Vec<double>{2.0, 0.5});
  EXPECT_NEAR(Md(0, 1), -0.39, 1e-14);
  EXPECT_NEAR(Md(1, 0), -0.39, 1e-14);
  EXPECT_EQ(Md(0, 0), 0.0);
  EXPECT_EQ(Md(1, 1), 0.0);
  const Matrix<double> at_rest = mass_time_derivative(m.dM_dq, Vec<double>{0, 0});
  for (double v : at_rest.data()) EXPECT_EQ(v, 0.0);
  const MassData<double> u = unit_mass(2);
  const Matrix<double> constant_mass = mass_time_derivative(u.dM_dq, Vec<double>{1, -2});
  for (double v : constant_mass.data()) EXPECT_EQ(v, 0.0);
}

TEST(KineticEnergy, Examples) {
  EXPECT_EQ(kinetic_energy(cart_mass(0.4).M, Vec<double>{0, 0}), 0.0);
  EXPECT_NEAR(kinetic_energy(cart_mass(0.0).M, Vec<double>{0, 1}), 0.29, 1e-15);
  EXPECT_NEAR(kinetic_energy(cart_mass(0.7).M, Vec<double>{1, 0}), 0.14625, 1e-15);
}

TEST(CentrifugalCoriolis, Examples) {
  const MassData<double> m = cart_mass(std::numbers::pi / 2);
  const Vec<double> qd = {1.0, 0.0};
  const Matrix<double> Md = mass_time_derivative(m.dM_dq, qd);
  const Vec<double> ext = centrifugal_coriolis_term(m.dM_dq, Md, qd, Side::external, 1);
  EXPECT_NEAR(ext[0], -0.195, 1e-14);
  const Vec<double> zero = {0.0, 0.0};
  EXPECT_EQ(centrifugal_coriolis_term(m.dM_dq, mass_time_derivative(m.dM_dq, zero), zero,
                                      Side::free, 1)[0],
            0.0);
  const MassData<double> u = unit_mass(2);
  const Vec<double> c = centrifugal_coriolis_term(
      u.dM_dq, mass_time_derivative(u.dM_dq, qd), qd, Side::free, 1);
  EXPECT_EQ(c[0], 0.0);
}

TEST(InverseDynamics, UnitMassParticle) {
  GeneralizedState<double> s;
  s.q_f = {0.3, -0.2};
  s.qd_f = {1.0, 2.0};
  s.qdd_f = Vec<double>{0.5, -4.0};
  const Vec<double> Q = inverse_dynamics(s, unit_mass(2));
  EXPECT_EQ(Q[0], 0.5);
  EXPECT_EQ(Q[1], -4.0);
}

TEST(InverseDynamics, CartExamples) {
  const double thdd = -1.0 / kCart.L;
  const Vec<double> swing = inverse_dynamics(cart_state(0, 0, 0, 0, thdd, 1.0), cart_mass(0.0));
  EXPECT_NEAR(swing[0], 0.0, 1e-12);
  const Vec<double> hold = inverse_dynamics(cart_state(0.1, 0, 0, 0, 0.0, 0.0), cart_mass(0.1));
  EXPECT_NEAR(hold[0], 0.19077, 2e-5);
  EXPECT_NEAR(hold[0], kCart.m2 * kCart.g * kCart.L * std::sin(0.1), 1e-15);
}

TEST(InverseDynamics, MissingFreeAccelerationIsUsageError) {
  EXPECT_THROW(inverse_dynamics(cart_state(0, 0, 0, 0, std::nullopt, 0), cart_mass(0)),
               UsageError);
  EXPECT_THROW(inverse_dynamics(cart_state(0, 0, 0, 0, 0.0, 0), unit_mass(3)), ConfigError);
}

TEST(InverseDynamics, AllFreeMatchesHandWrittenEquations) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  for (int i = 0; i < 1000; ++i) {
    const double th = u(rng), x = u(rng), thd = u(rng), xd = u(rng), thdd = u(rng),
                 xdd = u(rng);
    GeneralizedState<double> s;
    s.q_f = {th, x};
    s.qd_f = {thd, xd};
    s.qdd_f = Vec<double>{thdd, xdd};
    const Vec<double> Q = inverse_dynamics(s, cart_mass(th, x));
    const Vec<double> ref = cart_generalized_force(th, thd, thdd, xdd);
    EXPECT_NEAR(Q[0], ref[0], 1e-12);
    EXPECT_NEAR(Q[1], ref[1], 1e-12);
  }
}

TEST(ForwardDynamics, CartExamples) {
  const Vec<double> a = forward_dynamics(cart_state(0, 0, 0, 0, std::nullopt, 1.0),
                                         cart_mass(0.0), Vec<double>{0.0});
  EXPECT_NEAR(a[0], -0.666667, 1e-6);
  EXPECT_NEAR(a[0], -1.0 / kCart.L, 1e-15);
  const Vec<double> rest = forward_dynamics(cart_state(0, 0.3, 0, 2.5, std::nullopt, 0.0),
                                            cart_mass(0.0, 0.3), Vec<double>{0.0});
  EXPECT_EQ(rest[0], 0.0);
}

TEST(ForwardDynamics, MatchesClosedFormSwing) {
  std::mt19937_64 rng(6);
  for (int i = 0; i < 200; ++i) {
    GeneralizedState<double> s = random_cart_state(rng);
    s.qdd_f.reset();
    const Vec<double> a = forward_dynamics(s, cart_mass(s.q_f[0], s.q_e[0]), Vec<double>{0.0});
    EXPECT_NEAR(a[0], pendulum_acceleration(kCart, s.q_f[0], s.qdd_e[0]), 1e-12);
  }
}

TEST(ForwardDynamics, InvertsInverseDynamics) {
  std::mt19937_64 rng(7);
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    GeneralizedState<double> s = random_cart_state(rng);
    const MassData<double> m = cart_mass(s.q_f[0], s.q_e[0]);
    const Vec<double> Q = inverse_dynamics(s, m);
    const double want = (*s.qdd_f)[0];
    s.qdd_f.reset();
    const double got = forward_dynamics(s, m, Q)[0];
    worst = std::max(worst, std::abs(got - want) / std::max(std::abs(want), 1e-3));
  }
  EXPECT_LT(worst, 1e-10);
}

TEST(ForwardDynamics, SingularFreeBlockIsNumericalError) {
  MassData<double> m = cart_mass(0.0);
  m.M(0, 0) = 0.0;
  EXPECT_THROW(forward_dynamics(cart_state(0, 0, 0, 0, std::nullopt, 0), m, Vec<double>{0.0}),
               NumericalError);
}

TEST(ForceDecomposition, StaticStateHasOnlyGravity) {
  const ForceDecomposition<double> d =
      force_decomposition(cart_state(0.6, 0.1, 0, 0, 0.0, 0.0), cart_mass(0.6, 0.1));
  EXPECT_EQ(d.Q_ffm[0], 0.0);
  EXPECT_EQ(d.Q_fem[0], 0.0);
  EXPECT_EQ(d.Q_fc[0], 0.0);
  EXPECT_EQ(d.Q_eem[0], 0.0);
  EXPECT_EQ(d.Q_efm[0], 0.0);
  EXPECT_EQ(d.Q_ec[0], 0.0);
  EXPECT_NE(d.Q_fg[0], 0.0);
  EXPECT_EQ(d.Q_eg[0], 0.0);
}

TEST(ForceDecomposition, SwingTermsCancel) {
  const double thdd = -1.0 / kCart.L;
  const ForceDecomposition<double> d =
      force_decomposition(cart_state(0, 0, 0, 0, thdd, 1.0), cart_mass(0.0));
  EXPECT_NEAR(d.Q_ffm[0], -0.195, 1e-15);
  EXPECT_NEAR(d.Q_fem[0], 0.195, 1e-15);
  EXPECT_EQ(d.Q_fc[0], 0.0);
  EXPECT_EQ(d.Q_fg[0], 0.0);
  EXPECT_NEAR(d.Q_ffm[0] + d.Q_fem[0] + d.Q_fc[0] + d.Q_fg[0], 0.0, 1e-15);
}

TEST(EquivalentForce, CartExamples) {
  EXPECT_EQ(equivalent_force(cart_state(0, 0, 0, 0, 0.0, 0.0), cart_mass(0.0))[0], 0.0);
  const double thdd = -1.0 / kCart.L;
  EXPECT_NEAR(equivalent_force(cart_state(0, 0, 0, 0, thdd, 1.0), cart_mass(0.0))[0], 0.45,
              1e-14);
  const double up = std::numbers::pi / 2;
  EXPECT_NEAR(equivalent_force(cart_state(up, 0, 1, 0, -kCart.g / kCart.L, 0.0), cart_mass(up))[0],
              -0.195, 1e-14);
}

TEST(EquivalentForce, MatchesHandWrittenCartEquation) {
  std::mt19937_64 rng(8);
  for (int i = 0; i < 500; ++i) {
    const GeneralizedState<double> s = random_cart_state(rng);
    const double Qe = equivalent_force(s, cart_mass(s.q_f[0], s.q_e[0]))[0];
    const Vec<double> ref =
        cart_generalized_force(s.q_f[0], s.qd_f[0], (*s.qdd_f)[0], s.qdd_e[0]);
    EXPECT_NEAR(Qe, ref[1], 1e-12);
  }
}

TEST(Partition, BlocksAgreeWithFullCoordinateForce) {
  std::mt19937_64 rng(9);
  for (int i = 0; i < 1000; ++i) {
    const GeneralizedState<double> s = random_cart_state(rng);
    const MassData<double> m = cart_mass(s.q_f[0], s.q_e[0]);
    const Vec<double> full = extended_force(s, m);
    EXPECT_NEAR(full[0], inverse_dynamics(s, m)[0], 1e-12);
    EXPECT_NEAR(full[1], equivalent_force(s, m)[0], 1e-12);
  }
}

TEST(Energy, StaticStateHasZeroRates) {
  const GeneralizedState<double> s = cart_state(0.8, 0.2, 0, 0, 0.0, 0.0);
  const MassData<double> m = cart_mass(0.8, 0.2);
  const EnergyReport<double> r = energy_report(s, m, Vec<double>{0.123, -4.0});
  EXPECT_EQ(r.Tdot, 0.0);
  EXPECT_EQ(r.Vdot, 0.0);
  EXPECT_EQ(r.Edot, 0.0);
  EXPECT_EQ(r.Wdot_total, 0.0);
  EXPECT_EQ(first_law_residual(r), 0.0);
  EXPECT_EQ(r.T_kin, 0.0);
  EXPECT_EQ(r.V, m.V);
}

TEST(Energy, FirstLawHoldsOnRandomStates) {
  std::mt19937_64 rng(10);
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const GeneralizedState<double> s = random_cart_state(rng);
    const MassData<double> m = cart_mass(s.q_f[0], s.q_e[0]);
    const Vec<double> Q = concat(inverse_dynamics(s, m), equivalent_force(s, m));
    const EnergyReport<double> r = energy_report(s, m, Q);
    worst = std::max(worst, std::abs(first_law_residual(r)));
    EXPECT_NEAR(r.Tdot, kinetic_energy_rate_product_form(s, m), 1e-12);
    EXPECT_NEAR(r.Wdot[0] + r.Wdot[1], r.Wdot_total, 1e-12);
  }
  EXPECT_LT(worst, 1e-9);
}

TEST(Energy, ResidualIsLinearInExternalForce) {
  const GeneralizedState<double> s = cart_state(0.4, 0.0, 0.5, 1.0, -2.0, 0.7);
  const MassData<double> m = cart_mass(0.4);
  Vec<double> Q = concat(inverse_dynamics(s, m), equivalent_force(s, m));
  Q[1] += 1.0;
  EXPECT_NEAR(first_law_residual(energy_report(s, m, Q)), -1.0, 1e-12);
}

TEST(Energy, FreeOnlySystemMatchesProductRule) {
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  for (int i = 0; i < 100; ++i) {
    GeneralizedState<double> s;
    s.q_f = {u(rng), u(rng)};
    s.qd_f = {u(rng), u(rng)};
    s.qdd_f = Vec<double>{u(rng), u(rng)};
    const MassData<double> m = cart_mass(s.q_f[0], s.q_f[1]);
    const EnergyReport<double> r = energy_report(s, m, inverse_dynamics(s, m));
    EXPECT_NEAR(first_law_residual(r), 0.0, 1e-12);
    EXPECT_NEAR(r.Tdot, kinetic_energy_rate_product_form(s, m), 1e-12);
  }
}
