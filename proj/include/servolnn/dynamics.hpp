// Copyright (c) 2026 The servolnn Authors
// SPDX-License-Identifier: Apache-2.0
//
// Lagrangian mechanics with externally specified coordinates.
//
// Generalized coordinates are partitioned as q = [q_f; q_e]: q_f are free
// (their accelerations follow from the dynamics) and q_e are prescribed by a
// servomechanism (their accelerations are inputs). Everything below is
// written in terms of a mass-matrix provider: M(q), dM/dq, V(q), dV/dq. The
// provider may be the trained network or the analytic oracle; nothing in this
// file knows which.
//
// All functions are templated on the scalar type so the same arithmetic runs
// on doubles and on autodiff::Expr graph handles.

#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "servolnn/error.hpp"
#include "servolnn/linalg.hpp"

namespace servolnn {

/// Output of a mass-matrix provider at one configuration q.
/// dM_dq[k](i, j) holds dM_ij / dq_k.
template <class T>
struct MassData {
  Matrix<T> M;
  std::vector<Matrix<T>> dM_dq;
  T V{};
  Vec<T> dV_dq;

  std::size_t dim() const { return M.rows(); }
};

template <class T>
struct GeneralizedState {
  Vec<T> q_f, q_e;
  Vec<T> qd_f, qd_e;
  std::optional<Vec<T>> qdd_f;  // absent in forward-dynamics queries
  Vec<T> qdd_e;

  std::size_t n_free() const { return q_f.size(); }
  std::size_t n_external() const { return q_e.size(); }

  Vec<T> q() const { return concat(q_f, q_e); }
  Vec<T> qd() const { return concat(qd_f, qd_e); }

  const Vec<T>& require_qdd_f() const {
    if (!qdd_f) throw UsageError("state is missing free accelerations");
    return *qdd_f;
  }
  Vec<T> qdd() const { return concat(require_qdd_f(), qdd_e); }
};

/// Mass matrix split into free/external blocks.
template <class T>
struct PartitionedMass {
  Matrix<T> M;
  Matrix<T> ff, fe, ef, ee;
  std::vector<Matrix<T>> dM_dq;

  PartitionedMass(const Matrix<T>& m, std::vector<Matrix<T>> dm,
                  std::size_t n_free)
      : M(m), dM_dq(std::move(dm)) {
    const std::size_t n = m.rows();
    if (n_free > n) throw ConfigError("partition larger than mass matrix");
    const std::size_t n_ext = n - n_free;
    ff = m.block(0, 0, n_free, n_free);
    fe = m.block(0, n_free, n_free, n_ext);
    ef = m.block(n_free, 0, n_ext, n_free);
    ee = m.block(n_free, n_free, n_ext, n_ext);
  }
};

enum class Side { free, external };

template <class T>
struct ForceDecomposition {
  Vec<T> Q_ffm, Q_fem, Q_fc, Q_fg;  // free:     M_ff qdd_f, M_fe qdd_e, ...
  Vec<T> Q_eem, Q_efm, Q_ec, Q_eg;  // external: M_ee qdd_e, M_ef qdd_f, ...
};

template <class T>
struct EnergyReport {
  T T_kin{}, V{}, E{};
  T Tdot{}, Vdot{}, Edot{};
  Vec<T> Wdot;
  T Wdot_total{};
};

namespace detail {

template <class T>
void check_mass(const MassData<T>& m, std::size_t n) {
  if (m.M.rows() != n || m.M.cols() != n || m.dM_dq.size() != n ||
      m.dV_dq.size() != n) {
    throw ConfigError("mass data dimension " + std::to_string(m.M.rows()) +
                      " does not match state dimension " + std::to_string(n));
  }
}

template <class T>
std::size_t check_state(const GeneralizedState<T>& s) {
  const std::size_t nf = s.q_f.size(), ne = s.q_e.size();
  if (s.qd_f.size() != nf || s.qd_e.size() != ne || s.qdd_e.size() != ne ||
      (s.qdd_f && s.qdd_f->size() != nf)) {
    throw ConfigError("inconsistent generalized state sizes");
  }
  return nf + ne;
}

template <class T>
Vec<T> rows_of(const Vec<T>& v, Side side, std::size_t n_free) {
  return side == Side::free ? slice(v, 0, n_free)
                            : slice(v, n_free, v.size() - n_free);
}

}  // namespace detail

/// Mdot_ij = sum_k dM_ij/dq_k * qd_k.
template <class T>
Matrix<T> mass_time_derivative(const std::vector<Matrix<T>>& dM_dq,
                               const Vec<T>& qd) {
  if (dM_dq.size() != qd.size()) {
    throw ConfigError("mass_time_derivative: dimension mismatch");
  }
  const std::size_t n = qd.size();
  Matrix<T> out(n, n);
  for (std::size_t k = 0; k < n; ++k)
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        out(i, j) = out(i, j) + dM_dq[k](i, j) * qd[k];
  return out;
}

template <class T>
T kinetic_energy(const Matrix<T>& M, const Vec<T>& qd) {
  return 0.5 * dot(qd, matvec(M, qd));
}

/// c_k = 1/2 sum_ij qd_i (dM_ij/dq_k) qd_j for every coordinate k.
template <class T>
Vec<T> velocity_quadratic_term(const std::vector<Matrix<T>>& dM_dq,
                               const Vec<T>& qd) {
  Vec<T> out(dM_dq.size());
  for (std::size_t k = 0; k < dM_dq.size(); ++k)
    out[k] = 0.5 * dot(qd, matvec(dM_dq[k], qd));
  return out;
}

/// Combined centrifugal and Coriolis force on one side of the partition:
/// rows of Mdot qd minus the rows of the velocity-quadratic term.
template <class T>
Vec<T> centrifugal_coriolis_term(const std::vector<Matrix<T>>& dM_dq,
                                 const Matrix<T>& Mdot, const Vec<T>& qd,
                                 Side side, std::size_t n_free) {
  const Vec<T> mdot_qd = detail::rows_of(matvec(Mdot, qd), side, n_free);
  const Vec<T> quad =
      detail::rows_of(velocity_quadratic_term(dM_dq, qd), side, n_free);
  return mdot_qd - quad;
}

template <class T>
ForceDecomposition<T> force_decomposition(const GeneralizedState<T>& s,
                                          const MassData<T>& m) {
  const std::size_t n = detail::check_state(s);
  detail::check_mass(m, n);
  const std::size_t nf = s.n_free();
  const PartitionedMass<T> pm(m.M, m.dM_dq, nf);
  const Vec<T> qd = s.qd();
  const Matrix<T> Mdot = mass_time_derivative(m.dM_dq, qd);
  const Vec<T>& qdd_f = s.require_qdd_f();

  ForceDecomposition<T> d;
  d.Q_ffm = matvec(pm.ff, qdd_f);
  d.Q_fem = matvec(pm.fe, s.qdd_e);
  d.Q_fc = centrifugal_coriolis_term(m.dM_dq, Mdot, qd, Side::free, nf);
  d.Q_fg = detail::rows_of(m.dV_dq, Side::free, nf);
  d.Q_eem = matvec(pm.ee, s.qdd_e);
  d.Q_efm = matvec(pm.ef, qdd_f);
  d.Q_ec = centrifugal_coriolis_term(m.dM_dq, Mdot, qd, Side::external, nf);
  d.Q_eg = detail::rows_of(m.dV_dq, Side::external, nf);
  return d;
}

/// Generalized force on the free coordinates needed to produce qdd_f.
template <class T>
Vec<T> inverse_dynamics(const GeneralizedState<T>& s, const MassData<T>& m) {
  const ForceDecomposition<T> d = force_decomposition(s, m);
  return ((d.Q_ffm + d.Q_fem) + d.Q_fc) + d.Q_fg;
}

/// Equivalent force the servomechanisms exert to realize the prescribed
/// motion of q_e.
template <class T>
Vec<T> equivalent_force(const GeneralizedState<T>& s, const MassData<T>& m) {
  const ForceDecomposition<T> d = force_decomposition(s, m);
  return ((d.Q_eem + d.Q_efm) + d.Q_ec) + d.Q_eg;
}

/// Free accelerations for given free forces Q_f. The free mass block is
/// factorized (LDL^T) rather than inverted.
template <class T>
Vec<T> forward_dynamics(const GeneralizedState<T>& s, const MassData<T>& m,
                        const Vec<T>& Q_f) {
  const std::size_t n = detail::check_state(s);
  detail::check_mass(m, n);
  const std::size_t nf = s.n_free();
  if (Q_f.size() != nf) throw ConfigError("forward_dynamics: Q_f size");
  const PartitionedMass<T> pm(m.M, m.dM_dq, nf);
  const Vec<T> qd = s.qd();
  const Matrix<T> Mdot = mass_time_derivative(m.dM_dq, qd);

  const Vec<T> Q_fem = matvec(pm.fe, s.qdd_e);
  const Vec<T> Q_fc =
      centrifugal_coriolis_term(m.dM_dq, Mdot, qd, Side::free, nf);
  const Vec<T> Q_fg = detail::rows_of(m.dV_dq, Side::free, nf);
  return ldlt_solve(ldlt(pm.ff), ((Q_f - Q_fem) - Q_fc) - Q_fg);
}

/// Full-coordinate force Q' = M qdd + Mdot qd - c + dV/dq, evaluated without
/// partitioning. Its free rows coincide with inverse_dynamics and its external
/// rows with equivalent_force.
template <class T>
Vec<T> extended_force(const GeneralizedState<T>& s, const MassData<T>& m) {
  const std::size_t n = detail::check_state(s);
  detail::check_mass(m, n);
  const Vec<T> qd = s.qd();
  const Matrix<T> Mdot = mass_time_derivative(m.dM_dq, qd);
  return ((matvec(m.M, s.qdd()) + matvec(Mdot, qd)) -
          velocity_quadratic_term(m.dM_dq, qd)) +
         m.dV_dq;
}

/// Tdot = qd^T M qdd + 1/2 qd^T Mdot qd (product-rule form).
template <class T>
T kinetic_energy_rate_product_form(const GeneralizedState<T>& s,
                                   const MassData<T>& m) {
  const Vec<T> qd = s.qd();
  const Matrix<T> Mdot = mass_time_derivative(m.dM_dq, qd);
  return dot(qd, matvec(m.M, s.qdd())) + 0.5 * dot(qd, matvec(Mdot, qd));
}

/// Energies, their rates, and the work rate of the full force vector
/// Q = [Q_f; Q_e]. Tdot uses the form built on dM/dq, so Edot - qd^T Q
/// vanishes identically when Q comes from the dynamics.
template <class T>
EnergyReport<T> energy_report(const GeneralizedState<T>& s,
                              const MassData<T>& m, const Vec<T>& Q) {
  const std::size_t n = detail::check_state(s);
  detail::check_mass(m, n);
  if (Q.size() != n) throw ConfigError("energy_report: Q size");
  const Vec<T> qd = s.qd();
  const Matrix<T> Mdot = mass_time_derivative(m.dM_dq, qd);
  const Vec<T> inner = (matvec(m.M, s.qdd()) + matvec(Mdot, qd)) -
                       velocity_quadratic_term(m.dM_dq, qd);

  EnergyReport<T> r;
  r.T_kin = kinetic_energy(m.M, qd);
  r.V = m.V;
  r.E = r.T_kin + r.V;
  r.Tdot = dot(qd, inner);
  r.Vdot = dot(m.dV_dq, qd);
  r.Edot = r.Tdot + r.Vdot;
  r.Wdot.resize(n);
  for (std::size_t i = 0; i < n; ++i) r.Wdot[i] = qd[i] * Q[i];
  r.Wdot_total = dot(qd, Q);
  return r;
}

/// Edot - Wdot_total. Zero (to rounding) when the report was built from a
/// single consistent state, provider, and dynamics-derived Q.
template <class T>
T first_law_residual(const EnergyReport<T>& r) {
  return r.Edot - r.Wdot_total;
}

}  // namespace servolnn
