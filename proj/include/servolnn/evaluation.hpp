// Copyright (c) 2026 The servolnn Authors
// SPDX-License-Identifier: Apache-2.0
//
// Test-set evaluation of mass-matrix providers on pendulum-cart data: every
// force, energy, and power quantity per sample, RMSE against the oracle,
// multi-model statistics, and plot tables.

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "servolnn/dataset.hpp"
#include "servolnn/dynamics.hpp"
#include "servolnn/network.hpp"
#include "servolnn/simulator.hpp"

namespace servolnn {

using Provider = std::function<MassData<double>(std::span<const double>)>;

inline Provider make_oracle_provider(const PendulumCartParams& p) {
  return [p](std::span<const double> q) { return oracle_provider(p, q); };
}

inline Provider make_network_provider(const NetworkParams& params) {
  auto ev = std::make_shared<NetworkEvaluator>(params);
  return [ev](std::span<const double> q) { return ev->mass_data(q); };
}

enum Quantity : std::size_t {
  kQddF, kQF, kQE, kT, kV, kE, kTdot, kVdot, kEdot, kWdotF, kWdotE,
  kMff, kMfe, kMee, kQffm, kQfem, kQfc, kQfg, kQeem, kQefm, kQec, kQeg,
  kQuantityCount
};

inline constexpr std::array<const char*, kQuantityCount> kQuantityNames = {
    "qdd_f", "Q_f",   "Q_e",   "T",    "V",     "E",    "Tdot",  "Vdot",
    "Edot",  "Wdot_f", "Wdot_e", "M_ff", "M_fe", "M_ee", "Q_ffm", "Q_fem",
    "Q_fc",  "Q_fg",  "Q_eem", "Q_efm", "Q_ec", "Q_eg"};

/// Potential and total energy are only defined up to an additive constant.
inline bool offset_invariant(std::size_t q) { return q == kV || q == kE; }

using QuantityRow = std::array<double, kQuantityCount>;

/// All quantities for one sample from one provider. The free acceleration
/// comes from forward dynamics driven by the recorded Q_theta; everything
/// else is evaluated on the recorded state.
inline QuantityRow evaluate_sample(const Provider& provider, const TrajectorySample& s) {
  const double q[2] = {s.theta, s.x};
  const MassData<double> m = provider(q);
  GeneralizedState<double> st = to_state(s);
  const ForceDecomposition<double> d = force_decomposition(st, m);
  const double Q_f = d.Q_ffm[0] + d.Q_fem[0] + d.Q_fc[0] + d.Q_fg[0];
  const double Q_e = d.Q_eem[0] + d.Q_efm[0] + d.Q_ec[0] + d.Q_eg[0];
  const EnergyReport<double> r = energy_report(st, m, Vec<double>{Q_f, Q_e});
  GeneralizedState<double> fwd = st;
  fwd.qdd_f.reset();
  const double qdd_f = forward_dynamics(fwd, m, Vec<double>{s.Q_theta})[0];

  QuantityRow row{};
  row[kQddF] = qdd_f;
  row[kQF] = Q_f;
  row[kQE] = Q_e;
  row[kT] = r.T_kin;
  row[kV] = r.V;
  row[kE] = r.E;
  row[kTdot] = r.Tdot;
  row[kVdot] = r.Vdot;
  row[kEdot] = r.Edot;
  row[kWdotF] = r.Wdot[0];
  row[kWdotE] = r.Wdot[1];
  row[kMff] = m.M(0, 0);
  row[kMfe] = m.M(0, 1);
  row[kMee] = m.M(1, 1);
  row[kQffm] = d.Q_ffm[0];
  row[kQfem] = d.Q_fem[0];
  row[kQfc] = d.Q_fc[0];
  row[kQfg] = d.Q_fg[0];
  row[kQeem] = d.Q_eem[0];
  row[kQefm] = d.Q_efm[0];
  row[kQec] = d.Q_ec[0];
  row[kQeg] = d.Q_eg[0];
  return row;
}

inline std::vector<QuantityRow> evaluate_samples(const Provider& provider,
                                                 const std::vector<TrajectorySample>& samples) {
  std::vector<QuantityRow> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(evaluate_sample(provider, s));
  return out;
}

/// Ground truth: recorded values where the dataset has them, the oracle
/// for the rest.
inline std::vector<QuantityRow> truth_rows(const PendulumCartParams& p,
                                           const std::vector<TrajectorySample>& samples) {
  std::vector<QuantityRow> rows = evaluate_samples(make_oracle_provider(p), samples);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& s = samples[i];
    rows[i][kQddF] = s.theta_ddot;
    rows[i][kQF] = s.Q_theta;
    if (s.Q_x) rows[i][kQE] = *s.Q_x;
    rows[i][kT] = s.T;
    rows[i][kV] = s.V;
    rows[i][kE] = s.E;
  }
  return rows;
}

inline double column_mean(const std::vector<QuantityRow>& rows, std::size_t q) {
  if (rows.empty()) return 0.0;
  double s = 0.0;
  for (const auto& r : rows) s += r[q];
  return s / static_cast<double>(rows.size());
}

inline double column_std(const std::vector<QuantityRow>& rows, std::size_t q) {
  if (rows.empty()) return 0.0;
  const double m = column_mean(rows, q);
  double s = 0.0;
  for (const auto& r : rows) s += (r[q] - m) * (r[q] - m);
  return std::sqrt(s / static_cast<double>(rows.size()));
}

/// RMSE of one quantity; offset-invariant quantities are compared after
/// removing the mean difference.
inline double rmse(const std::vector<QuantityRow>& pred,
                   const std::vector<QuantityRow>& truth, std::size_t q) {
  if (pred.size() != truth.size()) throw ConfigError("rmse: row counts differ");
  if (pred.empty()) throw ConfigError("rmse: empty evaluation set");
  const double shift = offset_invariant(q) ? column_mean(pred, q) - column_mean(truth, q) : 0.0;
  double s = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double e = pred[i][q] - shift - truth[i][q];
    s += e * e;
  }
  return std::sqrt(s / static_cast<double>(pred.size()));
}

struct SummaryStats {
  std::size_t count = 0;
  double mean = 0.0, std = 0.0, min = 0.0, max = 0.0;
};

/// Population statistics, so a single value has zero spread.
inline SummaryStats summarize(std::span<const double> v) {
  SummaryStats s;
  s.count = v.size();
  if (v.empty()) return s;
  s.mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  double acc = 0.0;
  for (double x : v) acc += (x - s.mean) * (x - s.mean);
  s.std = std::sqrt(acc / static_cast<double>(v.size()));
  s.min = *std::min_element(v.begin(), v.end());
  s.max = *std::max_element(v.begin(), v.end());
  return s;
}

struct EvaluatedModel {
  std::string label;
  bool converged = true;
  double final_loss = 0.0;
  std::vector<QuantityRow> rows;
  QuantityRow rmse{};
};

struct EvalReport {
  std::vector<EvaluatedModel> models;
  std::array<SummaryStats, kQuantityCount> stats{};  // over converged models

  std::size_t converged_count() const {
    return static_cast<std::size_t>(std::count_if(
        models.begin(), models.end(), [](const EvaluatedModel& m) { return m.converged; }));
  }
};

inline EvalReport build_report(std::vector<EvaluatedModel> models,
                               const std::vector<QuantityRow>& truth) {
  EvalReport rep;
  for (auto& m : models) {
    for (std::size_t q = 0; q < kQuantityCount; ++q) m.rmse[q] = rmse(m.rows, truth, q);
  }
  rep.models = std::move(models);
  for (std::size_t q = 0; q < kQuantityCount; ++q) {
    std::vector<double> v;
    for (const auto& m : rep.models)
      if (m.converged) v.push_back(m.rmse[q]);
    rep.stats[q] = summarize(v);
  }
  return rep;
}

inline void write_report(const std::filesystem::path& dir, const EvalReport& rep) {
  std::ofstream per(dir / "rmse_per_model.csv", std::ios::trunc);
  std::ofstream sum(dir / "rmse_summary.csv", std::ios::trunc);
  if (!per || !sum) throw IoError("cannot write report in '" + dir.string() + "'");
  per << "quantity,model,converged,final_loss,rmse\n";
  for (std::size_t q = 0; q < kQuantityCount; ++q)
    for (const auto& m : rep.models)
      per << kQuantityNames[q] << ',' << m.label << ',' << (m.converged ? 1 : 0) << ','
          << format_double(m.final_loss) << ',' << format_double(m.rmse[q]) << '\n';
  sum << "quantity,models,mean,std,min,max\n";
  for (std::size_t q = 0; q < kQuantityCount; ++q) {
    const auto& s = rep.stats[q];
    sum << kQuantityNames[q] << ',' << s.count << ',' << format_double(s.mean) << ','
        << format_double(s.std) << ',' << format_double(s.min) << ','
        << format_double(s.max) << '\n';
  }
}

/// One CSV per quantity: trial_id, t, truth, pred_<label>..., then the band
/// columns over converged models. Offset-invariant predictions are shifted
/// to the truth mean. q_e acceleration gets a truth-only file.
inline void write_plot_tables(const std::filesystem::path& dir,
                              const std::vector<TrajectorySample>& samples,
                              const std::vector<QuantityRow>& truth,
                              const EvalReport& rep) {
  std::filesystem::create_directories(dir);
  for (std::size_t q = 0; q < kQuantityCount; ++q) {
    const auto path = dir / (std::string("plot_") + kQuantityNames[q] + ".csv");
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw IoError("cannot write '" + path.string() + "'");
    std::vector<double> shift(rep.models.size(), 0.0);
    if (offset_invariant(q)) {
      for (std::size_t k = 0; k < rep.models.size(); ++k)
        shift[k] = column_mean(rep.models[k].rows, q) - column_mean(truth, q);
    }
    os << "trial_id,t,truth";
    for (const auto& m : rep.models) os << ",pred_" << m.label;
    os << ",mean,std_lo,std_hi,min,max\n";
    std::vector<double> band;
    for (std::size_t i = 0; i < samples.size(); ++i) {
      os << samples[i].trial_id << ',' << format_double(samples[i].t) << ','
         << format_double(truth[i][q]);
      band.clear();
      for (std::size_t k = 0; k < rep.models.size(); ++k) {
        const double v = rep.models[k].rows[i][q] - shift[k];
        os << ',' << format_double(v);
        if (rep.models[k].converged) band.push_back(v);
      }
      const SummaryStats s = summarize(band);
      if (s.count == 0) {
        os << ",,,,,\n";
      } else {
        os << ',' << format_double(s.mean) << ',' << format_double(s.mean - s.std) << ','
           << format_double(s.mean + s.std) << ',' << format_double(s.min) << ','
           << format_double(s.max) << '\n';
      }
    }
  }
  const auto path = dir / "plot_qdd_e.csv";
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw IoError("cannot write '" + path.string() + "'");
  os << "trial_id,t,truth\n";
  for (const auto& s : samples)
    os << s.trial_id << ',' << format_double(s.t) << ',' << format_double(s.x_ddot) << '\n';
}

}  // namespace servolnn
