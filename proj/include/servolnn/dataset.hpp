// Copyright (c) 2026 The servolnn Authors
// SPDX-License-Identifier: Apache-2.0
//
// Trajectory datasets: generation, train/test split, CSV files, and
// conversion to training batches.

#pragma once

#include <algorithm>
#include <charconv>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "servolnn/config.hpp"
#include "servolnn/error.hpp"
#include "servolnn/simulator.hpp"
#include "servolnn/training.hpp"

namespace servolnn {

struct GeneratedTrial {
  TrialSpec spec;
  std::vector<TrajectorySample> samples;
};

inline std::vector<GeneratedTrial> generate_trials(const PendulumCartParams& p,
                                                   const std::vector<TrialSpec>& specs) {
  std::vector<GeneratedTrial> out;
  for (std::size_t i = 0; i < specs.size(); ++i) {
    out.push_back({specs[i], integrate_trial(p, specs[i], static_cast<int>(i))});
  }
  return out;
}

struct DatasetSplit {
  std::vector<TrajectorySample> train;
  std::vector<TrajectorySample> test;
};

/// Draws train_count samples uniformly without replacement from the pooled
/// training trials (kept in trial/time order); test trials go whole into the
/// test set. A train_count of zero puts every trial in the test set.
inline DatasetSplit build_dataset(const std::vector<GeneratedTrial>& trials,
                                  std::uint64_t seed, std::size_t train_count) {
  DatasetSplit out;
  std::vector<const TrajectorySample*> pool;
  for (const auto& t : trials) {
    const bool to_test = train_count == 0 || t.spec.split == Split::test;
    for (const auto& s : t.samples) {
      if (to_test) out.test.push_back(s);
      else pool.push_back(&s);
    }
  }
  if (train_count > pool.size()) {
    throw ConfigError("requested " + std::to_string(train_count) +
                      " training samples but the training trials hold " +
                      std::to_string(pool.size()));
  }
  std::vector<std::size_t> idx(pool.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  idx.resize(train_count);
  std::sort(idx.begin(), idx.end());
  for (auto i : idx) out.train.push_back(*pool[i]);
  return out;
}

inline bool all_have_qe(const std::vector<TrajectorySample>& samples) {
  return std::all_of(samples.begin(), samples.end(),
                     [](const TrajectorySample& s) { return s.Q_x.has_value(); });
}

inline std::vector<TrajectorySample> strip_qe(std::vector<TrajectorySample> samples) {
  for (auto& s : samples) s.Q_x.reset();
  return samples;
}

// -- CSV ------------------------------------------------------------------

inline constexpr const char* kDatasetHeader =
    "trial_id,t,theta,x,theta_dot,x_dot,theta_ddot,x_ddot,Q_theta,Q_x,T,V,E";
inline constexpr const char* kDatasetHeaderNoQe =
    "trial_id,t,theta,x,theta_dot,x_dot,theta_ddot,x_ddot,Q_theta,T,V,E";

inline std::string format_double(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

/// Writes samples with shortest round-trip formatting. A missing Q_x is an
/// empty field; with include_qe = false the column is dropped entirely.
inline void write_dataset(const std::string& path,
                          const std::vector<TrajectorySample>& samples,
                          bool include_qe = true) {
  std::ofstream os(path, std::ios::trunc | std::ios::binary);
  if (!os) throw IoError("cannot open '" + path + "' for writing");
  os << (include_qe ? kDatasetHeader : kDatasetHeaderNoQe) << '\n';
  for (const auto& s : samples) {
    os << s.trial_id;
    for (double v : {s.t, s.theta, s.x, s.theta_dot, s.x_dot, s.theta_ddot,
                     s.x_ddot, s.Q_theta})
      os << ',' << format_double(v);
    if (include_qe) {
      os << ',';
      if (s.Q_x) os << format_double(*s.Q_x);
    }
    for (double v : {s.T, s.V, s.E}) os << ',' << format_double(v);
    os << '\n';
  }
  if (!os) throw IoError("write to '" + path + "' failed");
}

struct LoadedDataset {
  std::vector<TrajectorySample> samples;
  bool has_qe = false;  // every sample carries Q_x
};

inline LoadedDataset read_dataset(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open '" + path + "'");
  std::string line;
  if (!std::getline(is, line)) throw ParseError(path + ": empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  bool qe_column;
  if (line == kDatasetHeader) qe_column = true;
  else if (line == kDatasetHeaderNoQe) qe_column = false;
  else throw ParseError(path + ":1: unexpected header '" + line + "'");
  const std::size_t n_fields = qe_column ? 13 : 12;

  LoadedDataset out;
  std::size_t line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::string where = path + ":" + std::to_string(line_no);
    const auto f = split(line, ',');
    if (f.size() != n_fields) {
      throw ParseError(where + ": expected " + std::to_string(n_fields) +
                       " fields, got " + std::to_string(f.size()));
    }
    auto num = [&](std::size_t i) {
      double v = 0.0;
      const auto [p, ec] = std::from_chars(f[i].data(), f[i].data() + f[i].size(), v);
      if (f[i].empty() || ec != std::errc() || p != f[i].data() + f[i].size()) {
        throw ParseError(where + ": bad number '" + f[i] + "' in column " + std::to_string(i + 1));
      }
      return v;
    };
    TrajectorySample s;
    {
      int id = 0;
      const auto [p, ec] = std::from_chars(f[0].data(), f[0].data() + f[0].size(), id);
      if (f[0].empty() || ec != std::errc() || p != f[0].data() + f[0].size()) {
        throw ParseError(where + ": bad trial_id '" + f[0] + "'");
      }
      s.trial_id = id;
    }
    s.t = num(1);
    s.theta = num(2);
    s.x = num(3);
    s.theta_dot = num(4);
    s.x_dot = num(5);
    s.theta_ddot = num(6);
    s.x_ddot = num(7);
    s.Q_theta = num(8);
    std::size_t k = 9;
    if (qe_column) {
      if (!f[9].empty()) s.Q_x = num(9);
      k = 10;
    }
    s.T = num(k);
    s.V = num(k + 1);
    s.E = num(k + 2);
    if (!out.samples.empty() && out.samples.back().trial_id == s.trial_id &&
        !(s.t > out.samples.back().t)) {
      throw ParseError(where + ": time not increasing within trial " + std::to_string(s.trial_id));
    }
    out.samples.push_back(s);
  }
  out.has_qe = qe_column && all_have_qe(out.samples);
  return out;
}

/// Column-per-sample training batch. With with_qe every sample must carry Q_x.
inline Batch to_batch(const std::vector<TrajectorySample>& samples, bool with_qe) {
  if (with_qe && !all_have_qe(samples)) {
    throw ConfigError("Q_e supervision requested but the data lacks Q_x");
  }
  Batch b = Batch::empty(1, 1, samples.size(), with_qe);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& s = samples[i];
    b.q(0, i) = s.theta;
    b.q(1, i) = s.x;
    b.qd(0, i) = s.theta_dot;
    b.qd(1, i) = s.x_dot;
    b.qdd(0, i) = s.theta_ddot;
    b.qdd(1, i) = s.x_ddot;
    b.Q_f(0, i) = s.Q_theta;
    if (with_qe) (*b.Q_e)(0, i) = *s.Q_x;
  }
  return b;
}

}  // namespace servolnn
