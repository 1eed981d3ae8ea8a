// Copyright (c) 2026 The servolnn Authors
// SPDX-License-Identifier: Apache-2.0
//
// Command implementations behind the servolnn executable. Each command
// returns a process exit code:
//   0 success, 1 verification failed, 2 configuration or usage error,
//   3 numerical abort, 4 no converged seed.

#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "servolnn/config.hpp"
#include "servolnn/network.hpp"
#include "servolnn/simulator.hpp"
#include "servolnn/training.hpp"

namespace servolnn::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailed = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitNumerical = 3;
inline constexpr int kExitNoConverged = 4;

enum class PowerSetting { automatic, true_power, estimated_power, off };

struct RunConfig {
  PendulumCartParams system;
  std::vector<TrialSpec> trials;  // empty: built-in defaults
  std::uint64_t split_seed = 7;
  std::size_t train_samples = 1024;
  NetworkConfig network;
  TrainConfig train;
  bool use_inverse = true;
  bool use_forward = true;
  PowerSetting power = PowerSetting::automatic;
  std::size_t check_states = 1000;
  std::size_t bench_repeat = 1;

  const std::vector<TrialSpec>& trial_list() const;
  /// Loss configuration for data with or without Q_e.
  LossConfig loss_for(bool has_qe) const;
  IniDocument to_ini() const;
};

RunConfig parse_run_config(const IniDocument& doc);
RunConfig load_run_config(const std::optional<std::string>& path);
PowerSetting parse_power_setting(const std::string& s);

struct Options {
  std::optional<std::string> config;
  std::string out;
  std::string data;
  std::optional<std::uint64_t> seed;
  std::vector<std::uint64_t> seeds;
  std::vector<std::string> models;
  bool oracle = false;
  bool no_qe = false;
  std::optional<std::string> power_mode;
};

int cmd_generate(const Options& opt, std::ostream& log);
int cmd_train(const Options& opt, std::ostream& log);
int cmd_eval(const Options& opt, std::ostream& log);
int cmd_check_oracle(const Options& opt, std::ostream& log);
int cmd_bench(const Options& opt, std::ostream& log);
int cmd_seed_sweep(const Options& opt, std::ostream& log);

/// Runs a command, mapping library exceptions to exit codes and printing
/// the message to err.
int guarded(int (*command)(const Options&, std::ostream&), const Options& opt,
            std::ostream& log, std::ostream& err);

// Data-directory manifest helpers.
struct Manifest {
  std::uint64_t split_seed = 0;
  std::size_t trials = 0;
  std::size_t train_samples = 0;
  std::size_t test_samples = 0;
  bool has_qe = true;
  std::string oracle_checks = "pending";
  std::string oracle_eval = "pending";
};

Manifest read_manifest(const std::string& data_dir);
void write_manifest(const std::string& data_dir, const Manifest& m);

/// Sidecar written next to a trained model.
struct ModelMeta {
  double final_loss = 0.0;
  bool converged = false;
  std::size_t epochs_run = 0;
  std::uint64_t seed = 0;
  bool qe_supervised = false;
  std::string power_mode;
};

void write_model_meta(const std::string& model_path, const ModelMeta& m);
std::optional<ModelMeta> read_model_meta(const std::string& model_path);

}  // namespace servolnn::cli
