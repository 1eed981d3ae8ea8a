// Copyright (c) 2026 The servolnn Authors
// SPDX-License-Identifier: Apache-2.0
//
// servolnn: data generation, training, evaluation, oracle checks, and
// latency benchmarks for Lagrangian networks with servo-driven coordinates.

#include <iostream>

#include "CLI11.hpp"
#include "commands.hpp"

namespace cli = servolnn::cli;

int main(int argc, char** argv) {
  CLI::App app{"Lagrangian neural networks with externally specified coordinates"};
  app.require_subcommand(1);
  cli::Options opt;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", opt.config, "INI configuration file");
  };
  auto add_data = [&](CLI::App* sub) {
    sub->add_option("--data", opt.data, "dataset directory written by generate")->required();
  };
  auto add_loss = [&](CLI::App* sub) {
    sub->add_flag("--no-qe", opt.no_qe, "train without Q_e supervision");
    sub->add_option("--power-mode", opt.power_mode, "power loss: auto, true, estimated, off")
        ->check(CLI::IsMember({"auto", "true", "estimated", "off"}));
  };

  auto* gen = app.add_subcommand("generate", "simulate trials and write train/test data");
  add_common(gen);
  gen->add_option("--out", opt.out, "output directory")->required();
  gen->add_option("--seed", opt.seed, "train/test sampling seed");

  auto* trn = app.add_subcommand("train", "train one model");
  add_common(trn);
  add_data(trn);
  add_loss(trn);
  trn->add_option("--out", opt.out, "output directory")->required();
  trn->add_option("--seed", opt.seed, "initialization and shuffling seed");

  auto* evl = app.add_subcommand("eval", "evaluate models on the test set");
  add_common(evl);
  add_data(evl);
  evl->add_option("--out", opt.out, "output directory")->required();
  evl->add_option("--model", opt.models, "model file (repeatable)");
  evl->add_flag("--oracle", opt.oracle, "evaluate the analytic provider");

  auto* chk = app.add_subcommand("check-oracle", "run the dynamics invariant suite");
  add_common(chk);
  chk->add_option("--data", opt.data, "dataset directory to mark as checked");
  chk->add_option("--out", opt.out, "output directory");
  chk->add_option("--seed", opt.seed, "seed for random states");

  auto* bch = app.add_subcommand("bench", "single-sample inference latency");
  add_common(bch);
  add_data(bch);
  bch->add_option("--model", opt.models, "model file")->required();
  bch->add_option("--out", opt.out, "output directory");

  auto* swp = app.add_subcommand("seed-sweep", "train and evaluate several seeds");
  add_common(swp);
  add_data(swp);
  add_loss(swp);
  swp->add_option("--out", opt.out, "output directory")->required();
  swp->add_option("--seeds", opt.seeds, "comma-separated seeds")->delimiter(',')->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return cli::kExitConfig;
  }

  int (*command)(const cli::Options&, std::ostream&) = nullptr;
  if (gen->parsed()) command = cli::cmd_generate;
  else if (trn->parsed()) command = cli::cmd_train;
  else if (evl->parsed()) command = cli::cmd_eval;
  else if (chk->parsed()) command = cli::cmd_check_oracle;
  else if (bch->parsed()) command = cli::cmd_bench;
  else command = cli::cmd_seed_sweep;
  return cli::guarded(command, opt, std::cout, std::cerr);
}
