// Copyright (c) 2026 The servolnn Authors
// SPDX-License-Identifier: Apache-2.0

#include "commands.hpp"

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <set>
#include <sstream>

#include "servolnn/checks.hpp"
#include "servolnn/dataset.hpp"
#include "servolnn/evaluation.hpp"

namespace servolnn::cli {

namespace fs = std::filesystem;

namespace {

std::string num(double v) { return format_double(v); }

const char* power_setting_name(PowerSetting p) {
  switch (p) {
    case PowerSetting::automatic: return "auto";
    case PowerSetting::true_power: return "true";
    case PowerSetting::estimated_power: return "estimated";
    case PowerSetting::off: return "off";
  }
  return "?";
}

std::vector<std::size_t> parse_widths(const std::string& text, const std::string& where) {
  std::vector<std::size_t> out;
  if (trim(text).empty()) return out;
  for (const auto& w : split(text, ',')) out.push_back(parse_uint(w, where));
  return out;
}

void ensure_out_dir(const std::string& out) {
  if (out.empty()) throw UsageError("--out is required");
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec || !fs::is_directory(out)) throw IoError("cannot create output directory '" + out + "'");
  const fs::path probe = fs::path(out) / ".write_test";
  std::ofstream os(probe);
  if (!os) throw IoError("output directory '" + out + "' is not writable");
  os.close();
  fs::remove(probe, ec);
}

void echo_config(const std::string& out, const RunConfig& cfg, const Options& opt,
                 const std::string& command) {
  IniDocument doc = cfg.to_ini();
  IniSection inv{"invocation", 0, {}};
  inv.values["command"] = command;
  if (opt.config) inv.values["config"] = *opt.config;
  if (!opt.data.empty()) inv.values["data"] = opt.data;
  if (opt.seed) inv.values["seed"] = std::to_string(*opt.seed);
  if (!opt.seeds.empty()) {
    std::string s;
    for (auto v : opt.seeds) s += (s.empty() ? "" : ",") + std::to_string(v);
    inv.values["seeds"] = s;
  }
  for (std::size_t i = 0; i < opt.models.size(); ++i)
    inv.values["model" + std::to_string(i)] = opt.models[i];
  if (opt.oracle) inv.values["oracle"] = "true";
  if (opt.no_qe) inv.values["no_qe"] = "true";
  if (opt.power_mode) inv.values["power_mode"] = *opt.power_mode;
  doc.sections.insert(doc.sections.begin(), std::move(inv));
  std::ofstream os(fs::path(out) / "config.ini", std::ios::trunc);
  if (!os) throw IoError("cannot write resolved config to '" + out + "'");
  os << "# resolved configuration\n" << doc.to_string();
}

RunConfig resolve(const Options& opt) {
  RunConfig cfg = load_run_config(opt.config);
  if (opt.power_mode) cfg.power = parse_power_setting(*opt.power_mode);
  return cfg;
}

std::string dataset_path(const std::string& data_dir, const char* name) {
  if (data_dir.empty()) throw UsageError("--data is required");
  return (fs::path(data_dir) / name).string();
}

std::string model_label(const std::string& path, std::size_t index) {
  const fs::path p(path);
  std::string stem = p.stem().string();
  if (stem == "model" && p.has_parent_path() && !p.parent_path().filename().empty()) {
    stem = p.parent_path().filename().string();
  }
  return stem.empty() ? "model" + std::to_string(index) : stem;
}

struct TrainOutcome {
  TrainResult result;
  ModelMeta meta;
};

TrainOutcome train_into(const RunConfig& cfg, const std::vector<TrajectorySample>& samples,
                        bool has_qe, std::uint64_t seed, const std::string& out,
                        std::ostream& log) {
  TrainConfig tc = cfg.train;
  tc.seed = seed;
  const LossConfig lc = cfg.loss_for(has_qe);
  const Batch data = to_batch(samples, has_qe);
  const NetworkParams init = init_params(cfg.network, seed);
  const std::size_t report_every = std::max<std::size_t>(1, tc.epochs / 10);
  TrainResult r = train(init, data, tc, lc, [&](const EpochRecord& e) {
    if (e.epoch % report_every == 0 || e.epoch == 1) {
      log << "  epoch " << e.epoch << "  total " << std::setprecision(6) << e.loss.total
          << "  (inv " << e.loss.inverse << ", fwd " << e.loss.forward << ", power "
          << e.loss.power << ", Q_e " << e.loss.qe << ")\n";
    }
  });
  const fs::path model = fs::path(out) / "model.bin";
  save_params(r.params, model.string());
  write_loss_history((fs::path(out) / "loss_history.csv").string(), r.history);
  ModelMeta meta;
  meta.final_loss = r.history.empty() ? 0.0 : r.final_loss();
  meta.converged = r.converged;
  meta.epochs_run = r.history.size();
  meta.seed = seed;
  meta.qe_supervised = has_qe;
  meta.power_mode = power_mode_name(lc.power_mode);
  write_model_meta(model.string(), meta);
  return {std::move(r), meta};
}

void print_report(const EvalReport& rep, std::ostream& log) {
  log << std::left << std::setw(8) << "quantity";
  for (const auto& m : rep.models) log << ' ' << std::setw(12) << m.label.substr(0, 12);
  log << ' ' << std::setw(12) << "mean" << ' ' << "std\n";
  for (std::size_t q = 0; q < kQuantityCount; ++q) {
    log << std::setw(8) << kQuantityNames[q];
    for (const auto& m : rep.models) log << ' ' << std::setw(12) << std::setprecision(4) << m.rmse[q];
    log << ' ' << std::setw(12) << rep.stats[q].mean << ' ' << rep.stats[q].std << '\n';
  }
  log << std::right;
}

}  // namespace

// -- configuration ----------------------------------------------------------

PowerSetting parse_power_setting(const std::string& s) {
  if (s == "auto") return PowerSetting::automatic;
  if (s == "true") return PowerSetting::true_power;
  if (s == "estimated") return PowerSetting::estimated_power;
  if (s == "off") return PowerSetting::off;
  throw ConfigError("power mode must be auto, true, estimated, or off; got '" + s + "'");
}

const std::vector<TrialSpec>& RunConfig::trial_list() const {
  static const std::vector<TrialSpec> defaults = default_trials();
  return trials.empty() ? defaults : trials;
}

LossConfig RunConfig::loss_for(bool has_qe) const {
  LossConfig lc;
  lc.use_inverse = use_inverse;
  lc.use_forward = use_forward;
  switch (power) {
    case PowerSetting::automatic:
      lc.power_mode = has_qe ? PowerMode::true_power : PowerMode::estimated_power;
      break;
    case PowerSetting::true_power:
      if (!has_qe) throw ConfigError("power mode 'true' needs Q_e in the training data");
      lc.power_mode = PowerMode::true_power;
      break;
    case PowerSetting::estimated_power: lc.power_mode = PowerMode::estimated_power; break;
    case PowerSetting::off: lc.power_mode = PowerMode::off; break;
  }
  lc.validate();
  return lc;
}

IniDocument RunConfig::to_ini() const {
  IniDocument doc;
  auto& s = doc.section("system");
  s.values["m1"] = num(system.m1);
  s.values["m2"] = num(system.m2);
  s.values["L"] = num(system.L);
  s.values["g"] = num(system.g);
  auto& d = doc.section("dataset");
  d.values["seed"] = std::to_string(split_seed);
  d.values["train_samples"] = std::to_string(train_samples);
  auto& n = doc.section("network");
  std::string widths;
  for (auto w : network.hidden) widths += (widths.empty() ? "" : ",") + std::to_string(w);
  n.values["hidden"] = widths;
  n.values["epsilon"] = num(network.epsilon);
  auto& t = doc.section("train");
  t.values["learning_rate"] = num(train.learning_rate);
  t.values["weight_decay"] = num(train.weight_decay);
  t.values["batch_size"] = std::to_string(train.batch_size);
  t.values["epochs"] = std::to_string(train.epochs);
  t.values["seed"] = std::to_string(train.seed);
  t.values["convergence_threshold"] = num(train.convergence_threshold);
  auto& l = doc.section("loss");
  l.values["inverse"] = use_inverse ? "true" : "false";
  l.values["forward"] = use_forward ? "true" : "false";
  l.values["power_mode"] = power_setting_name(power);
  auto& c = doc.section("check");
  c.values["states"] = std::to_string(check_states);
  auto& b = doc.section("bench");
  b.values["repeat"] = std::to_string(bench_repeat);
  trials_to_ini(trial_list(), doc);
  return doc;
}

RunConfig parse_run_config(const IniDocument& doc) {
  static const std::set<std::string> known = {"system", "dataset", "network", "train",
                                              "loss",   "check",   "bench",   "trial"};
  for (const auto& s : doc.sections) {
    if (!known.count(s.name)) {
      throw ConfigError("unknown section [" + s.name + "] at line " + std::to_string(s.line));
    }
  }
  RunConfig cfg;
  cfg.system = system_from_ini(doc);
  cfg.trials = trials_from_ini(doc);
  if (const IniSection* d = doc.find("dataset")) {
    cfg.split_seed = d->integer("seed", cfg.split_seed);
    cfg.train_samples = d->integer("train_samples", cfg.train_samples);
  }
  if (const IniSection* n = doc.find("network")) {
    if (auto h = n->get("hidden")) cfg.network.hidden = parse_widths(*h, n->where("hidden"));
    cfg.network.epsilon = n->number("epsilon", cfg.network.epsilon);
  }
  cfg.network.validate();
  if (const IniSection* t = doc.find("train")) {
    cfg.train.learning_rate = t->number("learning_rate", cfg.train.learning_rate);
    cfg.train.weight_decay = t->number("weight_decay", cfg.train.weight_decay);
    cfg.train.batch_size = t->integer("batch_size", cfg.train.batch_size);
    cfg.train.epochs = t->integer("epochs", cfg.train.epochs);
    cfg.train.seed = t->integer("seed", cfg.train.seed);
    cfg.train.convergence_threshold =
        t->number("convergence_threshold", cfg.train.convergence_threshold);
  }
  cfg.train.validate();
  if (const IniSection* l = doc.find("loss")) {
    cfg.use_inverse = l->flag("inverse", cfg.use_inverse);
    cfg.use_forward = l->flag("forward", cfg.use_forward);
    if (auto p = l->get("power_mode")) cfg.power = parse_power_setting(*p);
  }
  if (!cfg.use_inverse && !cfg.use_forward) {
    throw ConfigError("[loss] needs at least one of inverse and forward enabled");
  }
  if (const IniSection* c = doc.find("check")) cfg.check_states = c->integer("states", cfg.check_states);
  if (const IniSection* b = doc.find("bench")) cfg.bench_repeat = b->integer("repeat", cfg.bench_repeat);
  if (cfg.bench_repeat == 0) throw ConfigError("[bench] repeat must be positive");
  return cfg;
}

RunConfig load_run_config(const std::optional<std::string>& path) {
  if (!path) return RunConfig{};
  IniDocument doc;
  try {
    doc = load_ini(*path);
  } catch (const ParseError& e) {
    throw ConfigError(*path + ": " + e.what());
  }
  return parse_run_config(doc);
}

// -- manifests ----------------------------------------------------------------

Manifest read_manifest(const std::string& data_dir) {
  const fs::path p = fs::path(data_dir) / "manifest.ini";
  if (!fs::exists(p)) throw ConfigError("no manifest in '" + data_dir + "'; run generate first");
  const IniDocument doc = load_ini(p.string());
  const IniSection* s = doc.find("manifest");
  if (!s) throw ParseError(p.string() + ": missing [manifest] section");
  Manifest m;
  m.split_seed = s->integer("split_seed", 0);
  m.trials = s->integer("trials", 0);
  m.train_samples = s->integer("train_samples", 0);
  m.test_samples = s->integer("test_samples", 0);
  m.has_qe = s->flag("has_qe", true);
  m.oracle_checks = s->text("oracle_checks", "pending");
  m.oracle_eval = s->text("oracle_eval", "pending");
  return m;
}

void write_manifest(const std::string& data_dir, const Manifest& m) {
  IniDocument doc;
  auto& s = doc.section("manifest");
  s.values["split_seed"] = std::to_string(m.split_seed);
  s.values["trials"] = std::to_string(m.trials);
  s.values["train_samples"] = std::to_string(m.train_samples);
  s.values["test_samples"] = std::to_string(m.test_samples);
  s.values["has_qe"] = m.has_qe ? "true" : "false";
  s.values["oracle_checks"] = m.oracle_checks;
  s.values["oracle_eval"] = m.oracle_eval;
  std::ofstream os(fs::path(data_dir) / "manifest.ini", std::ios::trunc);
  if (!os) throw IoError("cannot write manifest in '" + data_dir + "'");
  os << doc.to_string();
}

void write_model_meta(const std::string& model_path, const ModelMeta& m) {
  IniDocument doc;
  auto& s = doc.section("model");
  s.values["final_loss"] = num(m.final_loss);
  s.values["converged"] = m.converged ? "true" : "false";
  s.values["epochs_run"] = std::to_string(m.epochs_run);
  s.values["seed"] = std::to_string(m.seed);
  s.values["qe_supervised"] = m.qe_supervised ? "true" : "false";
  s.values["power_mode"] = m.power_mode;
  std::ofstream os(model_path + ".meta", std::ios::trunc);
  if (!os) throw IoError("cannot write '" + model_path + ".meta'");
  os << doc.to_string();
}

std::optional<ModelMeta> read_model_meta(const std::string& model_path) {
  const std::string p = model_path + ".meta";
  if (!fs::exists(p)) return std::nullopt;
  const IniDocument doc = load_ini(p);
  const IniSection* s = doc.find("model");
  if (!s) throw ParseError(p + ": missing [model] section");
  ModelMeta m;
  m.final_loss = s->number("final_loss", 0.0);
  m.converged = s->flag("converged", false);
  m.epochs_run = s->integer("epochs_run", 0);
  m.seed = s->integer("seed", 0);
  m.qe_supervised = s->flag("qe_supervised", false);
  m.power_mode = s->text("power_mode", "");
  return m;
}

// -- commands -----------------------------------------------------------------

int cmd_generate(const Options& opt, std::ostream& log) {
  RunConfig cfg = resolve(opt);
  if (opt.seed) cfg.split_seed = *opt.seed;
  ensure_out_dir(opt.out);
  const auto& specs = cfg.trial_list();
  if (specs.empty()) throw ConfigError("no trials configured");
  const auto trials = generate_trials(cfg.system, specs);
  for (const auto& t : trials) {
    log << "trial " << std::setw(2) << t.samples.front().trial_id << "  " << std::left
        << std::setw(16) << t.spec.name << std::right << std::setw(6) << t.samples.size()
        << " samples  " << (t.spec.split == Split::train ? "train" : "test") << '\n';
  }
  const DatasetSplit split = build_dataset(trials, cfg.split_seed, cfg.train_samples);
  write_dataset(dataset_path(opt.out, "train.csv"), split.train);
  write_dataset(dataset_path(opt.out, "test.csv"), split.test);
  Manifest m;
  m.split_seed = cfg.split_seed;
  m.trials = trials.size();
  m.train_samples = split.train.size();
  m.test_samples = split.test.size();
  m.has_qe = true;
  write_manifest(opt.out, m);
  echo_config(opt.out, cfg, opt, "generate");
  log << "wrote " << split.train.size() << " training and " << split.test.size()
      << " test samples to " << opt.out << '\n';
  return kExitOk;
}

int cmd_check_oracle(const Options& opt, std::ostream& log) {
  const RunConfig cfg = resolve(opt);
  OracleCheckOptions co;
  co.seed = opt.seed.value_or(1);
  co.states = cfg.check_states;
  if (!opt.out.empty()) {
    ensure_out_dir(opt.out);
    co.scratch_dir = opt.out;
  }
  const CheckReport rep = run_oracle_checks(make_oracle_provider(cfg.system), cfg.system, co);
  for (const auto& r : rep.results) {
    log << (r.passed ? "PASS " : "FAIL ") << std::left << std::setw(28) << r.name << std::right
        << " worst " << std::setprecision(3) << r.worst << " (tolerance " << r.tolerance << ")\n";
  }
  if (!opt.out.empty()) echo_config(opt.out, cfg, opt, "check-oracle");
  if (!opt.data.empty()) {
    Manifest m = read_manifest(opt.data);
    m.oracle_checks = rep.passed() ? "pass" : "fail";
    write_manifest(opt.data, m);
  }
  log << (rep.passed() ? "oracle checks passed\n" : "oracle checks FAILED\n");
  return rep.passed() ? kExitOk : kExitFailed;
}

int cmd_train(const Options& opt, std::ostream& log) {
  RunConfig cfg = resolve(opt);
  const Manifest manifest = read_manifest(opt.data);
  if (manifest.oracle_checks != "pass" || manifest.oracle_eval != "pass") {
    throw UsageError("data in '" + opt.data + "' is not oracle-verified (checks: " +
                     manifest.oracle_checks + ", eval: " + manifest.oracle_eval +
                     "); run check-oracle --data and eval --oracle --data first");
  }
  LoadedDataset train_set = read_dataset(dataset_path(opt.data, "train.csv"));
  if (train_set.samples.empty()) throw ConfigError("training set is empty");
  const bool has_qe = train_set.has_qe && !opt.no_qe;
  cfg.loss_for(has_qe);  // reject inconsistent power settings before any work
  const std::uint64_t seed = opt.seed.value_or(cfg.train.seed);
  cfg.train.seed = seed;
  ensure_out_dir(opt.out);
  echo_config(opt.out, cfg, opt, "train");
  log << "training on " << train_set.samples.size() << " samples, seed " << seed
      << (has_qe ? ", with Q_e" : ", without Q_e") << ", power mode "
      << power_mode_name(cfg.loss_for(has_qe).power_mode) << '\n';
  const TrainOutcome o = train_into(cfg, train_set.samples, has_qe, seed, opt.out, log);
  log << (o.meta.converged ? "converged" : "stopped at epoch limit") << " after "
      << o.meta.epochs_run << " epochs, final loss " << o.meta.final_loss << '\n';
  return kExitOk;
}

int cmd_eval(const Options& opt, std::ostream& log) {
  const RunConfig cfg = resolve(opt);
  const LoadedDataset test = read_dataset(dataset_path(opt.data, "test.csv"));
  if (test.samples.empty()) throw ConfigError("test set is empty");
  if (opt.models.empty() && !opt.oracle) throw UsageError("eval needs --model or --oracle");
  ensure_out_dir(opt.out);
  const std::vector<QuantityRow> truth = truth_rows(cfg.system, test.samples);

  std::vector<EvaluatedModel> models;
  if (opt.oracle) {
    EvaluatedModel m;
    m.label = "oracle";
    m.rows = evaluate_samples(make_oracle_provider(cfg.system), test.samples);
    models.push_back(std::move(m));
  }
  for (std::size_t i = 0; i < opt.models.size(); ++i) {
    const NetworkParams p = opt.config ? load_params(opt.models[i], cfg.network)
                                       : load_params(opt.models[i]);
    if (p.config.n_free != 1 || p.config.n_external != 1) {
      throw ConfigError(opt.models[i] + ": model is not a 1+1 coordinate network");
    }
    EvaluatedModel m;
    m.label = model_label(opt.models[i], i);
    if (auto meta = read_model_meta(opt.models[i])) {
      m.converged = meta->converged;
      m.final_loss = meta->final_loss;
    } else {
      log << "note: " << opt.models[i] << " has no .meta sidecar; counted as converged\n";
    }
    m.rows = evaluate_samples(make_network_provider(p), test.samples);
    models.push_back(std::move(m));
  }
  const EvalReport rep = build_report(std::move(models), truth);
  write_report(opt.out, rep);
  write_plot_tables(fs::path(opt.out) / "plots", test.samples, truth, rep);
  echo_config(opt.out, cfg, opt, "eval");
  print_report(rep, log);
  log << rep.converged_count() << " of " << rep.models.size()
      << " models enter the statistics\n";

  if (opt.oracle) {
    bool ok = true;
    for (std::size_t q = 0; q < kQuantityCount; ++q) ok = ok && rep.models.front().rmse[q] < 1e-8;
    Manifest m = read_manifest(opt.data);
    m.oracle_eval = ok ? "pass" : "fail";
    write_manifest(opt.data, m);
    log << (ok ? "oracle evaluation matches the data\n" : "oracle evaluation does NOT match the data\n");
    if (!ok) return kExitFailed;
  }
  return kExitOk;
}

int cmd_bench(const Options& opt, std::ostream& log) {
  const RunConfig cfg = resolve(opt);
  if (opt.models.size() != 1) throw UsageError("bench needs exactly one --model");
  const LoadedDataset test = read_dataset(dataset_path(opt.data, "test.csv"));
  if (test.samples.empty()) throw ConfigError("test set is empty");
  const NetworkParams p = load_params(opt.models.front());
  const Provider provider = make_network_provider(p);

  std::vector<double> ms;
  ms.reserve(test.samples.size() * cfg.bench_repeat);
  double checksum = 0.0;
  using clock = std::chrono::steady_clock;
  for (std::size_t r = 0; r < cfg.bench_repeat; ++r) {
    for (const auto& s : test.samples) {
      const auto t0 = clock::now();
      const QuantityRow row = evaluate_sample(provider, s);
      const auto t1 = clock::now();
      ms.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
      if (r == 0)
        for (double v : row) checksum += v;
    }
  }
  std::vector<double> sorted = ms;
  std::sort(sorted.begin(), sorted.end());
  const double mean = std::accumulate(ms.begin(), ms.end(), 0.0) / static_cast<double>(ms.size());
  const double median = sorted[sorted.size() / 2];
  const double p99 = sorted[std::min(sorted.size() - 1, sorted.size() * 99 / 100)];
  log << std::setprecision(6) << "samples " << ms.size() << "\nmean_ms " << mean
      << "\nmedian_ms " << median << "\np99_ms " << p99 << "\nthroughput_hz " << 1e3 / mean
      << "\nchecksum " << std::setprecision(17) << checksum << '\n';
  if (!opt.out.empty()) {
    ensure_out_dir(opt.out);
    std::ofstream os(fs::path(opt.out) / "bench.csv", std::ios::trunc);
    if (!os) throw IoError("cannot write bench.csv");
    os << "samples,mean_ms,median_ms,p99_ms,throughput_hz,checksum\n"
       << ms.size() << ',' << num(mean) << ',' << num(median) << ',' << num(p99) << ','
       << num(1e3 / mean) << ',' << num(checksum) << '\n';
    echo_config(opt.out, cfg, opt, "bench");
  }
  return kExitOk;
}

int cmd_seed_sweep(const Options& opt, std::ostream& log) {
  RunConfig cfg = resolve(opt);
  if (opt.seeds.size() < 2) throw UsageError("seed-sweep needs at least two seeds");
  if (std::set<std::uint64_t>(opt.seeds.begin(), opt.seeds.end()).size() != opt.seeds.size()) {
    throw UsageError("duplicate seeds in --seeds");
  }
  const Manifest manifest = read_manifest(opt.data);
  if (manifest.oracle_checks != "pass" || manifest.oracle_eval != "pass") {
    throw UsageError("data in '" + opt.data + "' is not oracle-verified; run check-oracle "
                     "--data and eval --oracle --data first");
  }
  LoadedDataset train_set = read_dataset(dataset_path(opt.data, "train.csv"));
  if (train_set.samples.empty()) throw ConfigError("training set is empty");
  const bool has_qe = train_set.has_qe && !opt.no_qe;
  cfg.loss_for(has_qe);
  ensure_out_dir(opt.out);
  echo_config(opt.out, cfg, opt, "seed-sweep");

  Options eval_opt = opt;
  eval_opt.models.clear();
  eval_opt.oracle = false;
  eval_opt.out = (fs::path(opt.out) / "eval").string();
  std::size_t converged = 0;
  for (auto seed : opt.seeds) {
    const std::string dir = (fs::path(opt.out) / ("seed_" + std::to_string(seed))).string();
    ensure_out_dir(dir);
    log << "seed " << seed << '\n';
    const TrainOutcome o = train_into(cfg, train_set.samples, has_qe, seed, dir, log);
    log << "seed " << seed << ": " << (o.meta.converged ? "converged" : "not converged")
        << ", final loss " << o.meta.final_loss << '\n';
    converged += o.meta.converged ? 1 : 0;
    eval_opt.models.push_back((fs::path(dir) / "model.bin").string());
  }
  if (converged == 0) {
    log << "no seed reached the convergence threshold\n";
    return kExitNoConverged;
  }
  return cmd_eval(eval_opt, log);
}

int guarded(int (*command)(const Options&, std::ostream&), const Options& opt,
            std::ostream& log, std::ostream& err) {
  try {
    return command(opt, log);
  } catch (const NumericalError& e) {
    err << "numerical error: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return kExitConfig;
  }
}

}  // namespace servolnn::cli
