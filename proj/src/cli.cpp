// Copyright 2026 The snn-rmp Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "snn_rmp/cli.hpp"

#include <cstdio>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "snn_rmp/analysis.hpp"
#include "snn_rmp/checkpoint.hpp"
#include "snn_rmp/config.hpp"

namespace snn_rmp {

namespace {

using nlohmann::json;

std::string num(double v, int digits = 10) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", digits, v);
  return buf;
}

std::string fixed4(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

struct CommonFlags {
  std::optional<std::string> config;
  std::vector<std::string> overrides;
};

void add_common(CLI::App* cmd, CommonFlags& flags) {
  cmd->add_option("--config", flags.config, "JSON config file");
  cmd->add_option("--set", flags.overrides, "Override a config key: dotted.key=value")
      ->allow_extra_args(false);
}

// Checkpoint config echo, then the config file, then --set overrides. A bad
// echo is a checkpoint problem; a bad file or override is a usage problem.
TrainConfig config_for_checkpoint(const Checkpoint& ckpt, const CommonFlags& flags) {
  try {
    config_from_json(ckpt.config);
  } catch (const ConfigError& e) {
    throw CheckpointError(std::string("checkpoint: config echo rejected: ") + e.what());
  }
  json base = config_to_json(config_from_json(ckpt.config));
  if (flags.config) merge_config(base, read_config_file(*flags.config));
  return resolve_config(base, flags.overrides);
}

void check_compatible(const ArchSpec& arch, const Dataset& ds) {
  if (ds.sample_shape() != arch.sample_shape || ds.class_count != arch.classes) {
    throw CheckpointError("checkpoint: architecture " + arch.name + " expects samples " +
                          shape_to_string(arch.sample_shape) + " with " +
                          std::to_string(arch.classes) + " classes, dataset provides " +
                          shape_to_string(ds.sample_shape()) + " with " +
                          std::to_string(ds.class_count) + " classes");
  }
}

AnalysisOptions analysis_options(const TrainConfig& cfg) {
  AnalysisOptions o;
  o.kl = cfg.kl();
  o.hist_bins = cfg.analysis.hist_bins;
  o.hist_lo = cfg.analysis.hist_lo;
  o.hist_hi = cfg.analysis.hist_hi;
  o.p = cfg.p;
  return o;
}

void fill_report(Report& r, const MembraneAnalysis& a) {
  r.final_metrics = {a.accuracy, a.mean_quant_error, a.kl_estimate};
  json layers = json::array();
  for (const auto& la : a.layers) {
    r.histograms.push_back({la.layer, la.hist});
    layers.push_back({{"layer", la.layer},
                      {"mean_quant_error", la.mean_quant_error},
                      {"firing_rate", la.firing_rate},
                      {"kl_estimate", std::isfinite(la.kl_estimate) ? json(la.kl_estimate)
                                                                    : json(nullptr)}});
  }
  r.extra["firing_rate"] = a.firing_rate;
  r.extra["layers"] = std::move(layers);
}

// --- train -----------------------------------------------------------------

struct TrainFlags {
  CommonFlags common;
  std::optional<std::string> resume;
  int stop_after = -1;
};

int cmd_train(const TrainFlags& flags, std::ostream& out, std::ostream& err) {
  std::optional<Checkpoint> ckpt;
  if (flags.resume) ckpt = load_checkpoint(*flags.resume);
  const TrainConfig cfg = ckpt ? config_for_checkpoint(*ckpt, flags.common)
                               : resolve_config(flags.common.config, flags.common.overrides);
  const json echo = config_to_json(cfg);

  const DataSplits data = load_splits(cfg);
  const ArchSpec arch = arch_spec(cfg, data.train.sample_shape(), data.train.class_count);

  SeededRng rng(cfg.seed);
  std::optional<Network> net;
  OptimState opt;
  if (ckpt) {
    if (ckpt->total_epochs != cfg.epochs) {
      throw ConfigError("config: epochs must stay " + std::to_string(ckpt->total_epochs) +
                        " when resuming");
    }
    check_compatible(ckpt->arch, data.train);
    net.emplace(restore_network(*ckpt));
    opt = restore_optimizer(*ckpt, *net);
    rng.set_state(ckpt->rng_state);
    err << "resuming at epoch " << opt.epoch << " of " << opt.total_epochs << "\n";
  } else {
    net.emplace(build_network(arch, rng));
    opt = OptimState::for_network(*net, cfg.base_lr, cfg.momentum, cfg.epochs);
  }

  TrainOptions options = cfg.train_options();
  options.max_epochs = flags.stop_after;
  const auto history =
      train(*net, opt, rng, data.train, data.test, options, [&](const EpochMetrics& m) {
        out << "epoch=" << m.epoch << " lambda=" << num(m.lambda)
            << " lr=" << num(m.learning_rate) << " loss=" << num(m.train_loss)
            << " ce=" << num(m.train_ce) << " rmp=" << num(m.train_rmp)
            << " qerr=" << num(m.mean_quant_error) << " acc=" << fixed4(m.test_accuracy)
            << "\n";
        out.flush();
      });

  const MembraneAnalysis analysis = analyze_membranes(*net, data.test, analysis_options(cfg));
  Report report;
  report.config = echo;
  report.epochs = history;
  fill_report(report, analysis);
  report.extra["next_epoch"] = opt.epoch;

  save_checkpoint(capture_checkpoint(ckpt ? ckpt->arch : arch, echo, *net, opt, rng,
                                     data.standardizer),
                  cfg.output.checkpoint);
  export_report(report, cfg.output.report);
  out << "final accuracy=" << fixed4(analysis.accuracy)
      << " mean_quant_error=" << num(analysis.mean_quant_error)
      << " kl=" << num(analysis.kl_estimate) << "\n";
  err << "wrote " << cfg.output.checkpoint << " and " << cfg.output.report << "\n";
  return kExitOk;
}

// --- eval / analyze --------------------------------------------------------

struct EvalFlags {
  CommonFlags common;
  std::string checkpoint;
  std::string split = "test";
};

struct LoadedModel {
  Checkpoint ckpt;
  TrainConfig cfg;
  Network net;
  Dataset data;
};

LoadedModel load_model(const std::string& path, const CommonFlags& common,
                       const std::string& split) {
  Checkpoint ckpt = load_checkpoint(path);
  TrainConfig cfg = config_for_checkpoint(ckpt, common);
  Network net = restore_network(ckpt);
  Dataset data = load_split(cfg, split == "test", restore_standardizer(ckpt));
  check_compatible(ckpt.arch, data);
  return {std::move(ckpt), std::move(cfg), std::move(net), std::move(data)};
}

int cmd_eval(const EvalFlags& flags, std::ostream& out) {
  const LoadedModel m = load_model(flags.checkpoint, flags.common, flags.split);
  out << "accuracy=" << fixed4(evaluate(m.net, m.data)) << "\n";
  return kExitOk;
}

struct AnalyzeFlags {
  EvalFlags eval;
  std::vector<int> layers;
  std::optional<int> bins;
  std::optional<double> epsilon;
  std::optional<int> kl_bins;
  std::optional<double> lo;
  std::optional<double> hi;
  std::optional<std::string> out;
};

int cmd_analyze(const AnalyzeFlags& flags, std::ostream& out) {
  // Analysis flags are config overrides so the echo records them.
  CommonFlags common = flags.eval.common;
  auto set = [&](const std::string& key, const std::string& value) {
    common.overrides.push_back(key + "=" + value);
  };
  if (flags.bins) set("analysis.hist_bins", std::to_string(*flags.bins));
  if (flags.epsilon) set("analysis.epsilon", num(*flags.epsilon, 17));
  if (flags.kl_bins) set("analysis.bins", std::to_string(*flags.kl_bins));
  if (flags.lo) set("analysis.hist_lo", num(*flags.lo, 17));
  if (flags.hi) set("analysis.hist_hi", num(*flags.hi, 17));

  const LoadedModel m = load_model(flags.eval.checkpoint, common, flags.eval.split);
  AnalysisOptions options = analysis_options(m.cfg);
  options.layers = flags.layers;
  const MembraneAnalysis a = analyze_membranes(m.net, m.data, options);

  Report report;
  report.config = config_to_json(m.cfg);
  fill_report(report, a);
  report.extra["split"] = flags.eval.split;
  report.extra["samples"] = m.data.samples();

  for (const auto& la : a.layers) {
    out << "layer=" << la.layer << " mean_quant_error=" << num(la.mean_quant_error)
        << " firing_rate=" << num(la.firing_rate) << " kl=" << num(la.kl_estimate) << "\n";
  }
  out << "all accuracy=" << fixed4(a.accuracy) << " mean_quant_error=" << num(a.mean_quant_error)
      << " firing_rate=" << num(a.firing_rate) << " kl=" << num(a.kl_estimate) << "\n";
  if (flags.out) export_report(report, *flags.out);
  return kExitOk;
}

// --- gen-data --------------------------------------------------------------

struct GenFlags {
  std::uint64_t seed = 1;
  int classes = 4;
  Index per_class = 500;
  Index dim = 16;
  double spread = 0.25;
  std::string out;
};

int cmd_gen_data(const GenFlags& flags, std::ostream& err) {
  const Dataset ds = synth_blobs(flags.seed, flags.per_class, flags.classes, flags.dim,
                                 flags.spread);
  write_csv(ds, flags.out);
  err << "wrote " << ds.samples() << " samples to " << flags.out << "\n";
  return kExitOk;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Spiking network training with membrane potential regularization", "snn-rmp"};
  app.require_subcommand(1);

  TrainFlags train_flags;
  auto* train_cmd = app.add_subcommand("train", "Train a network and write checkpoint + report");
  add_common(train_cmd, train_flags.common);
  train_cmd->add_option("--resume", train_flags.resume, "Continue from a checkpoint");
  train_cmd->add_option("--stop-after", train_flags.stop_after,
                        "Run at most this many epochs in this invocation")
      ->check(CLI::NonNegativeNumber);

  EvalFlags eval_flags;
  auto* eval_cmd = app.add_subcommand("eval", "Print the accuracy of a checkpoint");
  add_common(eval_cmd, eval_flags.common);
  eval_cmd->add_option("checkpoint", eval_flags.checkpoint, "Checkpoint file")->required();
  eval_cmd->add_option("--split", eval_flags.split, "Dataset split")
      ->check(CLI::IsMember({"train", "test"}));

  AnalyzeFlags an;
  auto* analyze_cmd = app.add_subcommand("analyze", "Membrane potential statistics of a checkpoint");
  add_common(analyze_cmd, an.eval.common);
  analyze_cmd->add_option("checkpoint", an.eval.checkpoint, "Checkpoint file")->required();
  analyze_cmd->add_option("--split", an.eval.split, "Dataset split")
      ->check(CLI::IsMember({"train", "test"}));
  analyze_cmd->add_option("--layer", an.layers, "Network layer index of a spiking layer");
  analyze_cmd->add_option("--bins", an.bins, "Membrane histogram bins");
  analyze_cmd->add_option("--lo", an.lo, "Histogram lower edge");
  analyze_cmd->add_option("--hi", an.hi, "Histogram upper edge");
  analyze_cmd->add_option("--epsilon", an.epsilon, "KL window half-width, in (0, 0.5)");
  analyze_cmd->add_option("--kl-bins", an.kl_bins, "KL bins per window");
  analyze_cmd->add_option("--out", an.out, "Write the JSON report here");

  GenFlags gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "Write a synthetic Gaussian blob CSV");
  gen_cmd->add_option("--seed", gen.seed, "Generator seed");
  gen_cmd->add_option("--classes", gen.classes, "Number of classes");
  gen_cmd->add_option("--per-class", gen.per_class, "Samples per class");
  gen_cmd->add_option("--dim", gen.dim, "Feature dimension");
  gen_cmd->add_option("--spread", gen.spread, "Standard deviation around each centre");
  gen_cmd->add_option("--out", gen.out, "Output CSV path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*train_cmd) return cmd_train(train_flags, out, err);
    if (*eval_cmd) return cmd_eval(eval_flags, out);
    if (*analyze_cmd) return cmd_analyze(an, out);
    if (*gen_cmd) return cmd_gen_data(gen, err);
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const ParameterError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const CheckpointError& e) {
    err << "error: " << e.what() << "\n";
    return kExitCheckpoint;
  } catch (const NumericError& e) {
    err << "error: numeric divergence: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const Error& e) {
    // Data, format, I/O and shape failures.
    err << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << "\n";
    return kExitInternal;
  }
  return kExitUsage;
}

}  // namespace snn_rmp
