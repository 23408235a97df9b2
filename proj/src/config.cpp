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

#include "snn_rmp/config.hpp"

#include <sstream>

#include "snn_rmp/io.hpp"

namespace snn_rmp {

using nlohmann::json;

namespace {

template <typename T>
void require(bool ok, const std::string& field, const std::string& rule, const T& got) {
  if (ok) return;
  std::ostringstream os;
  os << "config: " << field << " " << rule << " (got " << got << ")";
  throw ConfigError(os.str());
}

void require_path(const std::string& value, const std::string& field,
                  const std::string& kind) {
  if (value.empty()) {
    throw ConfigError("config: " + field + " is required for dataset.kind=" + kind);
  }
}

std::string type_name(const json& j) {
  if (j.is_number_integer()) return "integer";
  if (j.is_number()) return "number";
  return j.type_name();
}

void merge_at(json& base, const json& overlay, const std::string& prefix) {
  if (!overlay.is_object()) {
    throw ConfigError("config: " + (prefix.empty() ? std::string("document") : prefix) +
                      " must be an object");
  }
  for (const auto& [key, value] : overlay.items()) {
    const std::string path = prefix.empty() ? key : prefix + "." + key;
    if (!base.contains(key)) throw ConfigError("config: unknown key '" + path + "'");
    json& slot = base[key];
    if (slot.is_object()) {
      merge_at(slot, value, path);
      continue;
    }
    bool ok = false;
    if (slot.is_number_integer()) {
      ok = value.is_number_integer();
      if (ok && slot.is_number_unsigned() && value.get<std::int64_t>() < 0 &&
          !value.is_number_unsigned()) {
        throw ConfigError("config: " + path + " must be a non-negative integer");
      }
    } else if (slot.is_number()) {
      ok = value.is_number();
    } else {
      ok = slot.type() == value.type();
    }
    if (!ok) {
      throw ConfigError("config: " + path + " must be " + type_name(slot) +
                        ", got " + type_name(value));
    }
    slot = value;
  }
}

}  // namespace

void TrainConfig::validate() const {
  require(arch == "mlp-s" || arch == "cnn-s", "arch", "must be mlp-s or cnn-s", arch);
  require(timesteps >= 1, "timesteps", "must be >= 1", timesteps);
  require(epochs >= 1, "epochs", "must be >= 1", epochs);
  require(batch_size >= 1, "batch_size", "must be >= 1", batch_size);
  require(base_lr > 0.0, "base_lr", "must be > 0", base_lr);
  require(momentum >= 0.0 && momentum < 1.0, "momentum", "must lie in [0, 1)", momentum);
  require(tau > 0.0 && tau < 1.0, "tau", "must lie in (0, 1)", tau);
  require(v_th > 0.0, "v_th", "must be > 0", v_th);
  require(alpha > 0.0, "alpha", "must be > 0", alpha);
  require(p > 0.0, "p", "must be > 0", p);
  require(k >= 0.0, "k", "must be >= 0", k);
  require(hidden >= 1, "hidden", "must be >= 1", hidden);
  require(bn_eps > 0.0, "bn_eps", "must be > 0", bn_eps);
  require(bn_momentum > 0.0 && bn_momentum < 1.0, "bn_momentum", "must lie in (0, 1)",
          bn_momentum);

  const DatasetConfig& d = dataset;
  require(d.kind == "synth" || d.kind == "csv" || d.kind == "idx", "dataset.kind",
          "must be synth, csv or idx", d.kind);
  require(d.classes >= 2, "dataset.classes", "must be >= 2", d.classes);
  if (d.kind == "synth") {
    require(d.per_class >= 1, "dataset.per_class", "must be >= 1", d.per_class);
    require(d.test_per_class >= 1, "dataset.test_per_class", "must be >= 1",
            d.test_per_class);
    require(d.dim >= 2, "dataset.dim", "must be >= 2", d.dim);
    require(d.spread >= 0.0, "dataset.spread", "must be >= 0", d.spread);
  } else if (d.kind == "csv") {
    require_path(d.train_path, "dataset.train_path", d.kind);
    require_path(d.test_path, "dataset.test_path", d.kind);
  } else {
    require_path(d.train_images, "dataset.train_images", d.kind);
    require_path(d.train_labels, "dataset.train_labels", d.kind);
    require_path(d.test_images, "dataset.test_images", d.kind);
    require_path(d.test_labels, "dataset.test_labels", d.kind);
  }

  require(!output.checkpoint.empty(), "output.checkpoint", "must be non-empty", "\"\"");
  require(!output.report.empty(), "output.report", "must be non-empty", "\"\"");

  const AnalysisConfig& a = analysis;
  require(a.epsilon > 0.0 && a.epsilon < 0.5, "analysis.epsilon", "must lie in (0, 0.5)",
          a.epsilon);
  require(a.bins >= 10, "analysis.bins", "must be >= 10", a.bins);
  require(a.hist_bins >= 1, "analysis.hist_bins", "must be >= 1", a.hist_bins);
  require(a.hist_hi > a.hist_lo, "analysis.hist_hi", "must exceed analysis.hist_lo",
          a.hist_hi);
}

LossConfig TrainConfig::loss() const { return {p, k, epochs}; }

NeuronParams TrainConfig::neuron() const { return {tau, v_th}; }

KlConfig TrainConfig::kl() const { return {analysis.epsilon, analysis.bins}; }

TrainOptions TrainConfig::train_options() const {
  TrainOptions o;
  o.batch_size = batch_size;
  o.v_th = v_th;
  o.loss = loss();
  o.rmp_enabled = rmp_enabled;
  return o;
}

json config_to_json(const TrainConfig& c) {
  const DatasetConfig& d = c.dataset;
  return {
      {"arch", c.arch},
      {"timesteps", c.timesteps},
      {"epochs", c.epochs},
      {"batch_size", c.batch_size},
      {"base_lr", c.base_lr},
      {"momentum", c.momentum},
      {"tau", c.tau},
      {"v_th", c.v_th},
      {"alpha", c.alpha},
      {"p", c.p},
      {"k", c.k},
      {"seed", c.seed},
      {"hidden", c.hidden},
      {"bn_eps", c.bn_eps},
      {"bn_momentum", c.bn_momentum},
      {"rmp_enabled", c.rmp_enabled},
      {"dataset",
       {{"kind", d.kind},
        {"classes", d.classes},
        {"per_class", d.per_class},
        {"test_per_class", d.test_per_class},
        {"dim", d.dim},
        {"spread", d.spread},
        {"seed", d.seed},
        {"train_path", d.train_path},
        {"test_path", d.test_path},
        {"train_images", d.train_images},
        {"train_labels", d.train_labels},
        {"test_images", d.test_images},
        {"test_labels", d.test_labels},
        {"standardize", d.standardize}}},
      {"output", {{"checkpoint", c.output.checkpoint}, {"report", c.output.report}}},
      {"analysis",
       {{"epsilon", c.analysis.epsilon},
        {"bins", c.analysis.bins},
        {"hist_bins", c.analysis.hist_bins},
        {"hist_lo", c.analysis.hist_lo},
        {"hist_hi", c.analysis.hist_hi}}},
  };
}

TrainConfig config_from_json(const json& j) {
  json full = config_to_json(TrainConfig{});
  merge_config(full, j);
  TrainConfig c;
  try {
    full.at("arch").get_to(c.arch);
    full.at("timesteps").get_to(c.timesteps);
    full.at("epochs").get_to(c.epochs);
    full.at("batch_size").get_to(c.batch_size);
    full.at("base_lr").get_to(c.base_lr);
    full.at("momentum").get_to(c.momentum);
    full.at("tau").get_to(c.tau);
    full.at("v_th").get_to(c.v_th);
    full.at("alpha").get_to(c.alpha);
    full.at("p").get_to(c.p);
    full.at("k").get_to(c.k);
    full.at("seed").get_to(c.seed);
    full.at("hidden").get_to(c.hidden);
    full.at("bn_eps").get_to(c.bn_eps);
    full.at("bn_momentum").get_to(c.bn_momentum);
    full.at("rmp_enabled").get_to(c.rmp_enabled);
    const json& d = full.at("dataset");
    d.at("kind").get_to(c.dataset.kind);
    d.at("classes").get_to(c.dataset.classes);
    d.at("per_class").get_to(c.dataset.per_class);
    d.at("test_per_class").get_to(c.dataset.test_per_class);
    d.at("dim").get_to(c.dataset.dim);
    d.at("spread").get_to(c.dataset.spread);
    d.at("seed").get_to(c.dataset.seed);
    d.at("train_path").get_to(c.dataset.train_path);
    d.at("test_path").get_to(c.dataset.test_path);
    d.at("train_images").get_to(c.dataset.train_images);
    d.at("train_labels").get_to(c.dataset.train_labels);
    d.at("test_images").get_to(c.dataset.test_images);
    d.at("test_labels").get_to(c.dataset.test_labels);
    d.at("standardize").get_to(c.dataset.standardize);
    const json& o = full.at("output");
    o.at("checkpoint").get_to(c.output.checkpoint);
    o.at("report").get_to(c.output.report);
    const json& a = full.at("analysis");
    a.at("epsilon").get_to(c.analysis.epsilon);
    a.at("bins").get_to(c.analysis.bins);
    a.at("hist_bins").get_to(c.analysis.hist_bins);
    a.at("hist_lo").get_to(c.analysis.hist_lo);
    a.at("hist_hi").get_to(c.analysis.hist_hi);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  c.validate();
  return c;
}

void merge_config(json& base, const json& overlay) { merge_at(base, overlay, ""); }

void apply_override(json& config, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ConfigError("config: override '" + assignment + "' is not key=value");
  }
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  json value = json::parse(text, nullptr, /*allow_exceptions=*/false);
  if (value.is_discarded()) value = text;

  // Build {"a": {"b": value}} from "a.b" and merge it strictly.
  json overlay = value;
  std::string rest = key;
  std::vector<std::string> parts;
  for (size_t pos; (pos = rest.find('.')) != std::string::npos;) {
    parts.push_back(rest.substr(0, pos));
    rest = rest.substr(pos + 1);
  }
  parts.push_back(rest);
  for (auto it = parts.rbegin(); it != parts.rend(); ++it) {
    if (it->empty()) throw ConfigError("config: malformed key '" + key + "'");
    overlay = json{{*it, std::move(overlay)}};
  }
  merge_config(config, overlay);
}

TrainConfig resolve_config(const json& base, const std::vector<std::string>& overrides) {
  json full = config_to_json(TrainConfig{});
  merge_config(full, base);
  for (const auto& o : overrides) apply_override(full, o);
  return config_from_json(full);
}

json read_config_file(const std::string& path) {
  std::string text;
  try {
    text = read_file_text(path);
  } catch (const IoError& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  json file = json::parse(text, nullptr, /*allow_exceptions=*/false);
  if (file.is_discarded()) throw ConfigError("config: " + path + " is not valid JSON");
  return file;
}

TrainConfig resolve_config(const std::optional<std::string>& path,
                           const std::vector<std::string>& overrides) {
  return resolve_config(path ? read_config_file(*path) : json::object(), overrides);
}

std::uint64_t test_split_seed(std::uint64_t seed) {
  return seed ^ 0x9E3779B97F4A7C15ULL;
}

Dataset adapt_to_arch(Dataset ds, const std::string& arch) {
  if (arch == "cnn-s" && ds.inputs.rank() == 3) {
    const Shape& s = ds.inputs.shape();
    ds.inputs = std::move(ds.inputs).reshaped({s[0], 1, s[1], s[2]});
  }
  return ds;
}

DataSplits load_splits(const TrainConfig& cfg) {
  const DatasetConfig& d = cfg.dataset;
  DataSplits out;
  if (d.kind == "synth") {
    out.train = synth_blobs(d.seed, d.per_class, d.classes, d.dim, d.spread);
    out.test = synth_blobs(test_split_seed(d.seed), d.test_per_class, d.classes, d.dim,
                           d.spread);
  } else if (d.kind == "csv") {
    out.train = load_csv(d.train_path, d.classes);
    out.test = load_csv(d.test_path, d.classes);
  } else {
    out.train = load_idx(d.train_images, d.train_labels, d.classes);
    out.test = load_idx(d.test_images, d.test_labels, d.classes);
  }
  if (out.train.sample_shape() != out.test.sample_shape()) {
    throw DataError("train samples are " + shape_to_string(out.train.sample_shape()) +
                    " but test samples are " + shape_to_string(out.test.sample_shape()));
  }
  if (d.standardize) {
    out.standardizer = fit_standardizer(out.train);
    out.train = out.standardizer->apply(out.train);
    out.test = out.standardizer->apply(out.test);
  }
  out.train = adapt_to_arch(std::move(out.train), cfg.arch);
  out.test = adapt_to_arch(std::move(out.test), cfg.arch);
  return out;
}

Dataset load_split(const TrainConfig& cfg, bool test,
                   const std::optional<Standardizer>& standardizer) {
  const DatasetConfig& d = cfg.dataset;
  Dataset ds;
  if (d.kind == "synth") {
    ds = test ? synth_blobs(test_split_seed(d.seed), d.test_per_class, d.classes, d.dim, d.spread)
              : synth_blobs(d.seed, d.per_class, d.classes, d.dim, d.spread);
  } else if (d.kind == "csv") {
    ds = load_csv(test ? d.test_path : d.train_path, d.classes);
  } else {
    ds = test ? load_idx(d.test_images, d.test_labels, d.classes)
              : load_idx(d.train_images, d.train_labels, d.classes);
  }
  if (standardizer) {
    if (ds.features() != standardizer->mean.size()) {
      throw DataError("dataset has " + std::to_string(ds.features()) +
                      " features, standardizer expects " +
                      std::to_string(standardizer->mean.size()));
    }
    ds = standardizer->apply(ds);
  }
  return adapt_to_arch(std::move(ds), cfg.arch);
}

ArchSpec arch_spec(const TrainConfig& cfg, const Shape& sample_shape, Index classes) {
  ArchSpec s;
  s.name = cfg.arch;
  s.sample_shape = sample_shape;
  s.classes = classes;
  s.timesteps = cfg.timesteps;
  s.neuron = cfg.neuron();
  s.alpha = cfg.alpha;
  s.bn_eps = cfg.bn_eps;
  s.bn_momentum = cfg.bn_momentum;
  s.hidden = cfg.hidden;
  return s;
}

}  // namespace snn_rmp
