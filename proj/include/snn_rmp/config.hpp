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

#ifndef SNN_RMP_CONFIG_HPP_
#define SNN_RMP_CONFIG_HPP_

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "snn_rmp/analysis.hpp"
#include "snn_rmp/data.hpp"
#include "snn_rmp/network.hpp"

namespace snn_rmp {

struct DatasetConfig {
  std::string kind = "synth";  // "synth", "csv" or "idx"
  int classes = 4;
  // synth
  Index per_class = 500;
  Index test_per_class = 125;
  Index dim = 16;
  double spread = 0.25;
  std::uint64_t seed = 1;
  // csv
  std::string train_path;
  std::string test_path;
  // idx
  std::string train_images;
  std::string train_labels;
  std::string test_images;
  std::string test_labels;
  // Fit per-feature standardization on the training split.
  bool standardize = false;
};

struct OutputConfig {
  std::string checkpoint = "snn-rmp.ckpt";
  std::string report = "snn-rmp-report.json";
};

struct AnalysisConfig {
  double epsilon = 0.05;  // KL window half-width
  int bins = 200;         // KL bins per window
  int hist_bins = 120;    // membrane histogram
  double hist_lo = -1.0;
  double hist_hi = 2.0;
};

struct TrainConfig {
  std::string arch = "mlp-s";
  int timesteps = 4;
  int epochs = 60;
  Index batch_size = 64;
  double base_lr = 0.01;
  double momentum = 0.9;
  double tau = 0.25;
  double v_th = 0.5;
  double alpha = 1.0;
  double p = 2.0;
  double k = 0.1;
  std::uint64_t seed = 1;
  Index hidden = 128;
  double bn_eps = 1e-5;
  double bn_momentum = 0.9;
  // false trains without any regularizer code path (no membrane recording).
  bool rmp_enabled = true;
  DatasetConfig dataset;
  OutputConfig output;
  AnalysisConfig analysis;

  // Field-level range checks; throws ConfigError naming the field.
  void validate() const;

  LossConfig loss() const;
  NeuronParams neuron() const;
  KlConfig kl() const;
  TrainOptions train_options() const;
};

nlohmann::json config_to_json(const TrainConfig& cfg);
// Strict: every key must be known and of the right type.
TrainConfig config_from_json(const nlohmann::json& j);

// Overlays `overlay` onto `base` key by key. Unknown keys and type changes
// throw ConfigError with the dotted key path.
void merge_config(nlohmann::json& base, const nlohmann::json& overlay);

// Applies one "dotted.key=value" override. The value is read as JSON when
// it parses, otherwise as a bare string.
void apply_override(nlohmann::json& config, const std::string& assignment);

// Parsed JSON object of a config file; unreadable or malformed files throw
// ConfigError.
nlohmann::json read_config_file(const std::string& path);

// Defaults, then the file (if any), then the overrides in order.
TrainConfig resolve_config(const std::optional<std::string>& path,
                           const std::vector<std::string>& overrides);
TrainConfig resolve_config(const nlohmann::json& base,
                           const std::vector<std::string>& overrides);

// Training and test splits described by cfg.dataset, standardized on the
// training split when requested. Sample shapes are adapted to the
// architecture (IDX images gain a channel axis for cnn-s).
struct DataSplits {
  Dataset train;
  Dataset test;
  std::optional<Standardizer> standardizer;
};
DataSplits load_splits(const TrainConfig& cfg);

// One split on its own, with a previously fitted standardizer applied.
Dataset load_split(const TrainConfig& cfg, bool test,
                   const std::optional<Standardizer>& standardizer);

// Seed of the synthetic held-out split, derived from the dataset seed.
std::uint64_t test_split_seed(std::uint64_t seed);

// Gives IDX-shaped [n, rows, cols] inputs a channel axis when `arch` wants
// images; other data passes through.
Dataset adapt_to_arch(Dataset ds, const std::string& arch);

ArchSpec arch_spec(const TrainConfig& cfg, const Shape& sample_shape,
                   Index classes);

}  // namespace snn_rmp

#endif  // SNN_RMP_CONFIG_HPP_
