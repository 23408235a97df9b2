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

#ifndef SNN_RMP_ANALYSIS_HPP_
#define SNN_RMP_ANALYSIS_HPP_

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "snn_rmp/loss.hpp"
#include "snn_rmp/network.hpp"

namespace snn_rmp {

// Uniform bins over [lo, hi); values outside land in underflow/overflow.
struct Histogram {
  double lo = 0.0;
  double hi = 1.0;
  std::vector<std::int64_t> counts;
  std::int64_t underflow = 0;
  std::int64_t overflow = 0;
  std::int64_t total = 0;

  Histogram() = default;
  Histogram(double lo, double hi, int bins);

  int bins() const { return static_cast<int>(counts.size()); }
  double bin_width() const { return (hi - lo) / bins(); }
  double bin_center(int i) const { return lo + (i + 0.5) * bin_width(); }
  // Empirical density of bin i relative to every value seen, in or out of
  // range.
  double density(int i) const;

  void add(double v);
  // Adds every element of the records of `layer`, or of all records when
  // layer < 0.
  void add(const MembraneTape& tape, int layer = -1);
  void merge(const Histogram& other);
};

Histogram membrane_histogram(const MembraneTape& tape, int bins, double lo,
                             double hi, int layer = -1);

// Same quantity as rmp_loss, surfaced as a metric and computed separately.
double mean_quant_error(const MembraneTape& tape, double v_th, double p);

struct KlConfig {
  double epsilon = 0.05;  // half-width of the window around each spike value
  int bins = 200;         // histogram bins per window

  void validate() const;
};

// Histogram estimate of the information lost by mapping membrane potentials
// onto spikes, integrated over (o - eps, o + eps) for o in {0, 1}:
//   sum over bins of w * p * ln(p / q)
// with p the empirical density of u and q the spike-output density, modeled
// as mass (1 - r) spread evenly over the window at 0 and mass r over the
// window at 1 (r = firing rate). Empty bins contribute nothing; a window with
// q = 0 but p > 0 yields +infinity.
class InformationLossEstimator {
 public:
  explicit InformationLossEstimator(const KlConfig& cfg);

  void add(double u, double v_th);
  void add(const MembraneTape& tape, double v_th, int layer = -1);
  void merge(const InformationLossEstimator& other);

  std::int64_t total() const { return total_; }
  // Fraction of values at or above threshold.
  double firing_rate() const;
  double estimate(double firing_rate) const;

  const Histogram& window(int spike) const { return windows_.at(static_cast<size_t>(spike)); }

 private:
  KlConfig cfg_;
  std::vector<Histogram> windows_;  // around 0 and around 1
  std::int64_t total_ = 0;
  std::int64_t fired_ = 0;
};

double kl_information_loss(const MembraneTape& tape, const KlConfig& cfg,
                           double firing_rate);

// Recorded inference over a dataset, reduced per spiking layer. Batches may
// run concurrently; reductions happen in batch order.
struct LayerAnalysis {
  int layer = 0;
  Histogram hist;
  double mean_quant_error = 0.0;
  double firing_rate = 0.0;
  double kl_estimate = 0.0;
};

struct MembraneAnalysis {
  double accuracy = 0.0;
  std::vector<LayerAnalysis> layers;
  // Pooled over the selected layers.
  double mean_quant_error = 0.0;
  double firing_rate = 0.0;
  double kl_estimate = 0.0;
};

struct AnalysisOptions {
  std::vector<int> layers;  // network layer indices; empty means all spiking
  KlConfig kl;
  int hist_bins = 120;
  double hist_lo = -1.0;
  double hist_hi = 2.0;
  double p = 2.0;
};

// Throws ParameterError when a requested layer is not a spiking layer.
MembraneAnalysis analyze_membranes(const Network& net, const Dataset& ds,
                                   const AnalysisOptions& options);

struct HistogramEntry {
  int layer = -1;
  Histogram hist;
};

struct FinalMetrics {
  double accuracy = 0.0;
  double mean_quant_error = 0.0;
  double kl_estimate = 0.0;
};

inline constexpr const char* kReportSchemaVersion = "1";

struct Report {
  nlohmann::json config;
  std::vector<EpochMetrics> epochs;
  FinalMetrics final_metrics;
  std::vector<HistogramEntry> histograms;
  nlohmann::json extra = nlohmann::json::object();  // free-form annotations
};

nlohmann::json report_to_json(const Report& report);
Report report_from_json(const nlohmann::json& j);
// Atomic write; JSON doubles are emitted with round-trip precision.
void export_report(const Report& report, const std::filesystem::path& path);
Report load_report(const std::filesystem::path& path);

}  // namespace snn_rmp

#endif  // SNN_RMP_ANALYSIS_HPP_
