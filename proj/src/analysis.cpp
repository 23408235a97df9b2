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

#include "snn_rmp/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "snn_rmp/io.hpp"

namespace snn_rmp {

using nlohmann::json;

Histogram::Histogram(double lo, double hi, int bins) : lo(lo), hi(hi) {
  if (bins < 1) throw ParameterError("histogram: bins must be >= 1");
  if (!(hi > lo)) throw ParameterError("histogram: need hi > lo");
  counts.assign(static_cast<size_t>(bins), 0);
}

double Histogram::density(int i) const {
  if (total == 0) return 0.0;
  return static_cast<double>(counts.at(static_cast<size_t>(i))) /
         (static_cast<double>(total) * bin_width());
}

void Histogram::add(double v) {
  ++total;
  if (v < lo) {
    ++underflow;
  } else if (v >= hi) {
    ++overflow;
  } else {
    auto b = static_cast<int>((v - lo) / bin_width());
    // Rounding can push values just below hi into the last+1 bin.
    if (b >= bins()) b = bins() - 1;
    ++counts[static_cast<size_t>(b)];
  }
}

void Histogram::add(const MembraneTape& tape, int layer) {
  for (const auto& r : tape.records) {
    if (layer >= 0 && r.layer != layer) continue;
    for (Index i = 0; i < r.u_pre.size(); ++i) add(r.u_pre[i]);
  }
}

void Histogram::merge(const Histogram& other) {
  if (other.lo != lo || other.hi != hi || other.bins() != bins()) {
    throw ParameterError("histogram: cannot merge different binnings");
  }
  for (size_t i = 0; i < counts.size(); ++i) counts[i] += other.counts[i];
  underflow += other.underflow;
  overflow += other.overflow;
  total += other.total;
}

Histogram membrane_histogram(const MembraneTape& tape, int bins, double lo,
                             double hi, int layer) {
  Histogram h(lo, hi, bins);
  h.add(tape, layer);
  return h;
}

double mean_quant_error(const MembraneTape& tape, double v_th, double p) {
  if (tape.empty()) throw UsageError("mean_quant_error: empty membrane tape");
  // Vectorized per record; rmp_loss walks elements one at a time.
  double sum = 0.0;
  Index n = 0;
  for (const auto& r : tape.records) {
    const auto& u = r.u_pre.array();
    sum += (u >= v_th).select(1.0 - u, u).abs().pow(p).sum();
    n += u.size();
  }
  return sum / static_cast<double>(n);
}

// --- information loss ------------------------------------------------------

void KlConfig::validate() const {
  if (!(epsilon > 0.0 && epsilon < 0.5)) {
    throw ParameterError("kl epsilon must lie in (0, 0.5)");
  }
  if (bins < 10) throw ParameterError("kl bins must be >= 10");
}

InformationLossEstimator::InformationLossEstimator(const KlConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  for (double spike : {0.0, 1.0}) {
    windows_.emplace_back(spike - cfg_.epsilon, spike + cfg_.epsilon, cfg_.bins);
  }
}

void InformationLossEstimator::add(double u, double v_th) {
  ++total_;
  if (u >= v_th) ++fired_;
  for (auto& w : windows_) {
    if (u >= w.lo && u < w.hi) w.add(u);
  }
}

void InformationLossEstimator::merge(const InformationLossEstimator& other) {
  if (other.cfg_.epsilon != cfg_.epsilon || other.cfg_.bins != cfg_.bins) {
    throw ParameterError("information loss: cannot merge different configurations");
  }
  for (size_t i = 0; i < windows_.size(); ++i) windows_[i].merge(other.windows_[i]);
  total_ += other.total_;
  fired_ += other.fired_;
}

void InformationLossEstimator::add(const MembraneTape& tape, double v_th, int layer) {
  for (const auto& r : tape.records) {
    if (layer >= 0 && r.layer != layer) continue;
    for (Index i = 0; i < r.u_pre.size(); ++i) add(r.u_pre[i], v_th);
  }
}

double InformationLossEstimator::firing_rate() const {
  return total_ == 0 ? 0.0 : static_cast<double>(fired_) / static_cast<double>(total_);
}

double InformationLossEstimator::estimate(double firing_rate) const {
  if (!(firing_rate >= 0.0 && firing_rate <= 1.0)) {
    throw ParameterError("firing rate must lie in [0, 1]");
  }
  if (total_ == 0) throw UsageError("information loss: no samples");
  const double n = static_cast<double>(total_);
  const double masses[2] = {1.0 - firing_rate, firing_rate};
  double kl = 0.0;
  for (size_t s = 0; s < windows_.size(); ++s) {
    const Histogram& w = windows_[s];
    const double q = masses[s] / (2.0 * cfg_.epsilon);
    for (int b = 0; b < w.bins(); ++b) {
      const auto c = w.counts[static_cast<size_t>(b)];
      if (c == 0) continue;
      if (q == 0.0) return std::numeric_limits<double>::infinity();
      const double mass = static_cast<double>(c) / n;  // w * p
      const double p = mass / w.bin_width();
      kl += mass * std::log(p / q);
    }
  }
  return kl;
}

double kl_information_loss(const MembraneTape& tape, const KlConfig& cfg,
                           double firing_rate) {
  if (tape.empty()) throw UsageError("information loss: empty membrane tape");
  if (!(firing_rate >= 0.0 && firing_rate <= 1.0)) {
    throw ParameterError("firing rate must lie in [0, 1]");
  }
  InformationLossEstimator est(cfg);
  // The threshold only feeds the estimator's own firing count, which is
  // unused here.
  est.add(tape, 0.5);
  return est.estimate(firing_rate);
}

// --- dataset analysis ------------------------------------------------------

MembraneAnalysis analyze_membranes(const Network& net, const Dataset& ds,
                                   const AnalysisOptions& options) {
  if (ds.samples() == 0) throw UsageError("analysis: empty dataset");
  const std::vector<int> spiking = net.spiking_layers();
  std::vector<int> layers = options.layers.empty() ? spiking : options.layers;
  for (int l : layers) {
    if (std::find(spiking.begin(), spiking.end(), l) == spiking.end()) {
      throw ParameterError("analysis: layer " + std::to_string(l) +
                           " is not a spiking layer");
    }
  }
  // Thresholds per analyzed layer.
  std::vector<double> v_th;
  for (int l : layers) {
    v_th.push_back(std::get<SpikingLayer>(net.layers().at(static_cast<size_t>(l))).params.v_th);
  }

  struct Slot {
    Index hits = 0;
    std::vector<Histogram> hists;
    std::vector<InformationLossEstimator> kl;
    std::vector<double> qsum;
    std::vector<Index> qcount;
  };
  const Index batches = (ds.samples() + kEvalBatch - 1) / kEvalBatch;
  std::vector<Slot> slots(static_cast<size_t>(batches));
  for_each_batch(net, ds, true, eval_threads(), [&](Index b, Index first, const ForwardPass& pass) {
    Slot& s = slots[static_cast<size_t>(b)];
    for (Index r = 0; r < pass.logits.dim(0); ++r) {
      s.hits += argmax_row(pass.logits, r) == ds.labels[static_cast<size_t>(first + r)];
    }
    for (size_t i = 0; i < layers.size(); ++i) {
      s.hists.emplace_back(options.hist_lo, options.hist_hi, options.hist_bins);
      s.kl.emplace_back(options.kl);
      s.qsum.push_back(0.0);
      s.qcount.push_back(0);
    }
    for (const auto& rec : pass.tape.records) {
      const auto it = std::find(layers.begin(), layers.end(), rec.layer);
      if (it == layers.end()) continue;
      const auto i = static_cast<size_t>(it - layers.begin());
      for (Index e = 0; e < rec.u_pre.size(); ++e) {
        const double u = rec.u_pre[e];
        s.hists[i].add(u);
        s.kl[i].add(u, v_th[i]);
        s.qsum[i] += quant_error(u, v_th[i], options.p);
      }
      s.qcount[i] += rec.u_pre.size();
    }
  });

  MembraneAnalysis out;
  Index hits = 0;
  std::vector<InformationLossEstimator> kl_total;
  InformationLossEstimator pooled(options.kl);
  for (size_t i = 0; i < layers.size(); ++i) {
    out.layers.push_back({layers[i], Histogram(options.hist_lo, options.hist_hi, options.hist_bins),
                          0.0, 0.0, 0.0});
    kl_total.emplace_back(options.kl);
  }
  std::vector<double> qsum(layers.size(), 0.0);
  std::vector<Index> qcount(layers.size(), 0);
  for (const Slot& s : slots) {
    hits += s.hits;
    for (size_t i = 0; i < layers.size(); ++i) {
      out.layers[i].hist.merge(s.hists[i]);
      kl_total[i].merge(s.kl[i]);
      pooled.merge(s.kl[i]);
      qsum[i] += s.qsum[i];
      qcount[i] += s.qcount[i];
    }
  }
  double q_all = 0.0;
  Index n_all = 0;
  for (size_t i = 0; i < layers.size(); ++i) {
    LayerAnalysis& la = out.layers[i];
    la.mean_quant_error = qcount[i] > 0 ? qsum[i] / static_cast<double>(qcount[i]) : 0.0;
    la.firing_rate = kl_total[i].firing_rate();
    la.kl_estimate = kl_total[i].estimate(la.firing_rate);
    q_all += qsum[i];
    n_all += qcount[i];
  }
  out.accuracy = static_cast<double>(hits) / static_cast<double>(ds.samples());
  out.mean_quant_error = n_all > 0 ? q_all / static_cast<double>(n_all) : 0.0;
  out.firing_rate = pooled.firing_rate();
  out.kl_estimate = pooled.estimate(out.firing_rate);
  return out;
}

// --- report ----------------------------------------------------------------

namespace {

json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

double number_from(const json& j) {
  return j.is_null() ? std::numeric_limits<double>::quiet_NaN() : j.get<double>();
}

}  // namespace

json report_to_json(const Report& report) {
  json j;
  j["schema_version"] = kReportSchemaVersion;
  j["config"] = report.config;
  json epochs = json::array();
  for (const auto& m : report.epochs) {
    epochs.push_back({{"epoch", m.epoch},
                      {"lambda", m.lambda},
                      {"learning_rate", m.learning_rate},
                      {"train_loss", m.train_loss},
                      {"train_ce", m.train_ce},
                      {"train_rmp", m.train_rmp},
                      {"mean_quant_error", m.mean_quant_error},
                      {"test_accuracy", m.test_accuracy}});
  }
  j["epochs"] = std::move(epochs);
  j["final"] = {{"accuracy", number_or_null(report.final_metrics.accuracy)},
                {"mean_quant_error", number_or_null(report.final_metrics.mean_quant_error)},
                {"kl_estimate", number_or_null(report.final_metrics.kl_estimate)}};
  json hists = json::array();
  for (const auto& h : report.histograms) {
    hists.push_back({{"layer", h.layer},
                     {"lo", h.hist.lo},
                     {"hi", h.hist.hi},
                     {"bins", h.hist.bins()},
                     {"counts", h.hist.counts},
                     {"underflow", h.hist.underflow},
                     {"overflow", h.hist.overflow},
                     {"total", h.hist.total}});
  }
  j["histograms"] = std::move(hists);
  j["extra"] = report.extra;
  return j;
}

Report report_from_json(const json& j) {
  try {
    if (j.at("schema_version").get<std::string>() != kReportSchemaVersion) {
      throw FormatError("report: unsupported schema_version");
    }
    Report r;
    r.config = j.at("config");
    for (const auto& e : j.at("epochs")) {
      EpochMetrics m;
      m.epoch = e.at("epoch").get<int>();
      m.lambda = e.at("lambda").get<double>();
      m.learning_rate = e.at("learning_rate").get<double>();
      m.train_loss = e.at("train_loss").get<double>();
      m.train_ce = e.at("train_ce").get<double>();
      m.train_rmp = e.at("train_rmp").get<double>();
      m.mean_quant_error = e.at("mean_quant_error").get<double>();
      m.test_accuracy = e.at("test_accuracy").get<double>();
      r.epochs.push_back(m);
    }
    const json& f = j.at("final");
    r.final_metrics.accuracy = number_from(f.at("accuracy"));
    r.final_metrics.mean_quant_error = number_from(f.at("mean_quant_error"));
    r.final_metrics.kl_estimate = number_from(f.at("kl_estimate"));
    for (const auto& h : j.at("histograms")) {
      HistogramEntry e;
      e.layer = h.at("layer").get<int>();
      e.hist = Histogram(h.at("lo").get<double>(), h.at("hi").get<double>(),
                         h.at("bins").get<int>());
      e.hist.counts = h.at("counts").get<std::vector<std::int64_t>>();
      e.hist.underflow = h.at("underflow").get<std::int64_t>();
      e.hist.overflow = h.at("overflow").get<std::int64_t>();
      e.hist.total = h.at("total").get<std::int64_t>();
      r.histograms.push_back(std::move(e));
    }
    if (j.contains("extra")) r.extra = j.at("extra");
    return r;
  } catch (const json::exception& e) {
    throw FormatError(std::string("report: ") + e.what());
  }
}

void export_report(const Report& report, const std::filesystem::path& path) {
  write_file_atomic(path, report_to_json(report).dump(2) + "\n");
}

Report load_report(const std::filesystem::path& path) {
  try {
    return report_from_json(json::parse(read_file_text(path)));
  } catch (const json::parse_error& e) {
    throw FormatError(std::string("report: ") + e.what());
  }
}

}  // namespace snn_rmp
