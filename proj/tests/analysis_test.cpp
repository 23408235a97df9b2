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

#include <cmath>
#include <filesystem>
#include <limits>

#include <gtest/gtest.h>

#include "kl_family.hpp"
#include "snn_rmp/analysis.hpp"

namespace snn_rmp {
namespace {

MembraneTape single(std::initializer_list<double> values) {
  MembraneTape tape;
  tape.records.push_back({0, 0, Tensor({static_cast<Index>(values.size())}, values)});
  return tape;
}

MembraneTape random_tape(SeededRng& rng, int records) {
  MembraneTape tape;
  for (int r = 0; r < records; ++r) {
    Tensor u({3, 4}, 0.0);
    for (Index i = 0; i < u.size(); ++i) u[i] = -0.5 + 2.0 * rng.uniform();
    tape.records.push_back({r % 2, r / 2, std::move(u)});
  }
  return tape;
}

TEST(Histogram, CountsPerBin) {
  const Histogram h = membrane_histogram(single({0.25, 0.25, 0.75}), 2, 0.0, 1.0);
  EXPECT_EQ(h.counts, (std::vector<std::int64_t>{2, 1}));
  EXPECT_EQ(h.total, 3);
}

TEST(Histogram, EmptyBinsAndOutOfRange) {
  const Histogram h = membrane_histogram(single({0.1, 0.15, -2.0, 1.0, 5.0}), 4, 0.0, 1.0);
  EXPECT_EQ(h.counts, (std::vector<std::int64_t>{2, 0, 0, 0}));
  EXPECT_EQ(h.underflow, 1);
  EXPECT_EQ(h.overflow, 2);  // hi is exclusive
  EXPECT_EQ(h.total, 5);
}

TEST(Histogram, SingleBinHoldsAllInRangeMass) {
  SeededRng rng(2);
  const MembraneTape tape = random_tape(rng, 4);
  const Histogram h = membrane_histogram(tape, 1, -1.0, 2.0);
  EXPECT_EQ(h.counts[0], tape.element_count());
}

TEST(Histogram, TotalIsConserved) {
  SeededRng rng(3);
  for (int trial = 0; trial < 10; ++trial) {
    const MembraneTape tape = random_tape(rng, 1 + trial);
    const Histogram h = membrane_histogram(tape, 7, 0.0, 1.0);
    std::int64_t sum = h.underflow + h.overflow;
    for (auto c : h.counts) sum += c;
    EXPECT_EQ(sum, tape.element_count());
    EXPECT_EQ(h.total, tape.element_count());
  }
}

TEST(Histogram, LayerFilterAndMerge) {
  SeededRng rng(4);
  const MembraneTape tape = random_tape(rng, 6);
  Histogram a = membrane_histogram(tape, 5, -1.0, 2.0, 0);
  const Histogram b = membrane_histogram(tape, 5, -1.0, 2.0, 1);
  EXPECT_EQ(a.total, 36);
  a.merge(b);
  EXPECT_EQ(a.counts, membrane_histogram(tape, 5, -1.0, 2.0).counts);
  EXPECT_THROW(a.merge(Histogram(-1.0, 2.0, 4)), ParameterError);
  EXPECT_THROW(Histogram(0.0, 1.0, 0), ParameterError);
}

TEST(MeanQuantError, AllAtThreshold) {
  Tensor u({10}, 0.5);
  MembraneTape tape;
  tape.records.push_back({0, 0, u});
  EXPECT_DOUBLE_EQ(mean_quant_error(tape, 0.5, 2.0), 0.25);
}

TEST(MeanQuantError, AgreesWithRmpLoss) {
  SeededRng rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    const MembraneTape tape = random_tape(rng, 1 + trial % 5);
    const double p = trial % 3 == 0 ? 1.0 : 2.0;
    EXPECT_NEAR(mean_quant_error(tape, 0.5, p), rmp_loss(tape, 0.5, p), 1e-12);
  }
}

// Spreads `per_bin * bins` values evenly over each window, with window
// masses in the ratio (1 - r) : r.
MembraneTape matched_tape(double eps, int bins, double r, int scale) {
  std::vector<double> values;
  const double w = 2.0 * eps / bins;
  const int n0 = static_cast<int>(std::lround((1.0 - r) * scale));
  const int n1 = static_cast<int>(std::lround(r * scale));
  for (int b = 0; b < bins; ++b) {
    for (int i = 0; i < n0; ++i) values.push_back(-eps + (b + 0.5) * w);
    for (int i = 0; i < n1; ++i) values.push_back(1.0 - eps + (b + 0.5) * w);
  }
  MembraneTape tape;
  tape.records.push_back({0, 0, Tensor({static_cast<Index>(values.size())},
                                       Eigen::Map<Eigen::ArrayXd>(values.data(),
                                                                  static_cast<Index>(values.size())))});
  return tape;
}

TEST(InformationLoss, ZeroWhenDistributionsCoincide) {
  const KlConfig cfg{0.05, 50};
  for (double r : {0.25, 0.5, 0.8}) {
    const MembraneTape tape = matched_tape(cfg.epsilon, cfg.bins, r, 20);
    EXPECT_NEAR(kl_information_loss(tape, cfg, r), 0.0, 1e-12) << r;
  }
}

TEST(InformationLoss, InfiniteWhenSpikeModelHasNoMass) {
  const KlConfig cfg{0.05, 20};
  EXPECT_EQ(kl_information_loss(single({1.0, 0.3}), cfg, 0.0),
            std::numeric_limits<double>::infinity());
}

TEST(InformationLoss, ConfigChecks) {
  EXPECT_THROW((KlConfig{0.6, 200}.validate()), ParameterError);
  EXPECT_THROW((KlConfig{0.0, 200}.validate()), ParameterError);
  EXPECT_THROW((KlConfig{0.05, 5}.validate()), ParameterError);
  EXPECT_THROW(kl_information_loss(single({0.5}), KlConfig{}, 1.5), ParameterError);
  EXPECT_THROW(kl_information_loss(MembraneTape{}, KlConfig{}, 0.5), UsageError);
}

TEST(InformationLoss, FiringRateCountsThreshold) {
  InformationLossEstimator est(KlConfig{});
  est.add(single({0.1, 0.5, 0.9, 0.49}), 0.5);
  EXPECT_EQ(est.total(), 4);
  EXPECT_DOUBLE_EQ(est.firing_rate(), 0.5);
}

// Compressing samples toward a spike value raises the density there.
TEST(InformationLoss, CompressionRaisesDensityAtSpike) {
  const double eps = 0.05;
  const int n = 20000;
  for (double o : {0.0, 1.0}) {
    Tensor u({n}, 0.0), c({n}, 0.0);
    for (Index i = 0; i < n; ++i) {
      const double t = (static_cast<double>(i) + 0.5) / n;  // (0, 1)
      u[i] = o - eps + 2 * eps * t;
      c[i] = o - eps / 2 + eps * t;
    }
    MembraneTape tu, tc;
    tu.records.push_back({0, 0, u});
    tc.records.push_back({0, 0, c});
    InformationLossEstimator eu(KlConfig{eps, 100}), ec(KlConfig{eps, 100});
    eu.add(tu, 0.5);
    ec.add(tc, 0.5);
    const int spike = static_cast<int>(o);
    const Histogram& wu = eu.window(spike);
    const Histogram& wc = ec.window(spike);
    const int centre = 50;  // bin starting at o
    const double pu = wu.density(centre), pc = wc.density(centre);
    EXPECT_GT(pc, pu);
    EXPECT_NEAR(pc / pu, 2.0, 0.01);
  }
}

// More membrane mass near the spikes, while the spike model stays far
// denser, lowers the information-loss estimate; the histogram estimate
// tracks dense numerical integration of the exact family density.
TEST(InformationLoss, MonotoneFamilyDecreases) {
  const KlConfig cfg{0.05, 200};
  const double r = 0.5;
  double prev = std::numeric_limits<double>::infinity();
  double prev_oracle = prev;
  for (int a = 1; a <= 8; ++a) {
    const double f = 0.01 * a;
    const MembraneTape tape = testing::window_family_tape(f, cfg.epsilon, 200000);
    const double est = kl_information_loss(tape, cfg, r);
    const double oracle = testing::window_family_oracle(f, cfg.epsilon, r, 10 * cfg.bins);
    EXPECT_LT(est, prev) << "f=" << f;
    EXPECT_LT(oracle, prev_oracle);
    EXPECT_NEAR(est, oracle, 0.01 * std::abs(oracle)) << "f=" << f;
    prev = est;
    prev_oracle = oracle;
  }
}

TEST(InformationLoss, BinRefinementIsStable) {
  const MembraneTape tape = testing::window_family_tape(0.05, 0.05, 400000);
  const double coarse = kl_information_loss(tape, KlConfig{0.05, 100}, 0.5);
  const double fine = kl_information_loss(tape, KlConfig{0.05, 200}, 0.5);
  EXPECT_LT(std::abs(coarse - fine), 0.05 * std::abs(fine));
}

TEST(Analyze, ReductionsMatchEvaluation) {
  SeededRng rng(6);
  const Dataset ds = synth_blobs(3, 200, 3, 6, 0.6);
  const Network net = build_mlp(6, 10, 3, 3, NeuronParams{}, 1.0, rng);
  AnalysisOptions o;
  const MembraneAnalysis a = analyze_membranes(net, ds, o);
  const EvalSummary s = evaluate_with_quant_error(net, ds, 0.5, 2.0);
  EXPECT_EQ(a.accuracy, s.accuracy);
  EXPECT_EQ(a.mean_quant_error, s.mean_quant_error);
  ASSERT_EQ(a.layers.size(), 1u);
  EXPECT_EQ(a.layers[0].layer, 2);
  EXPECT_EQ(a.layers[0].hist.total, ds.samples() * 10 * 3);
  o.layers = {1};
  EXPECT_THROW(analyze_membranes(net, ds, o), ParameterError);
}

TEST(Report, RoundTrip) {
  SeededRng rng(7);
  Report r;
  r.config = {{"k", 0.1}, {"arch", "mlp-s"}};
  for (int n = 0; n < 3; ++n) {
    EpochMetrics m;
    m.epoch = n;
    m.lambda = 0.1 * n / 3.0;
    m.learning_rate = rng.uniform();
    m.train_loss = rng.uniform();
    m.train_ce = rng.uniform();
    m.train_rmp = rng.uniform();
    m.mean_quant_error = rng.uniform();
    m.test_accuracy = rng.uniform();
    r.epochs.push_back(m);
  }
  r.final_metrics = {0.9875, 0.1234567890123, -0.2};
  const MembraneTape tape = random_tape(rng, 4);
  r.histograms.push_back({0, membrane_histogram(tape, 9, -1.0, 2.0)});

  const auto path = std::filesystem::temp_directory_path() / "snn_rmp_report_test.json";
  export_report(r, path);
  const Report back = load_report(path);
  std::filesystem::remove(path);

  const auto j = report_to_json(back);
  EXPECT_EQ(j.at("schema_version"), "1");
  EXPECT_EQ(j, report_to_json(r));
  EXPECT_EQ(back.final_metrics.mean_quant_error, r.final_metrics.mean_quant_error);
  for (size_t n = 0; n < 3; ++n) {
    EXPECT_EQ(back.epochs[n].learning_rate, r.epochs[n].learning_rate);
  }
  std::int64_t sum = back.histograms[0].hist.underflow + back.histograms[0].hist.overflow;
  for (auto c : back.histograms[0].hist.counts) sum += c;
  EXPECT_EQ(sum, tape.element_count());
}

TEST(Report, SchemaMismatchRejected) {
  auto j = report_to_json(Report{});
  j["schema_version"] = "2";
  EXPECT_THROW(report_from_json(j), FormatError);
  EXPECT_THROW(report_from_json(nlohmann::json::object()), FormatError);
}

}  // namespace
}  // namespace snn_rmp
