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
#include <cstdlib>

#include <gtest/gtest.h>

#include "grad_check.hpp"
#include "snn_rmp/network.hpp"

namespace snn_rmp {
namespace {

using testing::check_gradients;
using testing::tiny_mlp;

// Dense(identity) -> spike -> head on a single input feature.
Network identity_chain(int timesteps) {
  std::vector<Layer> layers;
  layers.emplace_back(DenseLayer{Tensor({1, 1}, {1.0}), Tensor({1}, {0.0})});
  layers.emplace_back(SpikingLayer{});
  layers.emplace_back(OutputHead{});
  return Network({1}, timesteps, std::move(layers));
}

TEST(Forward, HandTracedChain) {
  const Network net = identity_chain(2);
  const ForwardPass pass = infer(net, Tensor({1, 1}, {0.6}), true);
  EXPECT_EQ(pass.logits, Tensor({1, 1}, {2.0}));
  ASSERT_EQ(pass.tape.records.size(), 2u);
  EXPECT_DOUBLE_EQ(pass.tape.records[0].u_pre[0], 0.6);
  EXPECT_DOUBLE_EQ(pass.tape.records[1].u_pre[0], 0.6);  // reset to 0, then 0.6
}

TEST(Forward, ZeroInputGivesZeroLogits) {
  SeededRng rng(1);
  std::vector<Layer> layers;
  layers.emplace_back(DenseLayer{gauss(rng, {4, 3}, 0.0, 1.0), Tensor({4}, 0.0)});
  layers.emplace_back(SpikingLayer{});
  layers.emplace_back(DenseLayer{gauss(rng, {2, 4}, 0.0, 1.0), Tensor({2}, 0.0)});
  layers.emplace_back(OutputHead{});
  const Network net({3}, 3, std::move(layers));
  const ForwardPass pass = infer(net, Tensor({5, 3}, 0.0), true);
  EXPECT_TRUE((pass.logits.array() == 0.0).all());
  for (const auto& r : pass.tape.records) EXPECT_TRUE((r.u_pre.array() == 0.0).all());
}

TEST(Forward, TapeLengthIsSpikingLayersTimesT) {
  SeededRng rng(2);
  ArchSpec arch;
  arch.name = "cnn-s";
  arch.sample_shape = {1, 8, 8};
  arch.classes = 3;
  arch.timesteps = 3;
  const Network net = build_network(arch, rng);
  EXPECT_EQ(net.spiking_layers().size(), 2u);
  const ForwardPass pass = infer(net, gauss(rng, {2, 1, 8, 8}, 0.0, 1.0), true);
  EXPECT_EQ(pass.tape.records.size(), 6u);
  EXPECT_EQ(pass.logits.shape(), (Shape{2, 3}));
  EXPECT_TRUE(infer(net, gauss(rng, {2, 1, 8, 8}, 0.0, 1.0), false).tape.empty());
}

TEST(Forward, SpikesAreBinary) {
  SeededRng rng(3);
  Network net = build_mlp(5, 16, 3, 4, NeuronParams{}, 1.0, rng);
  const ForwardPass pass = forward(net, gauss(rng, {8, 5}, 0.0, 1.0), {true, true});
  const auto& c = std::get<SpikeCache>(pass.caches[2]);
  EXPECT_TRUE(((c.fired.array() == 0.0) || (c.fired.array() == 1.0)).all());
}

TEST(Forward, RejectsWrongInputShape) {
  SeededRng rng(3);
  const Network net = build_mlp(5, 4, 3, 2, NeuronParams{}, 1.0, rng);
  EXPECT_THROW(infer(net, Tensor({2, 4}, 0.0), false), ShapeError);
}

TEST(Network, RejectsBadLayouts) {
  std::vector<Layer> no_head;
  no_head.emplace_back(DenseLayer{Tensor({1, 1}, 1.0), Tensor({1}, 0.0)});
  EXPECT_THROW(Network({1}, 1, no_head), ShapeError);
  std::vector<Layer> mismatch;
  mismatch.emplace_back(DenseLayer{Tensor({2, 3}, 1.0), Tensor({2}, 0.0)});
  mismatch.emplace_back(OutputHead{});
  EXPECT_THROW(Network({4}, 1, mismatch), ShapeError);
}

TEST(Backward, ClampRegionBlocksGradientsBelowSpikes) {
  // Membranes far above 1 or below 0 at every step: the surrogate is flat,
  // so nothing upstream of the spiking layer receives gradient.
  std::vector<Layer> layers;
  layers.emplace_back(DenseLayer{Tensor({2, 2}, {20.0, 0.0, 0.0, -20.0}), Tensor({2}, 0.0)});
  layers.emplace_back(SpikingLayer{});
  layers.emplace_back(DenseLayer{Tensor({2, 2}, {1.0, 0.5, -0.5, 1.0}), Tensor({2}, 0.0)});
  layers.emplace_back(OutputHead{});
  Network net({2}, 3, std::move(layers));
  const Tensor x({2, 2}, {1.0, 1.0, 2.0, 0.5});
  const ForwardPass pass = forward(net, x, {true, true});
  const auto ce = cross_entropy(pass.logits, std::vector<int>{1, 0});
  const Gradients g = backward(net, pass, ce.dlogits, {}, 0.0);
  EXPECT_TRUE((g[0].array() == 0.0).all());
  EXPECT_TRUE((g[1].array() == 0.0).all());
  EXPECT_FALSE((g[3].array() == 0.0).all());  // output bias still learns
}

TEST(Backward, RelaxedModeMatchesFiniteDifferences) {
  for (std::uint64_t seed = 1; seed <= 6; ++seed) {
    SeededRng rng(seed);
    Network net = tiny_mlp(rng, 2);
    const Tensor x = gauss(rng, {2, 2}, 0.0, 1.0);
    for (double lambda : {0.0, 0.1, 1.0}) {
      const auto r = check_gradients(net, x, {0, 1}, lambda, 0.5, 2.0);
      EXPECT_LT(r.max_rel_error, 1e-4) << "seed " << seed << " lambda " << lambda;
      EXPECT_GT(r.checked, 20) << "seed " << seed;
    }
  }
}

TEST(Backward, RelaxedModeConvNetMatchesFiniteDifferences) {
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    SeededRng rng(seed);
    std::vector<Layer> layers;
    layers.emplace_back(Conv2dLayer{gauss(rng, {2, 1, 3, 3}, 0.0, 0.6), 1, 1});
    TdBNLayer bn(2, 1.0, 0.5);
    bn.beta = Tensor({2}, {0.45, 0.35});
    layers.emplace_back(bn);
    layers.emplace_back(SpikingLayer{});
    layers.emplace_back(AvgPoolLayer{2});
    layers.emplace_back(FlattenLayer{});
    layers.emplace_back(DenseLayer{gauss(rng, {3, 8}, 0.0, 0.5), Tensor({3}, 0.0)});
    layers.emplace_back(OutputHead{});
    Network net({1, 4, 4}, 2, std::move(layers));
    const Tensor x = gauss(rng, {2, 1, 4, 4}, 0.0, 1.0);
    const auto r = check_gradients(net, x, {2, 0}, 0.1, 0.5, 2.0);
    EXPECT_LT(r.max_rel_error, 1e-4) << "seed " << seed;
    EXPECT_GT(r.checked, 20);
  }
}

TEST(Backward, LinearInLambda) {
  SeededRng rng(8);
  Network net = tiny_mlp(rng, 3);
  const Tensor x = gauss(rng, {4, 2}, 0.0, 1.0);
  const std::vector<int> y{0, 1, 1, 0};
  const ForwardPass pass = forward(net, x, {true, true});
  const auto ce = cross_entropy(pass.logits, y);
  const auto rg = rmp_loss_grad(pass.tape, 0.5, 2.0);
  const Gradients g0 = backward(net, pass, ce.dlogits, rg, 0.0);
  const Gradients g1 = backward(net, pass, ce.dlogits, rg, 0.1);
  const Gradients g2 = backward(net, pass, ce.dlogits, rg, 0.2);
  for (size_t k = 0; k < g0.size(); ++k) {
    const auto lhs = g2[k].array() - g0[k].array();
    const auto rhs = 2.0 * (g1[k].array() - g0[k].array());
    EXPECT_LT((lhs - rhs).abs().maxCoeff(), 1e-10);
  }
}

TEST(Backward, StaleOrInferencePassRejected) {
  SeededRng rng(4);
  Network net = tiny_mlp(rng, 2);
  const Tensor x = gauss(rng, {2, 2}, 0.0, 1.0);
  const ForwardPass eval_pass = infer(net, x, true);
  EXPECT_THROW(backward(net, eval_pass, Tensor({2, 2}, 0.0), {}, 0.0), UsageError);
  const ForwardPass pass = forward(net, x, {true, true});
  EXPECT_THROW(backward(net, pass, Tensor({2, 2}, 0.0), {}, 0.1), UsageError);
  OptimState opt = OptimState::for_network(net, 0.1, 0.9, 10);
  const Gradients g = backward(net, pass, Tensor({2, 2}, 0.1), {}, 0.0);
  sgd_step(net, g, opt, 0);
  EXPECT_THROW(backward(net, pass, Tensor({2, 2}, 0.0), {}, 0.0), UsageError);
}

TEST(Sgd, PlainStepAndCosineSchedule) {
  SeededRng rng(5);
  Network net = tiny_mlp(rng, 2);
  Gradients g;
  for (const auto& p : net.parameters()) g.push_back(gauss(rng, p.tensor->shape(), 0.0, 1.0));
  std::vector<Tensor> before;
  for (const auto& p : net.parameters()) before.push_back(*p.tensor);

  OptimState plain = OptimState::for_network(net, 1.0, 0.0, 10);
  sgd_step(net, g, plain, 0);
  auto params = net.parameters();
  for (size_t k = 0; k < params.size(); ++k) {
    EXPECT_EQ(*params[k].tensor, Tensor(before[k].shape(), (before[k].array() - g[k].array()).eval()));
  }

  OptimState opt = OptimState::for_network(net, 0.3, 0.9, 10);
  EXPECT_EQ(opt.learning_rate(0), 0.3);
  EXPECT_NEAR(opt.learning_rate(5), 0.15, 1e-16);
  EXPECT_EQ(opt.learning_rate(10), 0.0);
  std::vector<Tensor> mid;
  for (const auto& p : net.parameters()) mid.push_back(*p.tensor);
  sgd_step(net, g, opt, 10);
  params = net.parameters();
  for (size_t k = 0; k < params.size(); ++k) EXPECT_EQ(*params[k].tensor, mid[k]);

  Gradients bad = g;
  bad[0] = Tensor({1}, 0.0);
  EXPECT_THROW(sgd_step(net, bad, opt, 0), ShapeError);
}

Dataset blobs(std::uint64_t seed, Index per_class) {
  return synth_blobs(seed, per_class, 3, 6, 0.3);
}

std::vector<Tensor> snapshot(const Network& net) {
  std::vector<Tensor> out;
  for (const auto& r : net.state()) out.push_back(*r.tensor);
  return out;
}

struct TrainRun {
  std::vector<Tensor> state;
  std::vector<EpochMetrics> history;
};

TrainRun train_run(std::uint64_t seed, TrainOptions options, int epochs) {
  SeededRng rng(seed);
  const Dataset train_set = blobs(10, 40), test_set = blobs(11, 10);
  Network net = build_mlp(6, 12, 3, 3, NeuronParams{}, 1.0, rng);
  OptimState opt = OptimState::for_network(net, 0.05, 0.9, epochs);
  options.loss.total_epochs = epochs;
  TrainRun r;
  r.history = train(net, opt, rng, train_set, test_set, options);
  r.state = snapshot(net);
  return r;
}

TEST(Train, SeededRunsAreBitIdentical) {
  TrainOptions o;
  o.batch_size = 16;
  const TrainRun a = train_run(3, o, 4), b = train_run(3, o, 4);
  EXPECT_EQ(a.state, b.state);
  const TrainRun c = train_run(4, o, 4);
  EXPECT_NE(a.state, c.state);
}

TEST(Train, ZeroKMatchesRegularizerFreeBuild) {
  TrainOptions with;
  with.batch_size = 16;
  with.loss.k = 0.0;
  TrainOptions without = with;
  without.rmp_enabled = false;
  const TrainRun a = train_run(6, with, 5), b = train_run(6, without, 5);
  EXPECT_EQ(a.state, b.state);
  ASSERT_EQ(a.history.size(), b.history.size());
  for (size_t n = 0; n < a.history.size(); ++n) {
    EXPECT_EQ(a.history[n].train_loss, b.history[n].train_loss);
    EXPECT_EQ(a.history[n].test_accuracy, b.history[n].test_accuracy);
  }
}

TEST(Train, OneEpochOneBatchIsOneStep) {
  SeededRng rng(9);
  const Dataset ds = blobs(1, 5);
  Network net = build_mlp(6, 4, 3, 2, NeuronParams{}, 1.0, rng);
  Network copy = net;
  SeededRng replay = rng;
  OptimState opt = OptimState::for_network(net, 0.1, 0.9, 1);
  TrainOptions o;
  o.batch_size = 100;
  o.loss.total_epochs = 1;
  train(net, opt, rng, ds, ds, o);
  EXPECT_EQ(opt.epoch, 1);

  const auto order = shuffled_indices(replay, ds.samples());
  const ForwardPass pass = forward(copy, ds.gather(order), {true, true});
  const auto ce = cross_entropy(pass.logits, ds.gather_labels(order));
  const auto rg = rmp_loss_grad(pass.tape, 0.5, 2.0);
  const Gradients g = backward(copy, pass, ce.dlogits, rg, 0.0);
  auto p_before = copy.parameters();
  auto p_after = net.parameters();
  for (size_t k = 0; k < g.size(); ++k) {
    EXPECT_EQ(opt.velocity[k], g[k]);
    const Tensor expect(g[k].shape(), (p_before[k].tensor->array() - 0.1 * g[k].array()).eval());
    EXPECT_EQ(*p_after[k].tensor, expect);
  }
}

TEST(Train, LearnsSeparableBlobs) {
  TrainOptions o;
  o.batch_size = 16;
  const TrainRun r = train_run(2, o, 8);
  EXPECT_GT(r.history.back().test_accuracy, 0.9);
}

TEST(Evaluate, ForcedLogitsPerfect) {
  std::vector<Layer> layers;
  layers.emplace_back(DenseLayer{Tensor({2, 1}, {0.0, 0.0}), Tensor({2}, {0.0, 1.0})});
  layers.emplace_back(OutputHead{});
  const Network net({1}, 2, std::move(layers));
  Dataset ds{Tensor({1, 1}, {0.3}), {1}, 2};
  EXPECT_EQ(evaluate(net, ds), 1.0);
}

TEST(Evaluate, ArgmaxShiftInvariantAndLowestTie) {
  SeededRng rng(12);
  Tensor z = gauss(rng, {20, 5}, 0.0, 1.0);
  for (Index r = 0; r < 20; ++r) {
    const Index before = argmax_row(z, r);
    Tensor shifted = z;
    shifted.matrix().row(r).array() += 7.5;
    EXPECT_EQ(argmax_row(shifted, r), before);
  }
  EXPECT_EQ(argmax_row(Tensor({1, 3}, {1.0, 2.0, 2.0}), 0), 1);
}

TEST(Evaluate, RandomLabelsGiveChanceAccuracy) {
  SeededRng rng(31);
  const int classes = 4;
  Dataset ds = synth_blobs(77, 500, classes, 8, 0.5);
  // Permute labels: no relation to the inputs remains.
  const auto perm = shuffled_indices(rng, ds.samples());
  std::vector<int> labels(ds.labels.size());
  for (size_t i = 0; i < labels.size(); ++i) labels[i] = ds.labels[static_cast<size_t>(perm[i])];
  ds.labels = labels;
  const Network net = build_mlp(8, 32, classes, 4, NeuronParams{}, 1.0, rng);
  const double n = static_cast<double>(ds.samples());
  const double sigma = std::sqrt(0.25 * 0.75 / n);
  EXPECT_NEAR(evaluate(net, ds), 0.25, 3 * sigma);
}

TEST(Evaluate, EmptyDatasetRejected) {
  SeededRng rng(1);
  const Network net = build_mlp(2, 3, 2, 1, NeuronParams{}, 1.0, rng);
  Dataset empty;
  empty.class_count = 2;
  EXPECT_THROW(evaluate(net, empty), UsageError);
}

TEST(Evaluate, ThreadCountDoesNotChangeResults) {
  SeededRng rng(13);
  const Dataset ds = synth_blobs(5, 300, 3, 6, 0.8);
  const Network net = build_mlp(6, 10, 3, 3, NeuronParams{}, 1.0, rng);
  setenv("SNN_RMP_THREADS", "1", 1);
  const EvalSummary one = evaluate_with_quant_error(net, ds, 0.5, 2.0);
  setenv("SNN_RMP_THREADS", "3", 1);
  const EvalSummary three = evaluate_with_quant_error(net, ds, 0.5, 2.0);
  unsetenv("SNN_RMP_THREADS");
  EXPECT_EQ(one.accuracy, three.accuracy);
  EXPECT_EQ(one.mean_quant_error, three.mean_quant_error);
}

}  // namespace
}  // namespace snn_rmp
