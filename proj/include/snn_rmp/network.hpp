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

#ifndef SNN_RMP_NETWORK_HPP_
#define SNN_RMP_NETWORK_HPP_

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "snn_rmp/data.hpp"
#include "snn_rmp/loss.hpp"
#include "snn_rmp/neuron.hpp"
#include "snn_rmp/tdbn.hpp"
#include "snn_rmp/tensor.hpp"

namespace snn_rmp {

// Layers act on whole spike trains: activations are [T, B, ...sample].

struct DenseLayer {
  Tensor weight;  // [out, in]
  Tensor bias;    // [out]
};

struct Conv2dLayer {
  Tensor kernels;  // [out_ch, in_ch, kh, kw]
  Index stride = 1;
  Index padding = 0;
};

// LIF neurons; membrane state starts at zero on every forward pass.
struct SpikingLayer {
  NeuronParams params;
};

struct FlattenLayer {};

// Non-overlapping average pooling with stride equal to the window.
struct AvgPoolLayer {
  Index window = 2;
};

// Non-leaky integrator; the accumulated potential after T steps is the logit.
struct OutputHead {};

using Layer = std::variant<DenseLayer, Conv2dLayer, TdBNLayer, SpikingLayer,
                           FlattenLayer, AvgPoolLayer, OutputHead>;

std::string layer_kind(const Layer& layer);

struct ParamRef {
  std::string name;
  Tensor* tensor;
};
struct ConstParamRef {
  std::string name;
  const Tensor* tensor;
};

class Network {
 public:
  // Validates shape compatibility layer by layer; OutputHead must be last
  // and appear once.
  Network(Shape sample_shape, int timesteps, std::vector<Layer> layers);

  const Shape& sample_shape() const { return sample_shape_; }
  int timesteps() const { return timesteps_; }
  Index classes() const { return output_shapes_.back().at(0); }
  const std::vector<Layer>& layers() const { return layers_; }
  std::vector<Layer>& layers() { return layers_; }
  // Per-sample shape after layer i.
  const Shape& output_shape(size_t i) const { return output_shapes_.at(i); }
  std::vector<int> spiking_layers() const;

  // Trainable tensors in a fixed order: dense weight/bias, conv kernels,
  // tdBN gamma/beta.
  std::vector<ParamRef> parameters();
  std::vector<ConstParamRef> parameters() const;
  // parameters() plus tdBN running statistics: everything a checkpoint holds.
  std::vector<ParamRef> state();
  std::vector<ConstParamRef> state() const;

  // Bumped by every parameter update; forward passes remember it so a stale
  // pass cannot be back-propagated.
  std::uint64_t version() const { return version_; }
  void bump_version() { ++version_; }

 private:
  void validate();

  Shape sample_shape_;
  int timesteps_ = 1;
  std::vector<Layer> layers_;
  std::vector<Shape> output_shapes_;
  std::uint64_t version_ = 0;
};

using Gradients = std::vector<Tensor>;  // aligned with Network::parameters()

// kRelaxed emits surrogate_phi(u_pre) instead of the hard spike so the whole
// network is differentiable; the reset still uses the hard spike. Only used
// for gradient checks.
enum class SpikeMode { kHard, kRelaxed };

struct ForwardOptions {
  bool training = false;
  bool record = false;
  SpikeMode mode = SpikeMode::kHard;
};

struct DenseCache {
  Tensor input;
};
struct ConvCache {
  Tensor input;
};
struct SpikeCache {
  Tensor u_pre;   // [T, B, ...]
  Tensor fired;   // hard spikes, the reset gate
};
struct ReshapeCache {
  Shape input_shape;
};
using LayerCache = std::variant<std::monostate, DenseCache, ConvCache,
                                TdBNCache, SpikeCache, ReshapeCache>;

struct ForwardPass {
  Tensor logits;       // [B, classes], the accumulated output potential
  MembraneTape tape;   // filled when recording; layer-major, then time
  std::vector<LayerCache> caches;  // training passes only
  std::uint64_t version = 0;
  SpikeMode mode = SpikeMode::kHard;
  bool training = false;
};

// Presents the [B, ...sample] input at every timestep. Training mode uses
// batch statistics in tdBN, updates running statistics and keeps the caches
// needed by backward.
ForwardPass forward(Network& net, const Tensor& x, const ForwardOptions& opts);
// Inference-mode forward; leaves the network untouched and keeps no caches.
ForwardPass infer(const Network& net, const Tensor& x, bool record,
                  SpikeMode mode = SpikeMode::kHard);

// Reverse-time BPTT. `rmp_grads` is either empty or aligned with
// pass.tape.records; it is scaled by `rmp_weight` and injected at the
// membrane nodes.
Gradients backward(const Network& net, const ForwardPass& pass,
                   const Tensor& dlogits, std::span<const Tensor> rmp_grads,
                   double rmp_weight);

struct OptimState {
  std::vector<Tensor> velocity;  // aligned with Network::parameters()
  double base_lr = 0.01;
  double momentum = 0.9;
  int epoch = 0;         // next epoch to run
  int total_epochs = 1;  // N

  static OptimState for_network(const Network& net, double base_lr,
                                double momentum, int total_epochs);
  // base_lr * (1 + cos(pi n / N)) / 2
  double learning_rate(int n) const;
};

// v <- momentum * v + g; w <- w - lr(n) * v.
void sgd_step(Network& net, const Gradients& grads, OptimState& opt, int n);

struct TrainOptions {
  Index batch_size = 128;
  double v_th = 0.5;   // spike targets of the quantization error
  LossConfig loss;     // p, k and N
  // false removes every regularizer code path: no tape, no RMP term.
  bool rmp_enabled = true;
  // Epochs to run in this call; -1 runs through to N.
  int max_epochs = -1;
};

struct EpochMetrics {
  int epoch = 0;
  double lambda = 0.0;
  double learning_rate = 0.0;
  double train_loss = 0.0;        // mean total loss over batches
  double train_ce = 0.0;
  double train_rmp = 0.0;         // mean L_RMP over batches
  double mean_quant_error = 0.0;  // held-out set, inference mode
  double test_accuracy = 0.0;
};

using EpochCallback = std::function<void(const EpochMetrics&)>;

// Runs epochs opt.epoch .. N-1 (or max_epochs of them). The shuffle draws
// from `rng`, which is therefore part of the resumable state.
std::vector<EpochMetrics> train(Network& net, OptimState& opt, SeededRng& rng,
                                const Dataset& train_set,
                                const Dataset& test_set,
                                const TrainOptions& options,
                                const EpochCallback& on_epoch = {});

// Thread cap for batch-parallel evaluation, read from SNN_RMP_THREADS.
int eval_threads();

// Inference over `ds` in fixed batches. `visit(batch, first_sample, pass)`
// may run concurrently for distinct batches when threads > 1; callers
// reduce per-batch results in batch order.
inline constexpr Index kEvalBatch = 256;
void for_each_batch(
    const Network& net, const Dataset& ds, bool record, int threads,
    const std::function<void(Index, Index, const ForwardPass&)>& visit);

// Index of the largest logit; ties go to the lowest index.
Index argmax_row(const Tensor& logits, Index row);

// Fraction of samples whose argmax logit equals the label.
double evaluate(const Network& net, const Dataset& ds);

struct EvalSummary {
  double accuracy = 0.0;
  double mean_quant_error = 0.0;
};
EvalSummary evaluate_with_quant_error(const Network& net, const Dataset& ds,
                                      double v_th, double p);

// Reference architectures.
struct ArchSpec {
  std::string name = "mlp-s";  // "mlp-s" or "cnn-s"
  Shape sample_shape;
  Index classes = 2;
  int timesteps = 4;
  NeuronParams neuron;
  double alpha = 1.0;
  double bn_eps = 1e-5;
  double bn_momentum = 0.9;
  Index hidden = 128;
};

Network build_network(const ArchSpec& arch, SeededRng& rng);

// Dense(in->hidden) tdBN spike Dense(hidden->classes) head, for small tests.
Network build_mlp(Index in, Index hidden, Index classes, int timesteps,
                  const NeuronParams& neuron, double alpha, SeededRng& rng);

}  // namespace snn_rmp

#endif  // SNN_RMP_NETWORK_HPP_
