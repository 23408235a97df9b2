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

#include "snn_rmp/network.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <map>
#include <numbers>
#include <thread>
#include <utility>

namespace snn_rmp {

namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

using RowMajorMatrix = Tensor::RowMajorMatrix;
using MatrixMap = Eigen::Map<RowMajorMatrix>;
using ConstMatrixMap = Eigen::Map<const RowMajorMatrix>;

Shape with_prefix(Index t, Index b, const Shape& sample) {
  Shape s{t, b};
  s.insert(s.end(), sample.begin(), sample.end());
  return s;
}

struct ConvGeometry {
  Index in_ch, h, w, out_ch, kh, kw, stride, pad, out_h, out_w;

  Index patch() const { return in_ch * kh * kw; }
  Index positions() const { return out_h * out_w; }
};

ConvGeometry conv_geometry(const Conv2dLayer& conv, const Shape& in) {
  ConvGeometry g{};
  g.in_ch = in[0];
  g.h = in[1];
  g.w = in[2];
  g.out_ch = conv.kernels.dim(0);
  g.kh = conv.kernels.dim(2);
  g.kw = conv.kernels.dim(3);
  g.stride = conv.stride;
  g.pad = conv.padding;
  g.out_h = (g.h + 2 * g.pad - g.kh) / g.stride + 1;
  g.out_w = (g.w + 2 * g.pad - g.kw) / g.stride + 1;
  return g;
}

// cols is [C*kh*kw, out_h*out_w].
void im2col(const double* img, const ConvGeometry& g, Eigen::MatrixXd& cols) {
  cols.setZero(g.patch(), g.positions());
  for (Index c = 0; c < g.in_ch; ++c) {
    for (Index ki = 0; ki < g.kh; ++ki) {
      for (Index kj = 0; kj < g.kw; ++kj) {
        const Index row = (c * g.kh + ki) * g.kw + kj;
        for (Index oi = 0; oi < g.out_h; ++oi) {
          const Index ii = oi * g.stride - g.pad + ki;
          if (ii < 0 || ii >= g.h) continue;
          for (Index oj = 0; oj < g.out_w; ++oj) {
            const Index jj = oj * g.stride - g.pad + kj;
            if (jj < 0 || jj >= g.w) continue;
            cols(row, oi * g.out_w + oj) = img[(c * g.h + ii) * g.w + jj];
          }
        }
      }
    }
  }
}

void col2im_add(const Eigen::MatrixXd& cols, const ConvGeometry& g, double* img) {
  for (Index c = 0; c < g.in_ch; ++c) {
    for (Index ki = 0; ki < g.kh; ++ki) {
      for (Index kj = 0; kj < g.kw; ++kj) {
        const Index row = (c * g.kh + ki) * g.kw + kj;
        for (Index oi = 0; oi < g.out_h; ++oi) {
          const Index ii = oi * g.stride - g.pad + ki;
          if (ii < 0 || ii >= g.h) continue;
          for (Index oj = 0; oj < g.out_w; ++oj) {
            const Index jj = oj * g.stride - g.pad + kj;
            if (jj < 0 || jj >= g.w) continue;
            img[(c * g.h + ii) * g.w + jj] += cols(row, oi * g.out_w + oj);
          }
        }
      }
    }
  }
}

Tensor slice_time(const Tensor& act, Index t) {
  Shape s(act.shape().begin() + 1, act.shape().end());
  const Index n = shape_size(s);
  return Tensor(s, act.array().segment(t * n, n));
}

// Shared forward; `mut` is the same network viewed mutably, or null for
// inference passes.
ForwardPass run_forward(const Network& net, Network* mut, const Tensor& x,
                        const ForwardOptions& opts) {
  const Shape& sample = net.sample_shape();
  if (x.rank() != static_cast<Index>(sample.size()) + 1 ||
      !std::equal(sample.begin(), sample.end(), x.shape().begin() + 1)) {
    throw ShapeError("forward: input " + shape_to_string(x.shape()) +
                     " does not match [B," + shape_to_string(sample).substr(1));
  }
  const Index T = net.timesteps();
  const Index B = x.dim(0);
  const bool keep = opts.training;

  ForwardPass pass;
  pass.version = net.version();
  pass.mode = opts.mode;
  pass.training = opts.training;
  if (keep) pass.caches.resize(net.layers().size());

  // Direct encoding: the analog input is repeated at every timestep.
  Tensor act(with_prefix(T, B, sample), 0.0);
  for (Index t = 0; t < T; ++t) act.array().segment(t * x.size(), x.size()) = x.array();

  Shape in_sample = sample;
  for (size_t li = 0; li < net.layers().size(); ++li) {
    const Layer& layer = net.layers()[li];
    const Shape& out_sample = net.output_shape(li);
    std::visit(
        Overloaded{
            [&](const DenseLayer& d) {
              Tensor y(with_prefix(T, B, out_sample), 0.0);
              y.matrix(T * B).noalias() =
                  act.matrix(T * B) * d.weight.matrix().transpose();
              y.matrix(T * B).rowwise() += d.bias.matrix(1).row(0);
              if (keep) pass.caches[li] = DenseCache{std::move(act)};
              act = std::move(y);
            },
            [&](const Conv2dLayer& conv) {
              const ConvGeometry g = conv_geometry(conv, in_sample);
              Tensor y(with_prefix(T, B, out_sample), 0.0);
              const auto k = conv.kernels.matrix(g.out_ch);
              Eigen::MatrixXd cols;
              const Index in_n = shape_size(in_sample), out_n = shape_size(out_sample);
              for (Index n = 0; n < T * B; ++n) {
                im2col(act.data() + n * in_n, g, cols);
                MatrixMap(y.data() + n * out_n, g.out_ch, g.positions()).noalias() =
                    k * cols;
              }
              if (keep) pass.caches[li] = ConvCache{std::move(act)};
              act = std::move(y);
            },
            [&](const TdBNLayer& bn) {
              if (mut != nullptr && opts.training) {
                auto& mbn = std::get<TdBNLayer>(mut->layers()[li]);
                auto [y, cache] = tdbn_forward(mbn, act, true);
                pass.caches[li] = std::move(cache);
                act = std::move(y);
              } else {
                act = tdbn_infer(bn, act);
              }
            },
            [&](const SpikingLayer& s) {
              const Shape step_shape = with_prefix(1, B, out_sample);
              const Shape rec_shape(step_shape.begin() + 1, step_shape.end());
              const Index n = shape_size(step_shape);
              Tensor u(rec_shape, 0.0);
              Tensor out(act.shape(), 0.0);
              SpikeCache cache;
              if (keep) {
                cache.u_pre = Tensor(act.shape(), 0.0);
                cache.fired = Tensor(act.shape(), 0.0);
              }
              for (Index t = 0; t < T; ++t) {
                const Tensor xt(rec_shape, act.array().segment(t * n, n));
                LifStepResult<double> r = lif_step(u, xt, s.params);
                if (opts.mode == SpikeMode::kHard) {
                  out.array().segment(t * n, n) = r.spikes.array();
                } else {
                  out.array().segment(t * n, n) =
                      r.u_pre.array().unaryExpr([](double v) { return surrogate_phi(v); });
                }
                if (keep) {
                  cache.u_pre.array().segment(t * n, n) = r.u_pre.array();
                  cache.fired.array().segment(t * n, n) = r.spikes.array();
                }
                if (opts.record) {
                  pass.tape.records.push_back(
                      {static_cast<int>(li), static_cast<int>(t), r.u_pre});
                }
                u = std::move(r.u_post);
              }
              if (keep) pass.caches[li] = std::move(cache);
              act = std::move(out);
            },
            [&](const FlattenLayer&) {
              if (keep) pass.caches[li] = ReshapeCache{act.shape()};
              act = std::move(act).reshaped(with_prefix(T, B, out_sample));
            },
            [&](const AvgPoolLayer& p) {
              const Index c = in_sample[0], h = in_sample[1], w = in_sample[2];
              const Index oh = out_sample[1], ow = out_sample[2];
              const double inv = 1.0 / static_cast<double>(p.window * p.window);
              Tensor y(with_prefix(T, B, out_sample), 0.0);
              for (Index n = 0; n < T * B; ++n) {
                for (Index ch = 0; ch < c; ++ch) {
                  const double* src = act.data() + (n * c + ch) * h * w;
                  double* dst = y.data() + (n * c + ch) * oh * ow;
                  for (Index i = 0; i < oh; ++i) {
                    for (Index j = 0; j < ow; ++j) {
                      double sum = 0.0;
                      for (Index a = 0; a < p.window; ++a) {
                        for (Index b = 0; b < p.window; ++b) {
                          sum += src[(i * p.window + a) * w + j * p.window + b];
                        }
                      }
                      dst[i * ow + j] = sum * inv;
                    }
                  }
                }
              }
              if (keep) pass.caches[li] = ReshapeCache{act.shape()};
              act = std::move(y);
            },
            [&](const OutputHead&) {
              // u(t) = u(t-1) + x(t) from zero: the final potential is the sum.
              Tensor u(with_prefix(1, B, out_sample), 0.0);
              Shape logit_shape{B};
              logit_shape.insert(logit_shape.end(), out_sample.begin(), out_sample.end());
              u = std::move(u).reshaped(logit_shape);
              for (Index t = 0; t < T; ++t) {
                u = output_accumulate(u, slice_time(act, t));
              }
              act = std::move(u);
            },
        },
        layer);
    in_sample = out_sample;
  }
  pass.logits = std::move(act);
  return pass;
}

}  // namespace

std::string layer_kind(const Layer& layer) {
  return std::visit(Overloaded{
                        [](const DenseLayer&) { return std::string("dense"); },
                        [](const Conv2dLayer&) { return std::string("conv2d"); },
                        [](const TdBNLayer&) { return std::string("tdbn"); },
                        [](const SpikingLayer&) { return std::string("spiking"); },
                        [](const FlattenLayer&) { return std::string("flatten"); },
                        [](const AvgPoolLayer&) { return std::string("avgpool"); },
                        [](const OutputHead&) { return std::string("output_head"); },
                    },
                    layer);
}

// --- Network ---------------------------------------------------------------

Network::Network(Shape sample_shape, int timesteps, std::vector<Layer> layers)
    : sample_shape_(std::move(sample_shape)),
      timesteps_(timesteps),
      layers_(std::move(layers)) {
  validate();
}

void Network::validate() {
  if (timesteps_ < 1) throw ParameterError("network: timesteps must be >= 1");
  if (layers_.empty()) throw ShapeError("network: no layers");
  if (!std::holds_alternative<OutputHead>(layers_.back())) {
    throw ShapeError("network: the last layer must be the output head");
  }
  output_shapes_.clear();
  Shape cur = sample_shape_;
  for (size_t i = 0; i < layers_.size(); ++i) {
    const std::string where = "layer " + std::to_string(i) + " (" +
                              layer_kind(layers_[i]) + "): ";
    auto fail = [&](const std::string& msg) {
      throw ShapeError(where + msg + ", input " + shape_to_string(cur));
    };
    std::visit(
        Overloaded{
            [&](const DenseLayer& d) {
              if (d.weight.rank() != 2 || d.bias.shape() != Shape{d.weight.dim(0)}) {
                fail("weight must be [out,in] and bias [out]");
              }
              if (cur.size() != 1 || cur[0] != d.weight.dim(1)) {
                fail("expects [" + std::to_string(d.weight.dim(1)) + "]");
              }
              cur = {d.weight.dim(0)};
            },
            [&](const Conv2dLayer& c) {
              if (c.kernels.rank() != 4) fail("kernels must be [out,in,kh,kw]");
              if (cur.size() != 3 || cur[0] != c.kernels.dim(1)) {
                fail("expects [" + std::to_string(c.kernels.dim(1)) + ",H,W]");
              }
              if (c.stride < 1 || c.padding < 0) fail("bad stride or padding");
              const ConvGeometry g = conv_geometry(c, cur);
              if (g.out_h < 1 || g.out_w < 1) fail("kernel larger than input");
              cur = {g.out_ch, g.out_h, g.out_w};
            },
            [&](const TdBNLayer& bn) {
              bn.validate();
              if ((cur.size() != 1 && cur.size() != 3) || cur[0] != bn.channels) {
                fail("expects " + std::to_string(bn.channels) + " channels");
              }
            },
            [&](const SpikingLayer& s) { s.params.validate(); },
            [&](const FlattenLayer&) { cur = {shape_size(cur)}; },
            [&](const AvgPoolLayer& p) {
              if (cur.size() != 3) fail("expects [C,H,W]");
              if (p.window < 1 || cur[1] / p.window < 1 || cur[2] / p.window < 1) {
                fail("window does not fit");
              }
              cur = {cur[0], cur[1] / p.window, cur[2] / p.window};
            },
            [&](const OutputHead&) {
              if (i + 1 != layers_.size()) fail("output head must be last");
              if (cur.size() != 1) fail("expects [classes]");
            },
        },
        layers_[i]);
    output_shapes_.push_back(cur);
  }
}

std::vector<int> Network::spiking_layers() const {
  std::vector<int> out;
  for (size_t i = 0; i < layers_.size(); ++i) {
    if (std::holds_alternative<SpikingLayer>(layers_[i])) {
      out.push_back(static_cast<int>(i));
    }
  }
  return out;
}

namespace {

template <typename Net, typename Ref>
std::vector<Ref> collect(Net& net, bool with_stats) {
  std::vector<Ref> out;
  for (size_t i = 0; i < net.layers().size(); ++i) {
    const std::string prefix = "layer" + std::to_string(i) + ".";
    auto& layer = net.layers()[i];
    if (auto* d = std::get_if<DenseLayer>(&layer)) {
      out.push_back({prefix + "weight", &d->weight});
      out.push_back({prefix + "bias", &d->bias});
    } else if (auto* c = std::get_if<Conv2dLayer>(&layer)) {
      out.push_back({prefix + "kernels", &c->kernels});
    } else if (auto* bn = std::get_if<TdBNLayer>(&layer)) {
      out.push_back({prefix + "gamma", &bn->gamma});
      out.push_back({prefix + "beta", &bn->beta});
      if (with_stats) {
        out.push_back({prefix + "running_mean", &bn->running_mean});
        out.push_back({prefix + "running_var", &bn->running_var});
      }
    }
  }
  return out;
}

}  // namespace

std::vector<ParamRef> Network::parameters() {
  return collect<Network, ParamRef>(*this, false);
}
std::vector<ConstParamRef> Network::parameters() const {
  return collect<const Network, ConstParamRef>(*this, false);
}
std::vector<ParamRef> Network::state() {
  return collect<Network, ParamRef>(*this, true);
}
std::vector<ConstParamRef> Network::state() const {
  return collect<const Network, ConstParamRef>(*this, true);
}

// --- forward / backward ----------------------------------------------------

ForwardPass forward(Network& net, const Tensor& x, const ForwardOptions& opts) {
  return run_forward(net, &net, x, opts);
}

ForwardPass infer(const Network& net, const Tensor& x, bool record,
                  SpikeMode mode) {
  return run_forward(net, nullptr, x, {false, record, mode});
}

Gradients backward(const Network& net, const ForwardPass& pass,
                   const Tensor& dlogits, std::span<const Tensor> rmp_grads,
                   double rmp_weight) {
  if (!pass.training || pass.caches.size() != net.layers().size()) {
    throw UsageError("backward needs a training forward pass of this network");
  }
  if (pass.version != net.version()) {
    throw UsageError("backward: forward pass is stale (parameters changed)");
  }
  if (dlogits.shape() != pass.logits.shape()) {
    throw ShapeError("backward: dlogits " + shape_to_string(dlogits.shape()) +
                     " vs logits " + shape_to_string(pass.logits.shape()));
  }
  if (rmp_grads.empty() && rmp_weight != 0.0) {
    throw UsageError("backward: regularizer weight given without membrane gradients");
  }
  std::map<std::pair<int, int>, const Tensor*> rmp_at;
  if (!rmp_grads.empty()) {
    if (rmp_grads.size() != pass.tape.records.size()) {
      throw UsageError("backward: membrane gradients do not match the tape");
    }
    for (size_t j = 0; j < rmp_grads.size(); ++j) {
      const auto& rec = pass.tape.records[j];
      if (!rmp_grads[j].same_shape(rec.u_pre)) {
        throw ShapeError("backward: membrane gradient shape mismatch");
      }
      rmp_at[{rec.layer, rec.timestep}] = &rmp_grads[j];
    }
  }

  // Offsets of each layer's parameters within Network::parameters().
  std::vector<size_t> first_param(net.layers().size(), 0);
  Gradients grads;
  for (const auto& p : net.parameters()) grads.push_back(zeros_like(*p.tensor));
  {
    size_t k = 0;
    for (size_t i = 0; i < net.layers().size(); ++i) {
      first_param[i] = k;
      const Layer& l = net.layers()[i];
      if (std::holds_alternative<DenseLayer>(l) || std::holds_alternative<TdBNLayer>(l)) {
        k += 2;
      } else if (std::holds_alternative<Conv2dLayer>(l)) {
        k += 1;
      }
    }
  }

  const Index T = net.timesteps();
  const Index B = pass.logits.dim(0);

  // Head: every timestep's input receives dlogits.
  Tensor g(with_prefix(T, B, Shape{net.classes()}), 0.0);
  for (Index t = 0; t < T; ++t) {
    g.array().segment(t * dlogits.size(), dlogits.size()) = dlogits.array();
  }

  for (size_t li = net.layers().size() - 1; li-- > 0;) {
    const Layer& layer = net.layers()[li];
    const LayerCache& cache = pass.caches[li];
    const Shape in_sample = li == 0 ? net.sample_shape() : net.output_shape(li - 1);
    const Shape& out_sample = net.output_shape(li);
    std::visit(
        Overloaded{
            [&](const DenseLayer& d) {
              const auto& c = std::get<DenseCache>(cache);
              const auto gm = g.matrix(T * B);
              grads[first_param[li]].matrix().noalias() =
                  gm.transpose() * c.input.matrix(T * B);
              grads[first_param[li] + 1].matrix(1).row(0) = gm.colwise().sum();
              Tensor dx(c.input.shape(), 0.0);
              dx.matrix(T * B).noalias() = gm * d.weight.matrix();
              g = std::move(dx);
            },
            [&](const Conv2dLayer& conv) {
              const auto& c = std::get<ConvCache>(cache);
              const ConvGeometry geo = conv_geometry(conv, in_sample);
              const auto k = conv.kernels.matrix(geo.out_ch);
              auto dk = grads[first_param[li]].matrix(geo.out_ch);
              Tensor dx(c.input.shape(), 0.0);
              const Index in_n = shape_size(in_sample), out_n = shape_size(out_sample);
              Eigen::MatrixXd cols, dcols;
              for (Index n = 0; n < T * B; ++n) {
                im2col(c.input.data() + n * in_n, geo, cols);
                const ConstMatrixMap gout(g.data() + n * out_n, geo.out_ch,
                                          geo.positions());
                dk.noalias() += gout * cols.transpose();
                dcols.noalias() = k.transpose() * gout;
                col2im_add(dcols, geo, dx.data() + n * in_n);
              }
              g = std::move(dx);
            },
            [&](const TdBNLayer& bn) {
              TdBNGrads tg = tdbn_backward(bn, std::get<TdBNCache>(cache), g);
              grads[first_param[li]] = std::move(tg.dgamma);
              grads[first_param[li] + 1] = std::move(tg.dbeta);
              g = std::move(tg.dx);
            },
            [&](const SpikingLayer& s) {
              const auto& c = std::get<SpikeCache>(cache);
              const Index n = B * shape_size(out_sample);
              Tensor dx(g.shape(), 0.0);
              Eigen::ArrayXd du_next = Eigen::ArrayXd::Zero(n);  // dL/du(t)
              for (Index t = T - 1; t >= 0; --t) {
                const auto u_pre = c.u_pre.array().segment(t * n, n);
                const auto fired = c.fired.array().segment(t * n, n);
                Eigen::ArrayXd d_pre =
                    g.array().segment(t * n, n) *
                        u_pre.unaryExpr([](double v) { return surrogate_grad(v); }) +
                    du_next * (1.0 - fired);
                if (auto it = rmp_at.find({static_cast<int>(li), static_cast<int>(t)});
                    it != rmp_at.end()) {
                  d_pre += rmp_weight * it->second->array();
                }
                dx.array().segment(t * n, n) = d_pre;
                du_next = s.params.tau * d_pre;
              }
              g = std::move(dx);
            },
            [&](const FlattenLayer&) {
              g = std::move(g).reshaped(std::get<ReshapeCache>(cache).input_shape);
            },
            [&](const AvgPoolLayer& p) {
              const Index ch = in_sample[0], h = in_sample[1], w = in_sample[2];
              const Index oh = out_sample[1], ow = out_sample[2];
              const double inv = 1.0 / static_cast<double>(p.window * p.window);
              Tensor dx(std::get<ReshapeCache>(cache).input_shape, 0.0);
              for (Index m = 0; m < T * B; ++m) {
                for (Index cc = 0; cc < ch; ++cc) {
                  const double* src = g.data() + (m * ch + cc) * oh * ow;
                  double* dst = dx.data() + (m * ch + cc) * h * w;
                  for (Index i = 0; i < oh; ++i) {
                    for (Index j = 0; j < ow; ++j) {
                      const double v = src[i * ow + j] * inv;
                      for (Index a = 0; a < p.window; ++a) {
                        for (Index b = 0; b < p.window; ++b) {
                          dst[(i * p.window + a) * w + j * p.window + b] = v;
                        }
                      }
                    }
                  }
                }
              }
              g = std::move(dx);
            },
            [&](const OutputHead&) {},
        },
        layer);
  }
  return grads;
}

// --- optimizer -------------------------------------------------------------

OptimState OptimState::for_network(const Network& net, double base_lr,
                                   double momentum, int total_epochs) {
  if (total_epochs < 1) throw ParameterError("total epochs must be >= 1");
  OptimState s;
  for (const auto& p : net.parameters()) s.velocity.push_back(zeros_like(*p.tensor));
  s.base_lr = base_lr;
  s.momentum = momentum;
  s.total_epochs = total_epochs;
  return s;
}

double OptimState::learning_rate(int n) const {
  return base_lr * (1.0 + std::cos(std::numbers::pi * n / total_epochs)) / 2.0;
}

void sgd_step(Network& net, const Gradients& grads, OptimState& opt, int n) {
  auto params = net.parameters();
  if (grads.size() != params.size() || opt.velocity.size() != params.size()) {
    throw ShapeError("sgd_step: gradient/parameter count mismatch");
  }
  const double lr = opt.learning_rate(n);
  for (size_t i = 0; i < params.size(); ++i) {
    Tensor& w = *params[i].tensor;
    if (!grads[i].same_shape(w) || !opt.velocity[i].same_shape(w)) {
      throw ShapeError("sgd_step: shape mismatch for " + params[i].name);
    }
    opt.velocity[i].array() = opt.momentum * opt.velocity[i].array() + grads[i].array();
    w.array() -= lr * opt.velocity[i].array();
  }
  net.bump_version();
}

// --- training --------------------------------------------------------------

std::vector<EpochMetrics> train(Network& net, OptimState& opt, SeededRng& rng,
                                const Dataset& train_set, const Dataset& test_set,
                                const TrainOptions& options,
                                const EpochCallback& on_epoch) {
  if (train_set.samples() == 0) throw UsageError("train: empty training set");
  if (options.batch_size < 1) throw ParameterError("train: batch size must be >= 1");
  options.loss.validate();
  if (options.loss.total_epochs != opt.total_epochs) {
    throw ParameterError("train: loss and optimizer disagree on total epochs");
  }
  const int end = options.max_epochs < 0
                      ? opt.total_epochs
                      : std::min(opt.total_epochs, opt.epoch + options.max_epochs);
  const Index n_samples = train_set.samples();
  std::vector<EpochMetrics> history;

  for (int n = opt.epoch; n < end; ++n) {
    EpochMetrics m;
    m.epoch = n;
    m.lambda = options.rmp_enabled ? lambda_schedule(n, options.loss) : 0.0;
    m.learning_rate = opt.learning_rate(n);

    const std::vector<Index> order = shuffled_indices(rng, n_samples);
    int batches = 0;
    for (Index start = 0; start < n_samples; start += options.batch_size) {
      const Index len = std::min(options.batch_size, n_samples - start);
      const std::span<const Index> idx(order.data() + start, static_cast<size_t>(len));
      const Tensor xb = train_set.gather(idx);
      const std::vector<int> yb = train_set.gather_labels(idx);

      const ForwardPass pass = forward(net, xb, {true, options.rmp_enabled, SpikeMode::kHard});
      const CrossEntropy ce = cross_entropy(pass.logits, yb);
      double total = ce.loss;
      std::vector<Tensor> rmp_grads;
      if (options.rmp_enabled) {
        const double rmp = rmp_loss(pass.tape, options.v_th, options.loss.p);
        rmp_grads = rmp_loss_grad(pass.tape, options.v_th, options.loss.p);
        total = total_loss(ce.loss, rmp, n, options.loss);
        m.train_rmp += rmp;
      }
      if (!std::isfinite(total)) {
        throw NumericError("non-finite loss at epoch " + std::to_string(n));
      }
      m.train_loss += total;
      m.train_ce += ce.loss;
      ++batches;

      const Gradients grads = backward(net, pass, ce.dlogits, rmp_grads, m.lambda);
      sgd_step(net, grads, opt, n);
    }
    m.train_loss /= batches;
    m.train_ce /= batches;
    m.train_rmp /= batches;

    const EvalSummary s = evaluate_with_quant_error(net, test_set, options.v_th, options.loss.p);
    m.test_accuracy = s.accuracy;
    m.mean_quant_error = s.mean_quant_error;
    opt.epoch = n + 1;
    history.push_back(m);
    if (on_epoch) on_epoch(m);
  }
  return history;
}

// --- evaluation ------------------------------------------------------------

int eval_threads() {
  const char* env = std::getenv("SNN_RMP_THREADS");
  if (env == nullptr) return 1;
  const int v = std::atoi(env);
  return v >= 1 ? v : 1;
}

void for_each_batch(
    const Network& net, const Dataset& ds, bool record, int threads,
    const std::function<void(Index, Index, const ForwardPass&)>& visit) {
  const Index n = ds.samples();
  const Index batches = (n + kEvalBatch - 1) / kEvalBatch;
  auto run = [&](Index b) {
    const Index start = b * kEvalBatch;
    const Index len = std::min(kEvalBatch, n - start);
    std::vector<Index> idx(static_cast<size_t>(len));
    for (Index i = 0; i < len; ++i) idx[static_cast<size_t>(i)] = start + i;
    visit(b, start, infer(net, ds.gather(idx), record));
  };
  const Index workers = std::min<Index>(std::max(threads, 1), batches);
  if (workers <= 1) {
    for (Index b = 0; b < batches; ++b) run(b);
    return;
  }
  std::vector<std::thread> pool;
  for (Index w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      for (Index b = w; b < batches; b += workers) run(b);
    });
  }
  for (auto& t : pool) t.join();
}

Index argmax_row(const Tensor& logits, Index row) {
  const Index classes = logits.dim(1);
  const double* z = logits.data() + row * classes;
  Index best = 0;
  for (Index c = 1; c < classes; ++c) {
    if (z[c] > z[best]) best = c;
  }
  return best;
}

double evaluate(const Network& net, const Dataset& ds) {
  if (ds.samples() == 0) throw UsageError("evaluate: empty dataset");
  std::vector<unsigned char> correct(static_cast<size_t>(ds.samples()), 0);
  for_each_batch(net, ds, false, eval_threads(),
                 [&](Index, Index first, const ForwardPass& pass) {
                   for (Index r = 0; r < pass.logits.dim(0); ++r) {
                     correct[static_cast<size_t>(first + r)] =
                         argmax_row(pass.logits, r) ==
                         ds.labels[static_cast<size_t>(first + r)];
                   }
                 });
  Index hits = 0;
  for (unsigned char c : correct) hits += c;
  return static_cast<double>(hits) / static_cast<double>(ds.samples());
}

EvalSummary evaluate_with_quant_error(const Network& net, const Dataset& ds,
                                      double v_th, double p) {
  if (ds.samples() == 0) throw UsageError("evaluate: empty dataset");
  const Index batches = (ds.samples() + kEvalBatch - 1) / kEvalBatch;
  std::vector<Index> hits(static_cast<size_t>(batches), 0);
  std::vector<double> qsum(static_cast<size_t>(batches), 0.0);
  std::vector<Index> qcount(static_cast<size_t>(batches), 0);
  for_each_batch(net, ds, true, eval_threads(),
                 [&](Index b, Index first, const ForwardPass& pass) {
                   const auto sb = static_cast<size_t>(b);
                   for (Index r = 0; r < pass.logits.dim(0); ++r) {
                     hits[sb] += argmax_row(pass.logits, r) ==
                                 ds.labels[static_cast<size_t>(first + r)];
                   }
                   if (!pass.tape.empty()) {
                     qsum[sb] = quant_error_sum(pass.tape, v_th, p);
                     qcount[sb] = pass.tape.element_count();
                   }
                 });
  Index total_hits = 0, total_count = 0;
  double total_q = 0.0;
  for (size_t b = 0; b < hits.size(); ++b) {
    total_hits += hits[b];
    total_q += qsum[b];
    total_count += qcount[b];
  }
  EvalSummary s;
  s.accuracy = static_cast<double>(total_hits) / static_cast<double>(ds.samples());
  s.mean_quant_error = total_count > 0 ? total_q / static_cast<double>(total_count) : 0.0;
  return s;
}

// --- architectures ---------------------------------------------------------

namespace {

DenseLayer init_dense(Index in, Index out, SeededRng& rng) {
  return {gauss(rng, {out, in}, 0.0, std::sqrt(2.0 / static_cast<double>(in))),
          Tensor({out}, 0.0)};
}

Conv2dLayer init_conv(Index in_ch, Index out_ch, Index k, SeededRng& rng) {
  const double fan_in = static_cast<double>(in_ch * k * k);
  return {gauss(rng, {out_ch, in_ch, k, k}, 0.0, std::sqrt(2.0 / fan_in)), 1, k / 2};
}

}  // namespace

Network build_mlp(Index in, Index hidden, Index classes, int timesteps,
                  const NeuronParams& neuron, double alpha, SeededRng& rng) {
  std::vector<Layer> layers;
  layers.emplace_back(init_dense(in, hidden, rng));
  layers.emplace_back(TdBNLayer(hidden, alpha, neuron.v_th));
  layers.emplace_back(SpikingLayer{neuron});
  layers.emplace_back(init_dense(hidden, classes, rng));
  layers.emplace_back(OutputHead{});
  return Network({in}, timesteps, std::move(layers));
}

Network build_network(const ArchSpec& arch, SeededRng& rng) {
  if (arch.classes < 2) throw ParameterError("network: need at least 2 classes");
  std::vector<Layer> layers;
  auto bn = [&](Index c) {
    return TdBNLayer(c, arch.alpha, arch.neuron.v_th, arch.bn_eps, arch.bn_momentum);
  };
  if (arch.name == "mlp-s") {
    const Index in = shape_size(arch.sample_shape);
    layers.emplace_back(FlattenLayer{});
    layers.emplace_back(init_dense(in, arch.hidden, rng));
    layers.emplace_back(bn(arch.hidden));
    layers.emplace_back(SpikingLayer{arch.neuron});
    layers.emplace_back(init_dense(arch.hidden, arch.classes, rng));
    layers.emplace_back(OutputHead{});
  } else if (arch.name == "cnn-s") {
    if (arch.sample_shape.size() != 3) {
      throw ShapeError("cnn-s needs [C,H,W] samples, got " +
                       shape_to_string(arch.sample_shape));
    }
    const Index c = arch.sample_shape[0];
    const Index h = arch.sample_shape[1] / 4, w = arch.sample_shape[2] / 4;
    if (h < 1 || w < 1) throw ShapeError("cnn-s needs inputs at least 4x4");
    layers.emplace_back(init_conv(c, 16, 3, rng));
    layers.emplace_back(bn(16));
    layers.emplace_back(SpikingLayer{arch.neuron});
    layers.emplace_back(AvgPoolLayer{2});
    layers.emplace_back(init_conv(16, 32, 3, rng));
    layers.emplace_back(bn(32));
    layers.emplace_back(SpikingLayer{arch.neuron});
    layers.emplace_back(AvgPoolLayer{2});
    layers.emplace_back(FlattenLayer{});
    layers.emplace_back(init_dense(32 * h * w, arch.classes, rng));
    layers.emplace_back(OutputHead{});
  } else {
    throw ParameterError("unknown architecture '" + arch.name + "'");
  }
  return Network(arch.sample_shape, arch.timesteps, std::move(layers));
}

}  // namespace snn_rmp
