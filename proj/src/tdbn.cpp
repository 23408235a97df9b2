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

#include "snn_rmp/tdbn.hpp"

#include <cmath>
#include <string>

namespace snn_rmp {

namespace {

// [outer, C, inner] decomposition of a [T, B, C, ...] activation.
struct ChannelLayout {
  Index outer = 0;
  Index channels = 0;
  Index inner = 0;

  Index count() const { return outer * inner; }
  Index offset(Index o, Index c) const { return (o * channels + c) * inner; }
};

ChannelLayout layout_of(const TdBNLayer& layer, const Shape& shape) {
  if (shape.size() != 3 && shape.size() != 5) {
    throw ShapeError("tdbn expects [T,B,C] or [T,B,C,H,W], got " +
                     shape_to_string(shape));
  }
  if (shape[2] != layer.channels) {
    throw ShapeError("tdbn: layer has " + std::to_string(layer.channels) +
                     " channels, input " + shape_to_string(shape));
  }
  ChannelLayout l;
  l.outer = shape[0] * shape[1];
  l.channels = shape[2];
  l.inner = shape.size() == 5 ? shape[3] * shape[4] : 1;
  return l;
}

Tensor apply_affine(const TdBNLayer& layer, const ChannelLayout& l,
                    const Tensor& x_bar) {
  Tensor y = x_bar;
  for (Index o = 0; o < l.outer; ++o) {
    for (Index c = 0; c < l.channels; ++c) {
      double* p = y.data() + l.offset(o, c);
      const double g = layer.gamma[c], b = layer.beta[c];
      for (Index i = 0; i < l.inner; ++i) p[i] = g * p[i] + b;
    }
  }
  return y;
}

Index checked_channels(Index channels) {
  if (channels < 1) throw ParameterError("tdbn: channel count must be >= 1");
  return channels;
}

}  // namespace

TdBNLayer::TdBNLayer(Index channels, double alpha, double v_th, double eps,
                     double momentum)
    : channels(checked_channels(channels)),
      gamma({channels}, 1.0),
      beta({channels}, 0.0),
      alpha(alpha),
      v_th(v_th),
      eps(eps),
      running_mean({channels}, 0.0),
      running_var({channels}, 1.0),
      momentum(momentum) {
  validate();
}

void TdBNLayer::validate() const {
  if (channels < 1) throw ParameterError("tdbn: channel count must be >= 1");
  const Shape c{channels};
  if (gamma.shape() != c || beta.shape() != c || running_mean.shape() != c ||
      running_var.shape() != c) {
    throw ShapeError("tdbn: parameter and statistic lengths must equal C");
  }
  if (!(eps > 0.0)) throw ParameterError("tdbn: eps must be > 0");
  if (!(momentum > 0.0 && momentum < 1.0)) {
    throw ParameterError("tdbn: momentum must lie in (0, 1)");
  }
}

std::pair<Tensor, TdBNCache> tdbn_forward(TdBNLayer& layer, const Tensor& x,
                                          bool training) {
  const ChannelLayout l = layout_of(layer, x.shape());
  TdBNCache cache;
  cache.training = training;
  cache.shape = x.shape();
  cache.scale = layer.alpha * layer.v_th;
  cache.inv_std.resize(l.channels);

  Eigen::ArrayXd mean(l.channels), var(l.channels);
  if (training) {
    const double n = static_cast<double>(l.count());
    mean.setZero();
    for (Index o = 0; o < l.outer; ++o) {
      for (Index c = 0; c < l.channels; ++c) {
        const double* p = x.data() + l.offset(o, c);
        for (Index i = 0; i < l.inner; ++i) mean[c] += p[i];
      }
    }
    mean /= n;
    var.setZero();
    for (Index o = 0; o < l.outer; ++o) {
      for (Index c = 0; c < l.channels; ++c) {
        const double* p = x.data() + l.offset(o, c);
        for (Index i = 0; i < l.inner; ++i) {
          const double d = p[i] - mean[c];
          var[c] += d * d;
        }
      }
    }
    var /= n;
    const double m = layer.momentum;
    layer.running_mean.array() = m * layer.running_mean.array() + (1 - m) * mean;
    layer.running_var.array() = m * layer.running_var.array() + (1 - m) * var;
  } else {
    mean = layer.running_mean.array();
    var = layer.running_var.array();
  }
  cache.inv_std = (var + layer.eps).sqrt().inverse();

  cache.x_hat = x;
  for (Index o = 0; o < l.outer; ++o) {
    for (Index c = 0; c < l.channels; ++c) {
      double* p = cache.x_hat.data() + l.offset(o, c);
      for (Index i = 0; i < l.inner; ++i) {
        p[i] = (p[i] - mean[c]) * cache.inv_std[c];
      }
    }
  }
  cache.x_bar = cache.x_hat;
  cache.x_bar.array() *= cache.scale;
  Tensor y = apply_affine(layer, l, cache.x_bar);
  return {std::move(y), std::move(cache)};
}

Tensor tdbn_infer(const TdBNLayer& layer, const Tensor& x) {
  const ChannelLayout l = layout_of(layer, x.shape());
  const Eigen::ArrayXd inv_std =
      (layer.running_var.array() + layer.eps).sqrt().inverse();
  const double scale = layer.alpha * layer.v_th;
  Tensor y = x;
  for (Index o = 0; o < l.outer; ++o) {
    for (Index c = 0; c < l.channels; ++c) {
      double* p = y.data() + l.offset(o, c);
      const double mu = layer.running_mean[c];
      const double k = scale * inv_std[c];
      const double g = layer.gamma[c], b = layer.beta[c];
      for (Index i = 0; i < l.inner; ++i) p[i] = g * ((p[i] - mu) * k) + b;
    }
  }
  return y;
}

TdBNGrads tdbn_backward(const TdBNLayer& layer, const TdBNCache& cache,
                        const Tensor& dy) {
  if (!cache.training) {
    throw UsageError("tdbn_backward needs a cache from a training forward");
  }
  if (dy.shape() != cache.shape) {
    throw ShapeError("tdbn_backward: gradient " + shape_to_string(dy.shape()) +
                     " vs cached input " + shape_to_string(cache.shape));
  }
  const ChannelLayout l = layout_of(layer, cache.shape);
  const double n = static_cast<double>(l.count());
  TdBNGrads g{zeros_like(dy), Tensor({l.channels}, 0.0),
              Tensor({l.channels}, 0.0)};

  // Per channel: sum(dy), sum(dy * x_hat).
  Eigen::ArrayXd sum_dy = Eigen::ArrayXd::Zero(l.channels);
  Eigen::ArrayXd sum_dy_xhat = Eigen::ArrayXd::Zero(l.channels);
  for (Index o = 0; o < l.outer; ++o) {
    for (Index c = 0; c < l.channels; ++c) {
      const Index off = l.offset(o, c);
      for (Index i = 0; i < l.inner; ++i) {
        sum_dy[c] += dy[off + i];
        sum_dy_xhat[c] += dy[off + i] * cache.x_hat[off + i];
      }
    }
  }
  g.dbeta.array() = sum_dy;
  g.dgamma.array() = cache.scale * sum_dy_xhat;

  // dx = k * inv_std * (dy - mean(dy) - x_hat * mean(dy * x_hat)),
  // k = gamma * alpha * v_th.
  for (Index o = 0; o < l.outer; ++o) {
    for (Index c = 0; c < l.channels; ++c) {
      const Index off = l.offset(o, c);
      const double k = layer.gamma[c] * cache.scale * cache.inv_std[c];
      const double m_dy = sum_dy[c] / n;
      const double m_dyx = sum_dy_xhat[c] / n;
      for (Index i = 0; i < l.inner; ++i) {
        g.dx[off + i] =
            k * (dy[off + i] - m_dy - cache.x_hat[off + i] * m_dyx);
      }
    }
  }
  return g;
}

}  // namespace snn_rmp
