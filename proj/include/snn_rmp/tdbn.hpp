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

#ifndef SNN_RMP_TDBN_HPP_
#define SNN_RMP_TDBN_HPP_

#include <utility>

#include "snn_rmp/tensor.hpp"

namespace snn_rmp {

// Threshold-dependent batch normalization. Statistics are per channel,
// pooled over time, batch and space, and the normalized activations are
// scaled to standard deviation alpha * v_th before the affine step.
struct TdBNLayer {
  Index channels = 0;
  Tensor gamma;  // [C]
  Tensor beta;   // [C]
  double alpha = 1.0;
  double v_th = 0.5;
  double eps = 1e-5;
  Tensor running_mean;  // [C]
  Tensor running_var;   // [C], biased
  double momentum = 0.9;  // weight kept by the running statistics

  TdBNLayer() = default;
  TdBNLayer(Index channels, double alpha, double v_th, double eps = 1e-5,
            double momentum = 0.9);

  void validate() const;
};

struct TdBNCache {
  bool training = false;
  Shape shape;          // input shape as given
  Tensor x_hat;         // (x - mean) / sqrt(var + eps), same shape as input
  Tensor x_bar;         // alpha * v_th * x_hat
  Eigen::ArrayXd inv_std;  // per channel
  double scale = 1.0;   // alpha * v_th
};

struct TdBNGrads {
  Tensor dx;
  Tensor dgamma;
  Tensor dbeta;
};

// Accepts [T, B, C, H, W] or [T, B, C] (treated as [T, B, C, 1, 1]).
// Training mode normalizes with batch statistics and folds them into the
// running statistics; inference mode uses the running statistics.
std::pair<Tensor, TdBNCache> tdbn_forward(TdBNLayer& layer, const Tensor& x,
                                          bool training);

// Inference-only forward; never touches layer state.
Tensor tdbn_infer(const TdBNLayer& layer, const Tensor& x);

TdBNGrads tdbn_backward(const TdBNLayer& layer, const TdBNCache& cache,
                        const Tensor& dy);

}  // namespace snn_rmp

#endif  // SNN_RMP_TDBN_HPP_
