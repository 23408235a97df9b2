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

#ifndef SNN_RMP_NEURON_HPP_
#define SNN_RMP_NEURON_HPP_

#include <cmath>

#include "snn_rmp/tensor.hpp"

namespace snn_rmp {

struct NeuronParams {
  double tau = 0.25;  // leak factor, open interval (0, 1)
  double v_th = 0.5;  // firing threshold

  void validate() const {
    if (!(tau > 0.0 && tau < 1.0)) {
      throw ParameterError("tau must lie in (0, 1)");
    }
    if (!(v_th > 0.0)) throw ParameterError("v_th must be > 0");
  }
};

template <typename Scalar>
struct LifStepResult {
  BasicTensor<Scalar> u_pre;   // tau * u_prev + x, before reset
  BasicTensor<Scalar> spikes;  // exactly 0 or 1
  BasicTensor<Scalar> u_post;  // u_pre where silent, 0 where fired
};

// One leaky integrate-and-fire update with hard reset. Ties at the threshold
// fire.
template <typename Scalar>
LifStepResult<Scalar> lif_step(const BasicTensor<Scalar>& u_prev,
                               const BasicTensor<Scalar>& x,
                               const NeuronParams& params) {
  if (!u_prev.same_shape(x)) {
    throw ShapeError("lif_step: membrane " + shape_to_string(u_prev.shape()) +
                     " vs input " + shape_to_string(x.shape()));
  }
  const Scalar tau = static_cast<Scalar>(params.tau);
  const Scalar v_th = static_cast<Scalar>(params.v_th);
  LifStepResult<Scalar> r{x, zeros_like(x), zeros_like(x)};
  r.u_pre.array() = tau * u_prev.array() + x.array();
  r.spikes.array() = (r.u_pre.array() >= v_th).template cast<Scalar>();
  r.u_post.array() = r.u_pre.array() * (Scalar(1) - r.spikes.array());
  return r;
}

// Output-layer integrator: no leak, no threshold, no reset.
template <typename Scalar>
BasicTensor<Scalar> output_accumulate(const BasicTensor<Scalar>& u_prev,
                                      const BasicTensor<Scalar>& x) {
  if (!u_prev.same_shape(x)) {
    throw ShapeError("output_accumulate: shape mismatch " +
                     shape_to_string(u_prev.shape()) + " vs " +
                     shape_to_string(x.shape()));
  }
  BasicTensor<Scalar> out = u_prev;
  out.array() += x.array();
  return out;
}

// Clamped tanh ramp from 0 to 1 over [0, 1], centred at 1/2.
template <typename Scalar>
Scalar surrogate_phi(Scalar u) {
  using std::tanh;
  if (u < Scalar(0)) return Scalar(0);
  if (u > Scalar(1)) return Scalar(1);
  const Scalar scale = Scalar(1) / (Scalar(2) * tanh(Scalar(1.5)));
  return scale * tanh(Scalar(3) * (u - Scalar(0.5))) + Scalar(0.5);
}

// d surrogate_phi / du; zero on the clamped branches.
template <typename Scalar>
Scalar surrogate_grad(Scalar u) {
  using std::tanh;
  if (u < Scalar(0) || u > Scalar(1)) return Scalar(0);
  const Scalar th = tanh(Scalar(3) * (u - Scalar(0.5)));
  return Scalar(3) / (Scalar(2) * tanh(Scalar(1.5))) * (Scalar(1) - th * th);
}

}  // namespace snn_rmp

#endif  // SNN_RMP_NEURON_HPP_
