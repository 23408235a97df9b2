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

#ifndef SNN_RMP_LOSS_HPP_
#define SNN_RMP_LOSS_HPP_

#include <cmath>
#include <span>
#include <vector>

#include "snn_rmp/tensor.hpp"

namespace snn_rmp {

struct LossConfig {
  double p = 2.0;          // norm exponent of the quantization error
  double k = 0.1;          // peak of the regularizer coefficient
  int total_epochs = 1;    // N

  void validate() const;
};

// Pre-reset membrane potentials of one spiking layer at one timestep.
struct MembraneRecord {
  int layer = 0;
  int timestep = 0;
  Tensor u_pre;
};

struct MembraneTape {
  std::vector<MembraneRecord> records;

  bool empty() const { return records.empty(); }
  Index element_count() const;
};

// |target - u|^p with target = 1 if u >= v_th else 0.
inline double quant_error(double u, double v_th, double p) {
  const double target = u >= v_th ? 1.0 : 0.0;
  const double d = std::abs(target - u);
  return p == 2.0 ? d * d : std::pow(d, p);
}

// Sum of quant_error over every recorded element, records in order.
double quant_error_sum(const MembraneTape& tape, double v_th, double p);

// Mean quantization error over every element of every record.
double rmp_loss(const MembraneTape& tape, double v_th, double p);

// d rmp_loss / d u for each record (same order and shapes as the tape). The
// spike target is held constant, so the gradient is
// p |u - target|^(p-1) sign(u - target) / E.
std::vector<Tensor> rmp_loss_grad(const MembraneTape& tape, double v_th,
                                  double p);

// Triangular coefficient: 2k n/N up to the midpoint, 2k (N - n)/N after.
// The second branch uses the integer N - n so that lambda(n) == lambda(N - n)
// holds bit for bit.
double lambda_schedule(int n, const LossConfig& cfg);

struct CrossEntropy {
  double loss = 0.0;
  Tensor dlogits;
};

// Mean softmax cross-entropy over the batch; dlogits = (softmax - onehot)/B.
CrossEntropy cross_entropy(const Tensor& logits, std::span<const int> labels);

inline double total_loss(double ce, double rmp, int n, const LossConfig& cfg) {
  return ce + lambda_schedule(n, cfg) * rmp;
}

}  // namespace snn_rmp

#endif  // SNN_RMP_LOSS_HPP_
