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

#include "snn_rmp/loss.hpp"

#include <string>

namespace snn_rmp {

void LossConfig::validate() const {
  if (!(p > 0.0)) throw ParameterError("p must be > 0");
  if (!(k >= 0.0)) throw ParameterError("k must be >= 0");
  if (total_epochs < 1) throw ParameterError("total epochs must be >= 1");
}

Index MembraneTape::element_count() const {
  Index n = 0;
  for (const auto& r : records) n += r.u_pre.size();
  return n;
}

double quant_error_sum(const MembraneTape& tape, double v_th, double p) {
  double sum = 0.0;
  for (const auto& r : tape.records) {
    for (Index i = 0; i < r.u_pre.size(); ++i) {
      sum += quant_error(r.u_pre[i], v_th, p);
    }
  }
  return sum;
}

double rmp_loss(const MembraneTape& tape, double v_th, double p) {
  if (tape.empty()) throw UsageError("rmp_loss: empty membrane tape");
  return quant_error_sum(tape, v_th, p) / static_cast<double>(tape.element_count());
}

std::vector<Tensor> rmp_loss_grad(const MembraneTape& tape, double v_th,
                                  double p) {
  if (tape.empty()) throw UsageError("rmp_loss_grad: empty membrane tape");
  const double inv_e = 1.0 / static_cast<double>(tape.element_count());
  std::vector<Tensor> grads;
  grads.reserve(tape.records.size());
  for (const auto& r : tape.records) {
    Tensor g = zeros_like(r.u_pre);
    for (Index i = 0; i < g.size(); ++i) {
      const double u = r.u_pre[i];
      const double diff = u - (u >= v_th ? 1.0 : 0.0);
      if (diff == 0.0) continue;  // minimum of q; also the p < 1 subgradient
      if (p == 2.0) {
        g[i] = 2.0 * diff * inv_e;
      } else {
        const double mag = p * std::pow(std::abs(diff), p - 1.0);
        g[i] = (diff > 0.0 ? mag : -mag) * inv_e;
      }
    }
    grads.push_back(std::move(g));
  }
  return grads;
}

double lambda_schedule(int n, const LossConfig& cfg) {
  const int big_n = cfg.total_epochs;
  if (n < 0 || n > big_n) {
    throw ParameterError("lambda_schedule: epoch " + std::to_string(n) +
                         " outside [0, " + std::to_string(big_n) + "]");
  }
  // n <= N/2 without fractional arithmetic.
  if (2 * n <= big_n) return 2.0 * cfg.k * n / big_n;
  return 2.0 * cfg.k * (big_n - n) / big_n;
}

CrossEntropy cross_entropy(const Tensor& logits, std::span<const int> labels) {
  if (logits.rank() != 2) {
    throw ShapeError("cross_entropy: logits must be [B, classes], got " +
                     shape_to_string(logits.shape()));
  }
  const Index batch = logits.dim(0), classes = logits.dim(1);
  if (static_cast<Index>(labels.size()) != batch) {
    throw ShapeError("cross_entropy: " + std::to_string(labels.size()) +
                     " labels for batch of " + std::to_string(batch));
  }
  CrossEntropy out{0.0, zeros_like(logits)};
  auto z = logits.matrix();
  auto d = out.dlogits.matrix();
  for (Index b = 0; b < batch; ++b) {
    const int y = labels[static_cast<size_t>(b)];
    if (y < 0 || y >= classes) {
      throw DataError("cross_entropy: label " + std::to_string(y) +
                      " outside [0, " + std::to_string(classes) + ")");
    }
    const double zmax = z.row(b).maxCoeff();
    const auto shifted = (z.row(b).array() - zmax).eval();
    const double lse = std::log(shifted.exp().sum());
    out.loss += lse - shifted[y];
    d.row(b) = (shifted - lse).exp().matrix();
    d(b, y) -= 1.0;
  }
  out.loss /= static_cast<double>(batch);
  out.dlogits.array() /= static_cast<double>(batch);
  return out;
}

}  // namespace snn_rmp
