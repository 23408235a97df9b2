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
#include <vector>

#include <gtest/gtest.h>

#include "snn_rmp/loss.hpp"

namespace snn_rmp {
namespace {

MembraneTape tape_of(std::vector<Tensor> records) {
  MembraneTape tape;
  int t = 0;
  for (auto& r : records) tape.records.push_back({0, t++, std::move(r)});
  return tape;
}

MembraneTape random_tape(SeededRng& rng, int records, Index width) {
  std::vector<Tensor> rs;
  for (int i = 0; i < records; ++i) {
    Tensor r({2, width}, 0.0);
    for (Index j = 0; j < r.size(); ++j) r[j] = -0.5 + 2.0 * rng.uniform();
    rs.push_back(std::move(r));
  }
  return tape_of(std::move(rs));
}

TEST(QuantError, Examples) {
  EXPECT_NEAR(quant_error(0.7, 0.5, 2.0), 0.09, 1e-15);
  EXPECT_NEAR(quant_error(0.2, 0.5, 2.0), 0.04, 1e-15);
  EXPECT_NEAR(quant_error(0.2, 0.5, 1.0), 0.2, 1e-15);
  EXPECT_EQ(quant_error(0.0, 0.5, 2.0), 0.0);
  EXPECT_EQ(quant_error(1.0, 0.5, 2.0), 0.0);
  EXPECT_EQ(quant_error(0.5, 0.5, 2.0), 0.25);
}

TEST(RmpLoss, Examples) {
  EXPECT_EQ(rmp_loss(tape_of({Tensor({4}, {0, 1, 1, 0})}), 0.5, 2.0), 0.0);
  EXPECT_NEAR(rmp_loss(tape_of({Tensor({2}, {0.7, 0.2})}), 0.5, 2.0), 0.065, 1e-15);
  EXPECT_THROW(rmp_loss(MembraneTape{}, 0.5, 2.0), UsageError);
}

TEST(RmpLoss, MatchesBruteForceMean) {
  SeededRng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const MembraneTape tape = random_tape(rng, 1 + trial % 4, 5);
    for (double p : {1.0, 2.0, 3.0}) {
      double sum = 0.0;
      long n = 0;
      for (const auto& r : tape.records) {
        for (Index i = 0; i < r.u_pre.size(); ++i) {
          const double u = r.u_pre[i];
          const double target = u >= 0.5 ? 1.0 : 0.0;
          sum += std::pow(std::abs(target - u), p);
          ++n;
        }
      }
      EXPECT_NEAR(rmp_loss(tape, 0.5, p), sum / n, 1e-14);
    }
  }
}

TEST(RmpLossGrad, Examples) {
  const auto g = rmp_loss_grad(tape_of({Tensor({1}, {0.7})}), 0.5, 2.0);
  EXPECT_NEAR(g[0][0], -0.6, 1e-15);
  const auto z = rmp_loss_grad(tape_of({Tensor({2}, {0.0, 1.0})}), 0.5, 2.0);
  EXPECT_EQ(z[0][0], 0.0);
  EXPECT_EQ(z[0][1], 0.0);
}

TEST(RmpLossGrad, MatchesFiniteDifferences) {
  SeededRng rng(12);
  const double h = 1e-6;
  for (double p : {2.0, 1.5, 3.0}) {
    MembraneTape tape = random_tape(rng, 3, 4);
    const auto g = rmp_loss_grad(tape, 0.5, p);
    for (size_t r = 0; r < tape.records.size(); ++r) {
      for (Index i = 0; i < tape.records[r].u_pre.size(); ++i) {
        double& u = tape.records[r].u_pre[i];
        if (std::abs(u - 0.5) <= 1e-3 || std::abs(u) <= 1e-3 || std::abs(u - 1) <= 1e-3) {
          continue;
        }
        const double u0 = u;
        u = u0 + h;
        const double fp = rmp_loss(tape, 0.5, p);
        u = u0 - h;
        const double fm = rmp_loss(tape, 0.5, p);
        u = u0;
        EXPECT_NEAR(g[r][i], (fp - fm) / (2 * h), 1e-6) << "p=" << p;
      }
    }
  }
}

TEST(RmpLossGrad, DescentPullsToSpikeValues) {
  SeededRng rng(99);
  Tensor u({1000}, 0.0);
  for (Index i = 0; i < u.size(); ++i) {
    do {
      u[i] = rng.uniform();
    } while (std::abs(u[i] - 0.5) < 1e-3);
  }
  MembraneTape tape = tape_of({u});
  const double step = 100.0;  // E = 1000 elements share the mean
  for (int it = 0; it < 200; ++it) {
    const auto g = rmp_loss_grad(tape, 0.5, 2.0);
    tape.records[0].u_pre.array() -= step * g[0].array();
  }
  const auto& v = tape.records[0].u_pre;
  for (Index i = 0; i < v.size(); ++i) {
    EXPECT_LT(std::min(std::abs(v[i]), std::abs(v[i] - 1.0)), 1e-3);
  }
}

TEST(LambdaSchedule, Examples) {
  const LossConfig cfg{2.0, 0.1, 400};
  EXPECT_EQ(lambda_schedule(0, cfg), 0.0);
  EXPECT_EQ(lambda_schedule(400, cfg), 0.0);
  EXPECT_EQ(lambda_schedule(200, cfg), 0.1);
  EXPECT_NEAR(lambda_schedule(100, cfg), 0.05, 1e-17);
  EXPECT_THROW(lambda_schedule(-1, cfg), ParameterError);
  EXPECT_THROW(lambda_schedule(401, cfg), ParameterError);
}

TEST(LambdaSchedule, SymmetricAndTriangular) {
  for (int big_n : {1, 2, 7, 400, 401}) {
    const LossConfig cfg{2.0, 0.1, big_n};
    for (int n = 0; n <= big_n; ++n) {
      EXPECT_EQ(lambda_schedule(n, cfg), lambda_schedule(big_n - n, cfg));
      EXPECT_LE(lambda_schedule(n, cfg), 0.1 + 1e-15);
      if (2 * (n + 1) <= big_n) {
        EXPECT_LT(lambda_schedule(n, cfg), lambda_schedule(n + 1, cfg));
      }
    }
  }
}

TEST(CrossEntropy, UniformLogits) {
  const auto ce = cross_entropy(Tensor({2, 5}, 0.3), std::vector<int>{1, 4});
  EXPECT_NEAR(ce.loss, std::log(5.0), 1e-14);
}

TEST(CrossEntropy, Saturated) {
  const auto ce = cross_entropy(Tensor({1, 2}, {10.0, -10.0}), std::vector<int>{0});
  EXPECT_NEAR(ce.loss, 0.0, 1e-4);
}

TEST(CrossEntropy, BadLabels) {
  EXPECT_THROW(cross_entropy(Tensor({1, 2}, 0.0), std::vector<int>{2}), DataError);
  EXPECT_THROW(cross_entropy(Tensor({2, 2}, 0.0), std::vector<int>{0}), ShapeError);
}

TEST(CrossEntropy, GradientMatchesFiniteDifferences) {
  SeededRng rng(5);
  const std::vector<int> labels{0, 2, 1};
  Tensor z = gauss(rng, {3, 4}, 0.0, 2.0);
  const auto ce = cross_entropy(z, labels);
  const double h = 1e-6;
  for (Index i = 0; i < z.size(); ++i) {
    const double z0 = z[i];
    z[i] = z0 + h;
    const double fp = cross_entropy(z, labels).loss;
    z[i] = z0 - h;
    const double fm = cross_entropy(z, labels).loss;
    z[i] = z0;
    EXPECT_NEAR(ce.dlogits[i], (fp - fm) / (2 * h), 1e-6);
  }
}

TEST(CrossEntropy, GradientDescentConverges) {
  Tensor z({2, 3}, 0.0);
  const std::vector<int> labels{2, 0};
  double prev = cross_entropy(z, labels).loss;
  for (int it = 0; it < 200; ++it) {
    const auto ce = cross_entropy(z, labels);
    z.array() -= 1.0 * ce.dlogits.array();
    EXPECT_LE(ce.loss, prev + 1e-15);
    prev = ce.loss;
  }
  EXPECT_LT(prev, 0.05);
}

TEST(TotalLoss, Examples) {
  const LossConfig zero_k{2.0, 0.0, 10};
  for (int n = 0; n <= 10; ++n) EXPECT_EQ(total_loss(1.3, 0.4, n, zero_k), 1.3);
  const LossConfig cfg{2.0, 0.1, 10};
  EXPECT_EQ(total_loss(1.3, 0.4, 0, cfg), 1.3);
  // lambda(n) = 0.1 at the midpoint.
  EXPECT_NEAR(total_loss(1.0, 0.2, 5, cfg), 1.02, 1e-15);
}

}  // namespace
}  // namespace snn_rmp
