// Copyright (c) 2026, The uqdet Authors. All rights reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


#include <gtest/gtest.h>

#include "test_support.hpp"

namespace uqdet {
namespace {

LossBatch random_batch(std::mt19937_64& rng, std::size_t n) {
  std::uniform_real_distribution<double> prob(1e-3, 1.0 - 1e-3), unit(0, 1), beta(0, 0.5);
  LossBatch b;
  for (std::size_t i = 0; i < n; ++i) {
    b.probs.push_back(prob(rng));
    b.targets.push_back(unit(rng) < 0.5 ? 0 : 1);
    b.scores.push_back(unit(rng));
  }
  b.beta = beta(rng);
  return b;
}

TEST(Entropy, KnownValues) {
  EXPECT_NEAR(bernoulli_entropy(0.5), std::log(2.0), 1e-15);
  const double p = 1e-7;
  EXPECT_NEAR(bernoulli_entropy(p), -p * std::log(p) - (1 - p) * std::log(1 - p), 1e-15);
  EXPECT_NEAR(bernoulli_entropy(p), 1.71e-6, 0.01e-6);
  EXPECT_EQ(bernoulli_entropy(0.0), bernoulli_entropy(1e-7));
  for (double q : {0.01, 0.2, 0.37, 0.49}) EXPECT_NEAR(bernoulli_entropy(q), bernoulli_entropy(1 - q), 1e-15);
}

TEST(UaEntropy, SingleItem) {
  LossBatch b{{0.5}, {1}, {1.0}, 0.2, EntropySign::kLiteral};
  EXPECT_NEAR(ua_entropy_loss(b), 0.831776, 1e-6);
  EXPECT_NEAR(ua_entropy_loss(b), 1.2 * std::log(2.0), 1e-15);
}

TEST(UaEntropy, ReducesToMeanBce) {
  std::mt19937_64 rng(1);
  for (int t = 0; t < 100; ++t) {
    auto b = random_batch(rng, 1 + t % 17);
    const double bce = mean_bce(b.probs, b.targets);
    auto zero_beta = b;
    zero_beta.beta = 0;
    EXPECT_EQ(ua_entropy_loss(zero_beta), bce);
    auto zero_d = b;
    std::fill(zero_d.scores.begin(), zero_d.scores.end(), 0.0);
    EXPECT_EQ(ua_entropy_loss(zero_d), bce);
    EXPECT_EQ(loss_gradient(zero_d), loss_gradient(zero_beta));
    EXPECT_NEAR(constant_entropy_loss(b.probs, b.targets, 0.0), bce, 1e-12);
    EXPECT_NEAR(focal_loss(b.probs, b.targets, 0.0), bce, 1e-12);
  }
}

TEST(UaEntropy, SignModesDifferByTwiceTheTerm) {
  std::mt19937_64 rng(2);
  for (int t = 0; t < 100; ++t) {
    auto b = random_batch(rng, 1 + t % 9);
    auto m = b;
    m.sign = EntropySign::kMaxEntropy;
    EXPECT_NEAR(ua_entropy_loss(b) - ua_entropy_loss(m), 2 * b.beta * mean_weighted_entropy(b), 1e-12);
  }
}

TEST(UaEntropy, MonotoneInBeta) {
  std::mt19937_64 rng(3);
  for (int t = 0; t < 50; ++t) {
    auto b = random_batch(rng, 8);
    auto lo = b, hi = b;
    lo.beta = 0.1;
    hi.beta = 0.4;
    EXPECT_LE(ua_entropy_loss(lo), ua_entropy_loss(hi));
    lo.sign = hi.sign = EntropySign::kMaxEntropy;
    EXPECT_GE(ua_entropy_loss(lo), ua_entropy_loss(hi));
  }
}

TEST(UaEntropy, PermutationInvariant) {
  std::mt19937_64 rng(4);
  auto b = random_batch(rng, 30);
  std::vector<std::size_t> perm(30);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  LossBatch p = b;
  for (std::size_t i = 0; i < 30; ++i) {
    p.probs[i] = b.probs[perm[i]];
    p.targets[i] = b.targets[perm[i]];
    p.scores[i] = b.scores[perm[i]];
  }
  EXPECT_NEAR(ua_entropy_loss(p), ua_entropy_loss(b), 1e-12);
  EXPECT_NEAR(focal_loss(p.probs, p.targets, 2.0), focal_loss(b.probs, b.targets, 2.0), 1e-12);
  EXPECT_NEAR(constant_entropy_loss(p.probs, p.targets, 0.3),
              constant_entropy_loss(b.probs, b.targets, 0.3), 1e-12);
}

TEST(UaEntropy, LengthMismatchAndBadTargets) {
  LossBatch b{{0.5, 0.4}, {1}, {1.0, 0.0}, 0.2, EntropySign::kLiteral};
  EXPECT_THROW(ua_entropy_loss(b), InvalidArgumentError);
  LossBatch c{{0.5}, {2}, {1.0}, 0.2, EntropySign::kLiteral};
  EXPECT_THROW(ua_entropy_loss(c), InvalidArgumentError);
  EXPECT_THROW(ua_entropy_loss(LossBatch{}), InvalidArgumentError);
}

TEST(ConstantEntropy, EqualsUnitScores) {
  std::mt19937_64 rng(5);
  auto b = random_batch(rng, 12);
  auto ones = b;
  std::fill(ones.scores.begin(), ones.scores.end(), 1.0);
  EXPECT_EQ(constant_entropy_loss(b.probs, b.targets, b.beta), ua_entropy_loss(ones));
  double mean_h = 0;
  for (double p : b.probs) mean_h += bernoulli_entropy(p);
  mean_h /= 12;
  EXPECT_NEAR(constant_entropy_loss(b.probs, b.targets, 0.4) - constant_entropy_loss(b.probs, b.targets, 0.2),
              0.2 * mean_h, 1e-12);
}

TEST(Focal, KnownValues) {
  const std::vector<double> half{0.5};
  const std::vector<int> pos{1};
  EXPECT_NEAR(focal_loss(half, pos, 2.0), 0.25 * std::log(2.0), 1e-15);
  EXPECT_NEAR(focal_loss(half, pos, 2.0), 0.173287, 1e-6);
  EXPECT_NEAR(focal_loss(std::vector<double>{1.0}, pos, 2.0), 0.0, 1e-12);
  EXPECT_NEAR(focal_loss(std::vector<double>{0.0}, std::vector<int>{0}, 2.0), 0.0, 1e-12);
  EXPECT_THROW(focal_loss(half, pos, -1.0), InvalidArgumentError);
}

TEST(Gradient, BceOnlyPositiveTargets) {
  LossBatch b{{0.2, 0.7, 0.9}, {1, 1, 1}, {0.3, 0.5, 1.0}, 0.0, EntropySign::kLiteral};
  const auto g = loss_gradient(b);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(g[i], -1.0 / (3 * b.probs[i]), 1e-15);
}

// Relative error with a 1e-4 denominator floor: near a zero of the gradient
// the central difference is limited by cancellation (~1e-10 absolute).
double rel_err(double a, double b) { return std::abs(a - b) / std::max(std::abs(b), 1e-4); }

TEST(Gradient, MatchesCentralDifferences) {
  std::mt19937_64 rng(6);
  constexpr double h = 1e-6;
  for (int t = 0; t < 200; ++t) {
    auto b = random_batch(rng, 1 + t % 7);
    if (t % 2) b.sign = EntropySign::kMaxEntropy;
    const auto g = loss_gradient(b);
    const auto fg = focal_gradient(b.probs, b.targets, 2.0);
    for (std::size_t i = 0; i < b.probs.size(); ++i) {
      auto up = b, dn = b;
      up.probs[i] += h;
      dn.probs[i] -= h;
      const double fd = (ua_entropy_loss(up) - ua_entropy_loss(dn)) / (2 * h);
      EXPECT_LT(rel_err(g[i], fd), 1e-5) << g[i] << " vs " << fd;
      const double ffd =
          (focal_loss(up.probs, up.targets, 2.0) - focal_loss(dn.probs, dn.targets, 2.0)) / (2 * h);
      EXPECT_LT(rel_err(fg[i], ffd), 1e-5) << fg[i] << " vs " << ffd;
    }
  }
}

TEST(Gradient, ZeroWhereClamped) {
  LossBatch b{{0.0, 1.0}, {1, 0}, {1.0, 1.0}, 0.2, EntropySign::kLiteral};
  EXPECT_EQ(loss_gradient(b), (std::vector<double>{0.0, 0.0}));
  EXPECT_TRUE(std::isfinite(ua_entropy_loss(b)));
}

}  // namespace
}  // namespace uqdet
