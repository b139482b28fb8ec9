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

// Binary classification losses weighted by per-object uncertainty.
//
//   BCE_j = -(c_j log f_j + (1 - c_j) log(1 - f_j))
//   H_j   = -f_j log f_j - (1 - f_j) log(1 - f_j)
//   L     = mean_j BCE_j + s * beta * mean_j(d_j * H_j)
//
// with s = +1 in literal mode and s = -1 in max-entropy mode. All logs are
// natural; probabilities are clamped to [1e-7, 1 - 1e-7].

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "uqdet/error.hpp"

namespace uqdet {

inline constexpr double kProbClamp = 1e-7;

enum class EntropySign {
  kLiteral,     // + beta * d * H: entropy penalty
  kMaxEntropy,  // - beta * d * H: entropy bonus
};

/// Beta presets for the YOLOX and Deformable DETR training recipes.
inline constexpr double kBetaYolox = 0.2;
inline constexpr double kBetaDeformableDetr = 0.3;

struct LossBatch {
  std::vector<double> probs;
  std::vector<int> targets;  // 0 or 1
  std::vector<double> scores;
  double beta = kBetaYolox;
  EntropySign sign = EntropySign::kLiteral;
};

inline double clamp_prob(double p) { return std::clamp(p, kProbClamp, 1.0 - kProbClamp); }

inline double bernoulli_entropy(double prob) {
  const double p = clamp_prob(prob);
  return -p * std::log(p) - (1.0 - p) * std::log1p(-p);
}

namespace detail {

inline void check_lengths(std::size_t probs, std::size_t targets, std::size_t scores) {
  if (probs == 0) throw InvalidArgumentError("loss: empty batch");
  if (probs != targets || probs != scores) {
    throw InvalidArgumentError("loss: probs/targets/scores length mismatch (" +
                               std::to_string(probs) + "/" + std::to_string(targets) + "/" +
                               std::to_string(scores) + ")");
  }
}

inline void check_target(int c) {
  if (c != 0 && c != 1) throw InvalidArgumentError("loss: targets must be 0 or 1");
}

inline double bce(double f, int c) {
  return c == 1 ? -std::log(f) : -std::log1p(-f);
}

inline double sign_of(EntropySign s) { return s == EntropySign::kLiteral ? 1.0 : -1.0; }

}  // namespace detail

inline double mean_bce(std::span<const double> probs, std::span<const int> targets) {
  detail::check_lengths(probs.size(), targets.size(), targets.size());
  double s = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    detail::check_target(targets[i]);
    s += detail::bce(clamp_prob(probs[i]), targets[i]);
  }
  return s / static_cast<double>(probs.size());
}

/// mean(d * H) over the batch.
inline double mean_weighted_entropy(const LossBatch& b) {
  detail::check_lengths(b.probs.size(), b.targets.size(), b.scores.size());
  double s = 0.0;
  for (std::size_t i = 0; i < b.probs.size(); ++i) s += b.scores[i] * bernoulli_entropy(b.probs[i]);
  return s / static_cast<double>(b.probs.size());
}

inline double ua_entropy_loss(const LossBatch& b) {
  detail::check_lengths(b.probs.size(), b.targets.size(), b.scores.size());
  if (b.beta < 0) throw InvalidArgumentError("loss: beta must be >= 0");
  const double n = static_cast<double>(b.probs.size());
  double ce = 0.0, reg = 0.0;
  for (std::size_t i = 0; i < b.probs.size(); ++i) {
    detail::check_target(b.targets[i]);
    const double f = clamp_prob(b.probs[i]);
    ce += detail::bce(f, b.targets[i]);
    reg += b.scores[i] * bernoulli_entropy(f);
  }
  // Summed separately so that beta = 0 or d = 0 reproduces mean BCE bit for bit.
  return ce / n + detail::sign_of(b.sign) * b.beta * (reg / n);
}

/// The uncertainty-weighted loss with every score fixed to 1.
inline double constant_entropy_loss(std::span<const double> probs, std::span<const int> targets,
                                    double beta, EntropySign sign = EntropySign::kLiteral) {
  LossBatch b{{probs.begin(), probs.end()},
              {targets.begin(), targets.end()},
              std::vector<double>(probs.size(), 1.0),
              beta,
              sign};
  return ua_entropy_loss(b);
}

/// mean of -(1 - P_t)^gamma log P_t, P_t = f for c = 1 and 1 - f for c = 0.
inline double focal_loss(std::span<const double> probs, std::span<const int> targets,
                         double gamma) {
  detail::check_lengths(probs.size(), targets.size(), targets.size());
  if (gamma < 0) throw InvalidArgumentError("focal loss: gamma must be >= 0");
  double s = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    detail::check_target(targets[i]);
    const double f = clamp_prob(probs[i]);
    const double pt = targets[i] == 1 ? f : 1.0 - f;
    const double ce = detail::bce(f, targets[i]);
    s += gamma == 0.0 ? ce : std::pow(1.0 - pt, gamma) * ce;
  }
  return s / static_cast<double>(probs.size());
}

/// d loss / d prob_i of ua_entropy_loss. Zero where the clamp is active.
inline std::vector<double> loss_gradient(const LossBatch& b) {
  detail::check_lengths(b.probs.size(), b.targets.size(), b.scores.size());
  const double n = static_cast<double>(b.probs.size());
  const double s = detail::sign_of(b.sign) * b.beta;
  std::vector<double> g(b.probs.size());
  for (std::size_t i = 0; i < b.probs.size(); ++i) {
    detail::check_target(b.targets[i]);
    const double p = b.probs[i];
    if (p < kProbClamp || p > 1.0 - kProbClamp) {
      g[i] = 0.0;
      continue;
    }
    const double dce = b.targets[i] == 1 ? -1.0 / p : 1.0 / (1.0 - p);
    const double dh = std::log1p(-p) - std::log(p);
    g[i] = (dce + s * b.scores[i] * dh) / n;
  }
  return g;
}

/// d focal / d prob_i.
inline std::vector<double> focal_gradient(std::span<const double> probs,
                                          std::span<const int> targets, double gamma) {
  detail::check_lengths(probs.size(), targets.size(), targets.size());
  const double n = static_cast<double>(probs.size());
  std::vector<double> g(probs.size());
  for (std::size_t i = 0; i < probs.size(); ++i) {
    detail::check_target(targets[i]);
    const double p = probs[i];
    if (p < kProbClamp || p > 1.0 - kProbClamp) {
      g[i] = 0.0;
      continue;
    }
    const bool pos = targets[i] == 1;
    const double pt = pos ? p : 1.0 - p;
    const double q = 1.0 - pt;
    // dL/dP_t = gamma (1-P_t)^(gamma-1) log P_t - (1-P_t)^gamma / P_t
    double dpt = -std::pow(q, gamma) / pt;
    if (gamma != 0.0) dpt += gamma * std::pow(q, gamma - 1.0) * std::log(pt);
    g[i] = (pos ? dpt : -dpt) / n;
  }
  return g;
}

}  // namespace uqdet
