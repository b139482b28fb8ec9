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

// Synthetic archives with planted outliers, and the end-to-end recovery
// check run on them.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "uqdet/dataset.hpp"
#include "uqdet/density_model.hpp"
#include "uqdet/error.hpp"
#include "uqdet/feature_store.hpp"
#include "uqdet/filtering.hpp"
#include "uqdet/scoring.hpp"

namespace uqdet {

struct SynthConfig {
  std::uint32_t class_count = 4;
  std::uint32_t dim = 16;
  std::size_t per_class_count = 2000;
  double mean_separation = 4.0;  // distance between class means, in sigma
  double contamination_rate = 0.05;
  double outlier_shift = 6.0;  // in sigma
  std::uint64_t seed = 7;
};

enum class TruthLabel : std::uint8_t { kClean, kOutlier };

struct SynthTruth {
  std::map<AnnotationId, TruthLabel> labels;

  std::size_t outlier_count() const {
    return static_cast<std::size_t>(std::count_if(labels.begin(), labels.end(), [](const auto& kv) {
      return kv.second == TruthLabel::kOutlier;
    }));
  }
};

struct SynthData {
  FeatureArchive archive;
  DatasetIndex index;
  SynthTruth truth;
  std::map<CategoryId, std::vector<double>> class_means;
};

/// Deterministic Gaussian sampler on top of mt19937_64. The standard
/// distributions are implementation-defined, so they are avoided here.
class NormalSampler {
 public:
  explicit NormalSampler(std::uint64_t seed) : rng_(seed) {}

  double uniform() {  // [0, 1)
    return static_cast<double>(rng_() >> 11) * 0x1.0p-53;
  }

  double normal() {
    if (cached_) {
      cached_ = false;
      return spare_;
    }
    const double u1 = 1.0 - uniform();  // (0, 1]
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double t = 2.0 * 3.14159265358979323846 * u2;
    spare_ = r * std::sin(t);
    cached_ = true;
    return r * std::cos(t);
  }

  std::uint64_t below(std::uint64_t n) { return detail::uniform_below(rng_, n); }

 private:
  std::mt19937_64 rng_;
  double spare_ = 0.0;
  bool cached_ = false;
};

inline void validate(const SynthConfig& c) {
  if (c.class_count < 1) throw InvalidArgumentError("synth: class_count must be >= 1");
  if (c.dim < 1) throw InvalidArgumentError("synth: dim must be >= 1");
  if (c.per_class_count < 1) throw InvalidArgumentError("synth: per_class_count must be >= 1");
  if (!(c.contamination_rate >= 0.0 && c.contamination_rate < 1.0)) {
    throw InvalidArgumentError("synth: contamination_rate must lie in [0, 1)");
  }
  if (!std::isfinite(c.mean_separation) || !std::isfinite(c.outlier_shift)) {
    throw InvalidArgumentError("synth: separation and shift must be finite");
  }
}

/// Per class: clean vectors ~ N(mu_k, I); round(rate * n) of them, at random
/// positions, are moved by outlier_shift along a random unit direction.
/// Class means sit on distinct coordinate axes (random directions when
/// K > dim) with pairwise distance mean_separation.
inline SynthData generate(const SynthConfig& config) {
  validate(config);
  NormalSampler rng(config.seed);
  SynthData out;
  const std::uint32_t K = config.class_count, D = config.dim;
  const std::size_t n = config.per_class_count;
  const double radius = config.mean_separation / std::sqrt(2.0);

  auto unit = [&] {
    std::vector<double> u(D);
    double norm = 0.0;
    do {
      norm = 0.0;
      for (auto& x : u) {
        x = rng.normal();
        norm += x * x;
      }
    } while (norm == 0.0);
    norm = std::sqrt(norm);
    for (auto& x : u) x /= norm;
    return u;
  };

  for (std::uint32_t k = 0; k < K; ++k) {
    std::vector<double> mu(D, 0.0);
    if (K <= D) {
      mu[k] = radius;
    } else {
      auto u = unit();
      for (std::uint32_t i = 0; i < D; ++i) mu[i] = radius * u[i];
    }
    out.class_means[k + 1] = std::move(mu);
    out.index.categories.add(Category{k + 1, "class_" + std::to_string(k + 1), nlohmann::json::object()});
  }

  constexpr std::size_t kPerImage = 10;
  constexpr std::uint32_t kImgW = 640, kImgH = 480;
  const std::size_t total = static_cast<std::size_t>(K) * n;
  for (std::size_t i = 0; i < (total + kPerImage - 1) / kPerImage; ++i) {
    out.index.images.push_back(ImageRecord{i + 1, kImgW, kImgH,
                                           "synth_" + std::to_string(i + 1) + ".jpg",
                                           nlohmann::json::object()});
  }

  const auto outliers_per_class =
      static_cast<std::size_t>(std::llround(config.contamination_rate * static_cast<double>(n)));
  for (std::uint32_t k = 0; k < K; ++k) {
    const CategoryId cat = k + 1;
    const auto& mu = out.class_means[cat];
    // Partial Fisher-Yates picks which positions carry outliers.
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t i = 0; i < outliers_per_class; ++i) {
      std::swap(order[i], order[i + rng.below(n - i)]);
    }
    std::vector<bool> is_outlier(n, false);
    for (std::size_t i = 0; i < outliers_per_class; ++i) is_outlier[order[i]] = true;

    for (std::size_t i = 0; i < n; ++i) {
      const AnnotationId id = static_cast<AnnotationId>(k) * n + i + 1;
      PooledFeature f;
      f.annotation_id = id;
      f.category_id = cat;
      f.vector.resize(D);
      std::vector<double> v(D);
      for (std::uint32_t d = 0; d < D; ++d) v[d] = mu[d] + rng.normal();
      if (is_outlier[i]) {
        const auto u = unit();
        for (std::uint32_t d = 0; d < D; ++d) v[d] += config.outlier_shift * u[d];
      }
      for (std::uint32_t d = 0; d < D; ++d) f.vector[d] = static_cast<float>(v[d]);
      out.archive.add(std::move(f));
      out.truth.labels[id] = is_outlier[i] ? TruthLabel::kOutlier : TruthLabel::kClean;

      ObjectAnnotation a;
      a.id = id;
      a.image_id = (id - 1) / kPerImage + 1;
      a.category_id = cat;
      const double slot = static_cast<double>((id - 1) % kPerImage);
      a.bbox = BBox{slot * 60.0 + 5.0, 40.0 + 30.0 * static_cast<double>(k % 10), 50.0, 40.0};
      a.area = a.bbox.area();
      out.index.annotations.push_back(std::move(a));
    }
  }
  if (out.archive.dim == 0) out.archive.dim = D;
  out.archive.provenance = "synth seed=" + std::to_string(config.seed);
  return out;
}

/// Area under the ROC of `score` as an outlier detector (Mann-Whitney U
/// with average ranks for ties). NaN when either class is absent.
inline double evaluate_auroc(const ScoreTable& table, const SynthTruth& truth) {
  if (table.records.size() != truth.labels.size()) {
    throw IntegrityError("auroc: score table has " + std::to_string(table.records.size()) +
                             " records but truth has " + std::to_string(truth.labels.size()),
                         {});
  }
  std::vector<std::pair<double, bool>> v;
  v.reserve(table.records.size());
  for (const auto& r : table.records) {
    auto it = truth.labels.find(r.annotation_id);
    if (it == truth.labels.end()) {
      throw IntegrityError("auroc: annotation " + std::to_string(r.annotation_id) +
                               " missing from truth",
                           {r.annotation_id});
    }
    v.emplace_back(r.score, it->second == TruthLabel::kOutlier);
  }
  std::sort(v.begin(), v.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  double rank_sum = 0.0;
  std::size_t pos = 0;
  for (std::size_t i = 0; i < v.size();) {
    std::size_t j = i;
    while (j < v.size() && v[j].first == v[i].first) ++j;
    const double avg_rank = 0.5 * static_cast<double>(i + 1 + j);  // mean of ranks i+1..j
    for (std::size_t t = i; t < j; ++t) {
      if (v[t].second) {
        rank_sum += avg_rank;
        ++pos;
      }
    }
    i = j;
  }
  const std::size_t neg = v.size() - pos;
  if (pos == 0 || neg == 0) return std::numeric_limits<double>::quiet_NaN();
  const double np = static_cast<double>(pos), nn = static_cast<double>(neg);
  return (rank_sum - np * (np + 1.0) / 2.0) / (np * nn);
}

struct RecoveryReport {
  double auroc = 0.0;
  double p = 1.0;
  std::size_t outliers = 0;
  std::size_t clean = 0;
  std::size_t dropped_outliers = 0;
  std::size_t dropped_clean = 0;

  std::size_t kept_outliers() const { return outliers - dropped_outliers; }
  std::size_t kept_clean() const { return clean - dropped_clean; }
  /// Fraction of planted outliers that the noise filter dropped.
  double outlier_recall() const {
    return outliers == 0 ? std::numeric_limits<double>::quiet_NaN()
                         : static_cast<double>(dropped_outliers) / static_cast<double>(outliers);
  }
};

/// generate -> fit -> score -> global noise filter at `p` (default
/// 1 - contamination_rate).
inline RecoveryReport recovery_experiment(const SynthConfig& config,
                                          std::optional<double> p = std::nullopt) {
  const auto data = generate(config);
  const auto model = fit(data.archive);
  const auto table = score_dataset(model, data.archive);
  RecoveryReport rep;
  rep.p = p ? *p : 1.0 - config.contamination_rate;
  rep.auroc = evaluate_auroc(table, data.truth);
  const auto filtered = filter_noise_global(table, rep.p);
  rep.outliers = data.truth.outlier_count();
  rep.clean = data.truth.labels.size() - rep.outliers;
  for (auto id : filtered.dropped) {
    if (data.truth.labels.at(id) == TruthLabel::kOutlier) {
      ++rep.dropped_outliers;
    } else {
      ++rep.dropped_clean;
    }
  }
  return rep;
}

inline std::string recovery_csv(const SynthConfig& c, const RecoveryReport& r) {
  std::string s =
      "class_count,dim,per_class_count,mean_separation,contamination_rate,outlier_shift,seed,"
      "p,auroc,outliers,clean,dropped_outliers,dropped_clean,outlier_recall\n";
  s += std::to_string(c.class_count) + "," + std::to_string(c.dim) + "," +
       std::to_string(c.per_class_count) + "," + io::format_double(c.mean_separation) + "," +
       io::format_double(c.contamination_rate) + "," + io::format_double(c.outlier_shift) + "," +
       std::to_string(c.seed) + "," + io::format_double(r.p) + "," +
       io::format_double(r.auroc) + "," + std::to_string(r.outliers) + "," +
       std::to_string(r.clean) + "," + std::to_string(r.dropped_outliers) + "," +
       std::to_string(r.dropped_clean) + "," + io::format_double(r.outlier_recall()) + "\n";
  return s;
}

}  // namespace uqdet
