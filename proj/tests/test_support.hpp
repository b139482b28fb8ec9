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

// Shared fixtures and naive reference implementations for the test suites.
// The references use plain loops over std::vector and never touch Eigen.

#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <random>
#include <string>
#include <unistd.h>
#include <vector>

#include "uqdet/uqdet.hpp"

namespace uqdet::testing {

class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("uqdet_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline FeatureMap constant_map(std::uint32_t image_id, std::uint32_t gh, std::uint32_t gw,
                               std::vector<float> value) {
  FeatureMap m;
  m.image_id = image_id;
  m.grid_h = gh;
  m.grid_w = gw;
  m.dim = static_cast<std::uint32_t>(value.size());
  for (std::uint32_t i = 0; i < gh * gw; ++i) m.data.insert(m.data.end(), value.begin(), value.end());
  return m;
}

/// Random archive: `classes` classes with `per_class` vectors each.
inline FeatureArchive random_archive(std::mt19937_64& rng, std::uint32_t classes,
                                     std::size_t per_class, std::uint32_t dim) {
  std::normal_distribution<double> nd(0.0, 1.0);
  FeatureArchive a;
  a.dim = dim;
  AnnotationId id = 1;
  for (std::uint32_t k = 1; k <= classes; ++k) {
    for (std::size_t i = 0; i < per_class; ++i) {
      PooledFeature f;
      f.annotation_id = id++;
      f.category_id = k;
      for (std::uint32_t d = 0; d < dim; ++d) {
        f.vector.push_back(static_cast<float>(3.0 * k + nd(rng) * (1.0 + 0.2 * d)));
      }
      a.add(std::move(f));
    }
  }
  return a;
}

struct NaiveFit {
  std::map<CategoryId, std::vector<double>> means;
  std::vector<std::vector<double>> cov;
};

/// Class means and pooled within-class covariance (divided by N), by a
/// direct double loop over every vector.
inline NaiveFit naive_fit(const FeatureArchive& a) {
  const std::size_t D = a.dim;
  NaiveFit out;
  std::map<CategoryId, std::size_t> counts;
  for (const auto& [id, e] : a.entries) {
    auto& m = out.means[e.category_id];
    m.resize(D, 0.0);
    for (std::size_t d = 0; d < D; ++d) m[d] += e.vector[d];
    ++counts[e.category_id];
  }
  for (auto& [k, m] : out.means) {
    for (auto& x : m) x /= static_cast<double>(counts[k]);
  }
  out.cov.assign(D, std::vector<double>(D, 0.0));
  for (const auto& [id, e] : a.entries) {
    const auto& m = out.means[e.category_id];
    for (std::size_t i = 0; i < D; ++i) {
      for (std::size_t j = 0; j < D; ++j) {
        out.cov[i][j] += (e.vector[i] - m[i]) * (e.vector[j] - m[j]);
      }
    }
  }
  for (auto& row : out.cov) {
    for (auto& x : row) x /= static_cast<double>(a.size());
  }
  return out;
}

/// (v - mu)^T S^{-1} (v - mu) by Gauss-Jordan elimination on [S | v - mu].
inline double naive_mahalanobis(std::vector<std::vector<double>> S, const std::vector<double>& v,
                                const std::vector<double>& mu) {
  const std::size_t n = S.size();
  std::vector<double> diff(n), x(n);
  for (std::size_t i = 0; i < n; ++i) diff[i] = v[i] - mu[i];
  x = diff;
  for (std::size_t c = 0; c < n; ++c) {
    std::size_t piv = c;
    for (std::size_t r = c + 1; r < n; ++r) {
      if (std::abs(S[r][c]) > std::abs(S[piv][c])) piv = r;
    }
    std::swap(S[c], S[piv]);
    std::swap(x[c], x[piv]);
    for (std::size_t r = 0; r < n; ++r) {
      if (r == c) continue;
      const double f = S[r][c] / S[c][c];
      for (std::size_t k = c; k < n; ++k) S[r][k] -= f * S[c][k];
      x[r] -= f * x[c];
    }
  }
  double q = 0.0;
  for (std::size_t i = 0; i < n; ++i) q += diff[i] * x[i] / S[i][i];
  return q;
}

inline ScoreTable table_from_scores(const std::vector<double>& scores, CategoryId cat = 1,
                                    AnnotationId first_id = 1) {
  ScoreTable t;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    t.records.push_back(ScoreRecord{first_id + i, cat, 1.0, scores[i]});
  }
  return t;
}

inline std::string minimal_dataset_json() {
  return R"({"info":{"year":2017},
    "images":[{"id":1,"width":640,"height":480,"file_name":"a.jpg"}],
    "annotations":[{"id":10,"image_id":1,"category_id":3,"bbox":[10,20,100,50],
                    "area":5000,"iscrowd":0,"segmentation":[[10,20,110,20,110,70,10,70]]}],
    "categories":[{"id":3,"name":"car","supercategory":"vehicle"}]})";
}

}  // namespace uqdet::testing
