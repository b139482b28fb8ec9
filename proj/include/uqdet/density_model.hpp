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

// Class-conditional Gaussians with one shared (tied) covariance.
//
// For K classes with per-class means mu_k and N objects in total,
//
//   Sigma = 1/N * sum_k sum_{j in k} (v_j - mu_k)(v_j - mu_k)^T
//
// and distances use the regularised Sigma + eps*I through its Cholesky
// factor L: M(v, k) = |L^{-1}(v - mu_k)|^2. The explicit inverse is never
// formed.

#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <numbers>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include "uqdet/error.hpp"
#include "uqdet/feature_store.hpp"
#include "uqdet/io_util.hpp"

namespace uqdet {

inline constexpr std::string_view kModelMagic = "UQGM0001";

class ClassConditionalGaussian {
 public:
  ClassConditionalGaussian() = default;

  /// Assembles a model from its statistics and factorises Sigma + eps*I.
  /// Throws SingularModelError if the regularised matrix is not positive
  /// definite.
  ClassConditionalGaussian(std::uint32_t dim, std::map<CategoryId, Eigen::VectorXd> means,
                           std::map<CategoryId, std::uint64_t> counts,
                           Eigen::MatrixXd covariance, double eps)
      : dim_(dim),
        means_(std::move(means)),
        counts_(std::move(counts)),
        covariance_(std::move(covariance)),
        eps_(eps) {
    if (covariance_.rows() != dim_ || covariance_.cols() != dim_) {
      throw FormatError("covariance is not dim x dim");
    }
    for (const auto& [k, mu] : means_) {
      if (mu.size() != dim_) {
        throw FormatError("mean of class " + std::to_string(k) + " has wrong length");
      }
    }
    if (!(eps_ >= 0.0) || !std::isfinite(eps_)) {
      throw InvalidArgumentError("regularisation eps must be finite and >= 0");
    }
    factorize();
  }

  std::uint32_t dim() const { return dim_; }
  double regularization_eps() const { return eps_; }
  const std::map<CategoryId, Eigen::VectorXd>& means() const { return means_; }
  const std::map<CategoryId, std::uint64_t>& per_class_counts() const { return counts_; }
  const Eigen::MatrixXd& covariance() const { return covariance_; }
  /// Lower-triangular L with L L^T = Sigma + eps*I.
  const Eigen::MatrixXd& precision_factor() const { return factor_; }
  double log_det() const { return log_det_; }
  bool has_class(CategoryId k) const { return means_.count(k) != 0; }

  /// (v - mu_k)^T (Sigma + eps*I)^{-1} (v - mu_k), via one triangular solve.
  template <typename T>
  double mahalanobis(std::span<const T> v, CategoryId k) const {
    const auto& mu = mean_of(k);
    if (v.size() != dim_) {
      throw FormatError("vector length " + std::to_string(v.size()) +
                        " does not match model dim " + std::to_string(dim_));
    }
    Eigen::VectorXd diff(dim_);
    for (std::uint32_t i = 0; i < dim_; ++i) diff[i] = static_cast<double>(v[i]) - mu[i];
    factor_.triangularView<Eigen::Lower>().solveInPlace(diff);
    return diff.squaredNorm();
  }

  template <typename T>
  double mahalanobis(const std::vector<T>& v, CategoryId k) const {
    return mahalanobis(std::span<const T>(v), k);
  }

  /// log N(v | mu_k, Sigma + eps*I).
  template <typename T>
  double gaussian_log_density(std::span<const T> v, CategoryId k) const {
    const double m = mahalanobis(v, k);
    return -0.5 * (dim_ * std::log(2.0 * std::numbers::pi) + log_det_ + m);
  }

  template <typename T>
  double gaussian_log_density(const std::vector<T>& v, CategoryId k) const {
    return gaussian_log_density(std::span<const T>(v), k);
  }

 private:
  const Eigen::VectorXd& mean_of(CategoryId k) const {
    auto it = means_.find(k);
    if (it == means_.end()) {
      throw UnknownClassError("class " + std::to_string(k) + " is not fitted", {k});
    }
    return it->second;
  }

  void factorize() {
    Eigen::MatrixXd reg = covariance_;
    reg.diagonal().array() += eps_;
    Eigen::LLT<Eigen::MatrixXd> llt(reg);
    bool ok = llt.info() == Eigen::Success;
    if (ok) {
      factor_ = llt.matrixL();
      log_det_ = 0.0;
      for (std::uint32_t i = 0; i < dim_; ++i) {
        const double d = factor_(i, i);
        if (!(d > 0.0) || !std::isfinite(d)) {
          ok = false;
          break;
        }
        log_det_ += 2.0 * std::log(d);
      }
    }
    if (!ok) {
      double min_eig = std::nan("");
      if (reg.allFinite()) {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(reg, Eigen::EigenvaluesOnly);
        if (es.info() == Eigen::Success) min_eig = es.eigenvalues().minCoeff();
      }
      std::ostringstream os;
      os << "regularised covariance is not positive definite (eps=" << eps_
         << ", smallest eigenvalue ~ " << min_eig << ")";
      throw SingularModelError(os.str(), min_eig);
    }
  }

  std::uint32_t dim_ = 0;
  std::map<CategoryId, Eigen::VectorXd> means_;
  std::map<CategoryId, std::uint64_t> counts_;
  Eigen::MatrixXd covariance_;
  double eps_ = 0.0;
  Eigen::MatrixXd factor_;
  double log_det_ = 0.0;
};

struct FitOptions {
  /// Overrides the default eps = max(1e-6 * trace(Sigma) / dim, 1e-12).
  std::optional<double> eps;
  /// Categories expected to be present; any with no vectors is reported.
  std::vector<CategoryId> expected_categories;
};

struct FitReport {
  std::vector<CategoryId> empty_categories;
  std::vector<std::string> warnings;
};

inline double default_regularization(const Eigen::MatrixXd& cov) {
  const double d = static_cast<double>(cov.rows());
  return std::max(1e-6 * cov.trace() / d, 1e-12);
}

/// Two passes over the archive in ascending annotation id: per-class means,
/// then the pooled within-class scatter divided by the total count.
inline ClassConditionalGaussian fit(const FeatureArchive& archive,
                                    const FitOptions& options = {},
                                    FitReport* report = nullptr) {
  if (archive.empty()) throw InvalidArgumentError("fit: archive is empty");
  const std::uint32_t dim = archive.dim;

  std::map<CategoryId, Eigen::VectorXd> sums;
  std::map<CategoryId, std::uint64_t> counts;
  for (const auto& [id, e] : archive.entries) {
    auto [it, inserted] = sums.try_emplace(e.category_id, Eigen::VectorXd::Zero(dim));
    for (std::uint32_t i = 0; i < dim; ++i) it->second[i] += e.vector[i];
    ++counts[e.category_id];
  }
  std::map<CategoryId, Eigen::VectorXd> means;
  for (auto& [k, s] : sums) means.emplace(k, s / static_cast<double>(counts[k]));

  if (report) {
    *report = FitReport{};
    for (CategoryId k : options.expected_categories) {
      if (!counts.count(k)) {
        report->empty_categories.push_back(k);
        report->warnings.push_back("category " + std::to_string(k) +
                                   " has no vectors; skipped");
      }
    }
  }

  constexpr Eigen::Index kChunk = 1024;
  Eigen::MatrixXd scatter = Eigen::MatrixXd::Zero(dim, dim);
  Eigen::MatrixXd block(dim, kChunk);
  Eigen::Index filled = 0;
  auto flush = [&] {
    if (filled == 0) return;
    scatter.selfadjointView<Eigen::Lower>().rankUpdate(block.leftCols(filled));
    filled = 0;
  };
  for (const auto& [id, e] : archive.entries) {
    const auto& mu = means.at(e.category_id);
    for (std::uint32_t i = 0; i < dim; ++i) block(i, filled) = e.vector[i] - mu[i];
    if (++filled == kChunk) flush();
  }
  flush();
  scatter.triangularView<Eigen::StrictlyUpper>() = scatter.transpose();
  scatter /= static_cast<double>(archive.size());

  const double eps = options.eps ? *options.eps : default_regularization(scatter);
  return ClassConditionalGaussian(dim, std::move(means), std::move(counts),
                                  std::move(scatter), eps);
}

/// Binary model file; the trailing word is FNV-1a 64 over all preceding
/// bytes.
inline std::vector<char> encode_model(const ClassConditionalGaussian& m) {
  io::ByteWriter w;
  w.bytes(kModelMagic);
  w.put<std::uint32_t>(m.dim());
  w.put<std::uint32_t>(static_cast<std::uint32_t>(m.means().size()));
  w.put<double>(m.regularization_eps());
  for (const auto& [k, mu] : m.means()) {
    w.put<std::uint32_t>(k);
    w.put<std::uint64_t>(m.per_class_counts().at(k));
    w.put_all<double>(std::span<const double>(mu.data(), mu.size()));
  }
  // Symmetric, so row- and column-major agree.
  const auto& cov = m.covariance();
  for (Eigen::Index r = 0; r < cov.rows(); ++r) {
    for (Eigen::Index c = 0; c < cov.cols(); ++c) w.put<double>(cov(r, c));
  }
  const auto sum = io::fnv1a64(w.buffer());
  w.put<std::uint64_t>(sum);
  return w.buffer();
}

inline std::uint64_t model_checksum(const ClassConditionalGaussian& m) {
  const auto bytes = encode_model(m);
  std::uint64_t sum;
  std::memcpy(&sum, bytes.data() + bytes.size() - 8, 8);
  return io::byteswap_if_big(sum);
}

inline ClassConditionalGaussian decode_model(std::span<const char> bytes,
                                             std::optional<std::uint32_t> expected_dim = {},
                                             const std::string& what = "model") {
  io::ByteReader r(bytes, what);
  if (bytes.size() < kModelMagic.size() || r.bytes(kModelMagic.size()) != kModelMagic) {
    throw FormatError(what + ": bad magic, expected UQGM0001");
  }
  const auto dim = r.get<std::uint32_t>();
  const auto classes = r.get<std::uint32_t>();
  const auto eps = r.get<double>();
  if (dim == 0) throw FormatError(what + ": zero dimension");
  if (expected_dim && *expected_dim != dim) {
    throw FormatError(what + ": model dim " + std::to_string(dim) +
                      " does not match expected dim " + std::to_string(*expected_dim));
  }
  const std::uint64_t need = static_cast<std::uint64_t>(classes) * (12 + 8ULL * dim) +
                             8ULL * dim * dim + 8;
  if (need > r.remaining()) {
    throw CorruptionError(what + ": truncated (need " + std::to_string(need) +
                          " more bytes, have " + std::to_string(r.remaining()) + ")");
  }
  std::map<CategoryId, Eigen::VectorXd> means;
  std::map<CategoryId, std::uint64_t> counts;
  for (std::uint32_t c = 0; c < classes; ++c) {
    const auto k = r.get<std::uint32_t>();
    const auto n = r.get<std::uint64_t>();
    Eigen::VectorXd mu(dim);
    r.get_all<double>(std::span<double>(mu.data(), dim));
    if (!means.emplace(k, std::move(mu)).second) {
      throw CorruptionError(what + ": duplicate class " + std::to_string(k));
    }
    counts[k] = n;
  }
  Eigen::MatrixXd cov(dim, dim);
  for (std::uint32_t i = 0; i < dim; ++i) {
    for (std::uint32_t j = 0; j < dim; ++j) cov(i, j) = r.get<double>();
  }
  const std::size_t body = r.position();
  const auto stored = r.get<std::uint64_t>();
  if (r.remaining() != 0) throw CorruptionError(what + ": trailing bytes");
  if (io::fnv1a64(bytes.first(body)) != stored) {
    throw CorruptionError(what + ": checksum mismatch");
  }
  return ClassConditionalGaussian(dim, std::move(means), std::move(counts), std::move(cov), eps);
}

inline void save_model(const ClassConditionalGaussian& m, const std::filesystem::path& path) {
  io::write_file_atomic(path, encode_model(m));
}

inline ClassConditionalGaussian load_model(const std::filesystem::path& path,
                                           std::optional<std::uint32_t> expected_dim = {}) {
  const auto bytes = io::read_file(path);
  return decode_model(bytes, expected_dim, path.string());
}

}  // namespace uqdet
