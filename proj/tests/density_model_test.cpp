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

#include <numbers>

#include "test_support.hpp"

namespace uqdet {
namespace {

using testing::TempDir;

FeatureArchive archive_of(std::uint32_t dim,
                          const std::vector<std::pair<CategoryId, std::vector<float>>>& rows) {
  FeatureArchive a;
  a.dim = dim;
  AnnotationId id = 1;
  for (const auto& [k, v] : rows) a.add(PooledFeature{id++, k, v, PoolMode::kBoxMean});
  return a;
}

ClassConditionalGaussian model_with(const Eigen::MatrixXd& cov, const Eigen::VectorXd& mu,
                                    double eps = 0.0) {
  return ClassConditionalGaussian(static_cast<std::uint32_t>(mu.size()), {{1, mu}}, {{1, 1}}, cov,
                                  eps);
}

TEST(Fit, HandComputedSingleClass) {
  const auto a = archive_of(2, {{1, {0, 0}}, {1, {2, 0}}});
  const auto m = fit(a);
  EXPECT_EQ(m.means().at(1), Eigen::Vector2d(1, 0));
  EXPECT_EQ(m.covariance(), (Eigen::Matrix2d() << 1, 0, 0, 0).finished());
  EXPECT_EQ(m.per_class_counts().at(1), 2u);
  EXPECT_DOUBLE_EQ(m.regularization_eps(), 1e-6 * 1.0 / 2.0);
}

TEST(Fit, SingleSampleClassesGiveZeroScatter) {
  const auto a = archive_of(3, {{1, {1, 2, 3}}, {2, {-4, 0, 9}}});
  const auto m = fit(a);
  EXPECT_TRUE(m.covariance().isZero(0.0));
  const double eps = m.regularization_eps();
  EXPECT_DOUBLE_EQ(eps, 1e-12);
  // Precision (L L^T)^{-1} = I / eps.
  const Eigen::MatrixXd L = m.precision_factor();
  const Eigen::MatrixXd prec = (L * L.transpose()).inverse();
  EXPECT_TRUE(prec.isApprox(Eigen::MatrixXd::Identity(3, 3) / eps, 1e-12));
  EXPECT_NEAR(m.mahalanobis(std::vector<float>{2, 2, 3}, 1), 1.0 / eps, 1e-12 / eps);
}

TEST(Fit, MatchesNaiveDoubleLoop) {
  std::mt19937_64 rng(7);
  const auto a = testing::random_archive(rng, 3, 5, 3);
  const auto m = fit(a);
  const auto ref = testing::naive_fit(a);
  for (const auto& [k, mu] : ref.means) {
    for (std::size_t i = 0; i < mu.size(); ++i) EXPECT_NEAR(m.means().at(k)[i], mu[i], 1e-12);
  }
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t j = 0; j < 3; ++j) EXPECT_NEAR(m.covariance()(i, j), ref.cov[i][j], 1e-12);
  }
}

TEST(Fit, MatchesNaiveDoubleLoopAcrossChunkBoundaries) {
  std::mt19937_64 rng(19);
  const auto a = testing::random_archive(rng, 4, 700, 6);  // 2800 > one 1024 chunk
  const auto m = fit(a);
  const auto ref = testing::naive_fit(a);
  for (std::size_t i = 0; i < 6; ++i) {
    for (std::size_t j = 0; j < 6; ++j) EXPECT_NEAR(m.covariance()(i, j), ref.cov[i][j], 1e-12);
  }
  EXPECT_TRUE(m.covariance().isApprox(m.covariance().transpose(), 0.0));
}

TEST(Fit, ExpectedCategoryWithoutVectorsIsReported) {
  const auto a = archive_of(1, {{1, {0}}, {1, {1}}});
  FitOptions opt;
  opt.expected_categories = {1, 5};
  FitReport rep;
  const auto m = fit(a, opt, &rep);
  EXPECT_EQ(rep.empty_categories, std::vector<CategoryId>{5});
  EXPECT_EQ(rep.warnings.size(), 1u);
  EXPECT_FALSE(m.has_class(5));
}

TEST(Fit, SingularWithoutRegularizationReportsEigenvalue) {
  const auto a = archive_of(2, {{1, {0, 0}}, {1, {2, 0}}});
  FitOptions opt;
  opt.eps = 0.0;
  try {
    fit(a, opt);
    FAIL();
  } catch (const SingularModelError& e) {
    EXPECT_NEAR(e.min_eigenvalue(), 0.0, 1e-12);
  }
}

TEST(Fit, PermutationOfArchiveOrderDoesNotMatter) {
  std::mt19937_64 rng(2);
  const auto a = testing::random_archive(rng, 3, 30, 4);
  // Same vectors under shuffled annotation ids.
  std::vector<AnnotationId> ids;
  for (const auto& [id, e] : a.entries) ids.push_back(id);
  std::shuffle(ids.begin(), ids.end(), rng);
  FeatureArchive b;
  std::size_t i = 0;
  for (const auto& [id, e] : a.entries) {
    auto f = e;
    f.annotation_id = ids[i++] + 1000;
    b.add(f);
  }
  const auto ma = fit(a), mb = fit(b);
  EXPECT_TRUE(ma.covariance().isApprox(mb.covariance(), 1e-12));
}

TEST(Mahalanobis, ZeroAtCentroid) {
  std::mt19937_64 rng(1);
  const auto a = testing::random_archive(rng, 2, 20, 5);
  const auto m = fit(a);
  for (const auto& [k, mu] : m.means()) {
    std::vector<double> v(mu.data(), mu.data() + mu.size());
    EXPECT_NEAR(m.mahalanobis(v, k), 0.0, 1e-24);
  }
}

TEST(Mahalanobis, IdentityAndDiagonal) {
  const auto ident = model_with(Eigen::Matrix2d::Identity(), Eigen::Vector2d::Zero());
  EXPECT_NEAR(ident.mahalanobis(std::vector<double>{3, 4}, 1), 25.0, 1e-12);
  const auto diag = model_with(Eigen::Vector2d(1, 4).asDiagonal().toDenseMatrix(),
                               Eigen::Vector2d::Zero());
  EXPECT_NEAR(diag.mahalanobis(std::vector<double>{0, 2}, 1), 1.0, 1e-12);
}

TEST(Mahalanobis, MatchesGaussJordanOracle) {
  std::mt19937_64 rng(23);
  const auto a = testing::random_archive(rng, 3, 60, 6);
  FitOptions opt;
  opt.eps = 0.0;
  const auto m = fit(a, opt);
  const auto ref = testing::naive_fit(a);
  for (const auto& [id, e] : a.entries) {
    const std::vector<double> v(e.vector.begin(), e.vector.end());
    const double want = testing::naive_mahalanobis(ref.cov, v, ref.means.at(e.category_id));
    EXPECT_NEAR(m.mahalanobis(e.vector, e.category_id), want, 1e-9 * std::max(1.0, want));
  }
}

TEST(Mahalanobis, UnknownClassAndWrongLength) {
  const auto m = model_with(Eigen::Matrix2d::Identity(), Eigen::Vector2d::Zero());
  EXPECT_THROW(m.mahalanobis(std::vector<double>{1, 2}, 9), UnknownClassError);
  EXPECT_THROW(m.mahalanobis(std::vector<double>{1, 2, 3}, 1), FormatError);
}

TEST(Mahalanobis, AffineInvariance) {
  // Integer data and integer transforms keep A v + b exact in float storage.
  std::mt19937_64 rng(31);
  std::uniform_int_distribution<int> val(-20, 20), coef(-3, 3);
  constexpr int D = 4;
  FeatureArchive a;
  a.dim = D;
  for (AnnotationId id = 1; id <= 90; ++id) {
    std::vector<float> v(D);
    for (auto& x : v) x = static_cast<float>(val(rng));
    a.add(PooledFeature{id, static_cast<CategoryId>(1 + id % 3), v, PoolMode::kBoxMean});
  }
  FitOptions opt;
  opt.eps = 0.0;
  const auto m0 = fit(a, opt);
  int tried = 0;
  for (int t = 0; t < 5; ++t) {
    Eigen::Matrix<double, D, D> A;
    double cond = 0.0;
    do {
      ++tried;
      for (int i = 0; i < D; ++i) {
        for (int j = 0; j < D; ++j) A(i, j) = coef(rng);
      }
      Eigen::JacobiSVD<Eigen::MatrixXd> svd(A);
      const auto s = svd.singularValues();
      cond = s(D - 1) > 0 ? s(0) / s(D - 1) : INFINITY;
    } while (cond > 100.0);
    Eigen::Matrix<double, D, 1> b;
    for (int i = 0; i < D; ++i) b(i) = coef(rng);
    FeatureArchive t_arch;
    t_arch.dim = D;
    for (const auto& [id, e] : a.entries) {
      Eigen::Matrix<double, D, 1> v;
      for (int i = 0; i < D; ++i) v(i) = e.vector[i];
      const Eigen::Matrix<double, D, 1> w = A * v + b;
      t_arch.add(PooledFeature{id, e.category_id, {w.data(), w.data() + D}, PoolMode::kBoxMean});
    }
    const auto m1 = fit(t_arch, opt);
    for (const auto& [id, e] : a.entries) {
      const double d0 = m0.mahalanobis(e.vector, e.category_id);
      const double d1 = m1.mahalanobis(t_arch.entries.at(id).vector, e.category_id);
      EXPECT_NEAR(d1, d0, 1e-8 * std::max(d0, 1e-300));
    }
  }
  EXPECT_GE(tried, 5);
}

TEST(LogDensity, StandardNormalAtMode) {
  const auto m = model_with(Eigen::MatrixXd::Identity(1, 1), Eigen::VectorXd::Zero(1));
  EXPECT_NEAR(m.gaussian_log_density(std::vector<double>{0}, 1), -0.5 * std::log(2 * std::numbers::pi),
              1e-12);
  EXPECT_NEAR(m.gaussian_log_density(std::vector<double>{0}, 1), -0.9189385332, 1e-9);
}

TEST(LogDensity, TwoDimensionalClosedForm) {
  const auto m = model_with(Eigen::Matrix2d::Identity(), Eigen::Vector2d(1, 1));
  const double want = -0.5 * (2 * std::log(2 * std::numbers::pi) + 0 + 25);
  EXPECT_NEAR(m.gaussian_log_density(std::vector<double>{4, 5}, 1), want, 1e-12);
}

TEST(LogDensity, StrictlyDecreasingInDistance) {
  std::mt19937_64 rng(4);
  const auto a = testing::random_archive(rng, 1, 50, 3);
  const auto m = fit(a);
  std::vector<std::pair<double, double>> pts;
  for (const auto& [id, e] : a.entries) {
    pts.emplace_back(m.mahalanobis(e.vector, 1), m.gaussian_log_density(e.vector, 1));
  }
  std::sort(pts.begin(), pts.end());
  for (std::size_t i = 1; i < pts.size(); ++i) {
    if (pts[i].first > pts[i - 1].first) {
      EXPECT_LT(pts[i].second, pts[i - 1].second);
    }
  }
}

TEST(ModelFile, RoundTripProbes) {
  TempDir dir;
  std::mt19937_64 rng(8);
  const auto a = testing::random_archive(rng, 4, 25, 8);
  const auto m = fit(a);
  save_model(m, dir / "m.uqgm");
  const auto r = load_model(dir / "m.uqgm", 8);
  EXPECT_EQ(r.covariance(), m.covariance());
  EXPECT_EQ(r.regularization_eps(), m.regularization_eps());
  EXPECT_EQ(r.per_class_counts(), m.per_class_counts());
  EXPECT_EQ(model_checksum(r), model_checksum(m));
  std::normal_distribution<double> nd(0, 4);
  for (int t = 0; t < 100; ++t) {
    std::vector<double> v(8);
    for (auto& x : v) x = nd(rng);
    const CategoryId k = 1 + t % 4;
    EXPECT_NEAR(r.mahalanobis(v, k), m.mahalanobis(v, k), 1e-12 * std::max(1.0, m.mahalanobis(v, k)));
  }
}

TEST(ModelFile, TruncatedCorruptAndMismatched) {
  std::mt19937_64 rng(8);
  const auto m = fit(testing::random_archive(rng, 2, 10, 3));
  auto bytes = encode_model(m);
  EXPECT_THROW(decode_model(std::span<const char>(bytes).first(bytes.size() - 9), std::nullopt, "mem"),
               CorruptionError);
  EXPECT_THROW(decode_model(bytes, 4, "mem"), FormatError);
  bytes[30] ^= 0x40;
  EXPECT_THROW(decode_model(bytes, std::nullopt, "mem"), CorruptionError);
  bytes[0] = 'Z';
  EXPECT_THROW(decode_model(bytes, std::nullopt, "mem"), FormatError);
}

}  // namespace
}  // namespace uqdet
