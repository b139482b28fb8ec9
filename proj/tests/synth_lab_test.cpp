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

TEST(Generate, NoContaminationAllClean) {
  SynthConfig c;
  c.per_class_count = 100;
  c.contamination_rate = 0.0;
  const auto d = generate(c);
  EXPECT_EQ(d.truth.outlier_count(), 0u);
  EXPECT_EQ(d.archive.size(), 400u);
}

TEST(Generate, ExactOutlierCountPerClass) {
  SynthConfig c;
  c.class_count = 1;
  c.per_class_count = 100;
  c.contamination_rate = 0.05;
  EXPECT_EQ(generate(c).truth.outlier_count(), 5u);
  c.class_count = 3;
  c.per_class_count = 333;
  const auto d = generate(c);
  std::map<CategoryId, std::size_t> per;
  for (const auto& [id, l] : d.truth.labels) {
    if (l == TruthLabel::kOutlier) ++per[d.archive.entries.at(id).category_id];
  }
  for (CategoryId k = 1; k <= 3; ++k) EXPECT_NEAR(static_cast<double>(per[k]), 0.05 * 333, 1.0);
}

TEST(Generate, BitIdenticalUnderSeed) {
  SynthConfig c;
  c.per_class_count = 200;
  const auto a = generate(c), b = generate(c);
  EXPECT_EQ(encode_archive(a.archive), encode_archive(b.archive));
  EXPECT_EQ(a.truth.labels, b.truth.labels);
  c.seed = 8;
  EXPECT_NE(encode_archive(generate(c).archive), encode_archive(a.archive));
}

TEST(Generate, IndexIsConsistentWithArchive) {
  SynthConfig c;
  c.per_class_count = 37;
  const auto d = generate(c);
  EXPECT_NO_THROW(validate_dataset(d.index));
  ASSERT_EQ(d.index.annotations.size(), d.archive.size());
  for (const auto& a : d.index.annotations) {
    EXPECT_EQ(d.archive.entries.at(a.id).category_id, a.category_id);
  }
}

TEST(Generate, CleanSamplesHaveUnitCovariance) {
  SynthConfig c;
  c.class_count = 2;
  c.dim = 3;
  c.per_class_count = 20000;
  c.contamination_rate = 0.0;
  const auto d = generate(c);
  const auto m = fit(d.archive);
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) EXPECT_NEAR(m.covariance()(i, j), i == j ? 1.0 : 0.0, 0.03);
  }
  // Class means sit mean_separation apart.
  EXPECT_NEAR((m.means().at(1) - m.means().at(2)).norm(), c.mean_separation, 0.05);
}

TEST(Generate, InvalidConfig) {
  SynthConfig c;
  c.contamination_rate = 1.0;
  EXPECT_THROW(generate(c), InvalidArgumentError);
  c = SynthConfig{};
  c.class_count = 0;
  EXPECT_THROW(generate(c), InvalidArgumentError);
}

ScoreTable table_of(const std::vector<std::pair<AnnotationId, double>>& s) {
  ScoreTable t;
  for (auto [id, v] : s) t.records.push_back({id, 1, 1.0, v});
  return t;
}

TEST(Auroc, ChanceAndPerfect) {
  SynthTruth truth;
  for (AnnotationId i = 1; i <= 6; ++i) truth.labels[i] = i > 4 ? TruthLabel::kOutlier : TruthLabel::kClean;
  EXPECT_DOUBLE_EQ(evaluate_auroc(table_of({{1, .3}, {2, .3}, {3, .3}, {4, .3}, {5, .3}, {6, .3}}), truth), 0.5);
  EXPECT_DOUBLE_EQ(evaluate_auroc(table_of({{1, .1}, {2, .2}, {3, .3}, {4, .4}, {5, .5}, {6, .9}}), truth), 1.0);
  EXPECT_DOUBLE_EQ(evaluate_auroc(table_of({{1, .9}, {2, .8}, {3, .7}, {4, .6}, {5, .1}, {6, .2}}), truth), 0.0);
}

// Pairwise definition: P(outlier > clean) + 0.5 P(tie).
double pairwise_auroc(const ScoreTable& t, const SynthTruth& truth) {
  double num = 0, den = 0;
  for (const auto& a : t.records) {
    if (truth.labels.at(a.annotation_id) != TruthLabel::kOutlier) continue;
    for (const auto& b : t.records) {
      if (truth.labels.at(b.annotation_id) != TruthLabel::kClean) continue;
      num += a.score > b.score ? 1.0 : a.score == b.score ? 0.5 : 0.0;
      den += 1;
    }
  }
  return num / den;
}

TEST(Auroc, MatchesPairwiseCountWithTies) {
  std::mt19937_64 rng(4);
  std::uniform_int_distribution<int> v(0, 6);
  for (int t = 0; t < 50; ++t) {
    SynthTruth truth;
    std::vector<std::pair<AnnotationId, double>> s;
    for (AnnotationId i = 1; i <= 40; ++i) {
      truth.labels[i] = i % 5 == 0 ? TruthLabel::kOutlier : TruthLabel::kClean;
      s.emplace_back(i, v(rng) / 6.0);
    }
    const auto table = table_of(s);
    EXPECT_NEAR(evaluate_auroc(table, truth), pairwise_auroc(table, truth), 1e-12);
  }
}

TEST(Auroc, MissingIdsAndAbsentClass) {
  SynthTruth truth;
  truth.labels[1] = TruthLabel::kClean;
  truth.labels[2] = TruthLabel::kOutlier;
  EXPECT_THROW(evaluate_auroc(table_of({{1, .1}}), truth), IntegrityError);
  EXPECT_THROW(evaluate_auroc(table_of({{1, .1}, {3, .2}}), truth), IntegrityError);
  truth.labels[2] = TruthLabel::kClean;
  EXPECT_TRUE(std::isnan(evaluate_auroc(table_of({{1, .1}, {2, .2}}), truth)));
}

TEST(Recovery, NoContaminationDropsNothingAtPOne) {
  SynthConfig c;
  c.per_class_count = 300;
  c.contamination_rate = 0.0;
  const auto r = recovery_experiment(c, 1.0);
  EXPECT_EQ(r.dropped_clean + r.dropped_outliers, 0u);
}

TEST(Recovery, NoContaminationDropsFivePercentOfCleanAtP95) {
  SynthConfig c;
  c.per_class_count = 500;
  c.contamination_rate = 0.0;
  const auto r = recovery_experiment(c, 0.95);
  EXPECT_EQ(r.dropped_outliers, 0u);
  EXPECT_EQ(r.dropped_clean, 100u);  // floor(0.05 * 2000), scores are tie-free
}

TEST(Recovery, AurocGrowsWithShiftOnAverage) {
  std::vector<double> mean;
  for (double shift : {0.0, 2.0, 4.0, 6.0}) {
    double sum = 0;
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
      SynthConfig c;
      c.per_class_count = 250;
      c.outlier_shift = shift;
      c.seed = seed;
      sum += recovery_experiment(c).auroc;
    }
    mean.push_back(sum / 20);
  }
  for (std::size_t i = 1; i < mean.size(); ++i) EXPECT_GE(mean[i], mean[i - 1]);
  EXPECT_NEAR(mean[0], 0.5, 0.05);
}

TEST(Recovery, CsvHasHeaderAndOneRow) {
  SynthConfig c;
  c.per_class_count = 50;
  const auto csv = recovery_csv(c, recovery_experiment(c));
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 2);
  EXPECT_EQ(csv.rfind("class_count,dim,", 0), 0u);
}

}  // namespace
}  // namespace uqdet
