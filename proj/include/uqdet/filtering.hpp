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

// Score-based annotation filters.
//
// Noise filters keep every object whose score is <= the empirical
// p-quantile, F^{-1}(p) = inf{d : p <= F(d)}, computed over all classes or
// within each class. The redundancy filter splits each class into M score
// bins ((m-1)/M, m/M] and drops floor(p * |bin|) objects from each bin at
// random.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include "uqdet/dataset.hpp"
#include "uqdet/error.hpp"
#include "uqdet/io_util.hpp"
#include "uqdet/scoring.hpp"

namespace uqdet {

enum class FilterStrategy { kNoiseGlobal, kNoisePerClass, kRedundancy };

inline const char* to_string(FilterStrategy s) {
  switch (s) {
    case FilterStrategy::kNoiseGlobal: return "noise-global";
    case FilterStrategy::kNoisePerClass: return "noise-class";
    case FilterStrategy::kRedundancy: return "redundancy";
  }
  return "?";
}

inline std::optional<FilterStrategy> parse_strategy(std::string_view s) {
  if (s == "noise-global") return FilterStrategy::kNoiseGlobal;
  if (s == "noise-class") return FilterStrategy::kNoisePerClass;
  if (s == "redundancy") return FilterStrategy::kRedundancy;
  return std::nullopt;
}

struct BinStat {
  CategoryId category = 0;
  std::size_t bin = 0;  // 1-based, as in ((bin-1)/M, bin/M]
  std::size_t size = 0;
  std::size_t dropped = 0;
};

struct FilterResult {
  std::vector<AnnotationId> kept;     // ascending
  std::vector<AnnotationId> dropped;  // ascending
  FilterStrategy strategy = FilterStrategy::kNoiseGlobal;
  double p = 1.0;
  std::size_t bins = 0;
  std::uint64_t seed = 0;

  // Provenance; not serialised.
  std::optional<double> threshold;
  std::map<CategoryId, double> per_class_thresholds;
  std::vector<CategoryId> singleton_classes;
  std::vector<BinStat> bin_stats;
};

/// Smallest observed score d with (#scores <= d) / n >= p. No interpolation.
inline double empirical_quantile(std::span<const double> scores, double p) {
  if (scores.empty()) throw InvalidArgumentError("empirical_quantile: empty score list");
  if (!(p >= 0.0 && p <= 1.0)) throw InvalidArgumentError("empirical_quantile: p outside [0, 1]");
  std::vector<double> s(scores.begin(), scores.end());
  std::sort(s.begin(), s.end());
  const double n = static_cast<double>(s.size());
  std::size_t i = 0;
  while (i < s.size()) {
    // Count of values <= s[i], ties included.
    const auto upto = static_cast<std::size_t>(
        std::upper_bound(s.begin() + i, s.end(), s[i]) - s.begin());
    if (static_cast<double>(upto) / n >= p) return s[i];
    i = upto;
  }
  return s.back();
}

namespace detail {

inline void check_noise_p(double p) {
  if (!(p > 0.0 && p <= 1.0)) {
    throw InvalidArgumentError("noise filter: p must lie in (0, 1]");
  }
}

inline void finish(FilterResult& r) {
  std::sort(r.kept.begin(), r.kept.end());
  std::sort(r.dropped.begin(), r.dropped.end());
}

/// Uniform integer in [0, n) from raw 64-bit draws; unlike
/// std::uniform_int_distribution this is identical on every standard
/// library.
inline std::uint64_t uniform_below(std::mt19937_64& rng, std::uint64_t n) {
  const std::uint64_t limit = (0 - n) % n;  // 2^64 mod n
  while (true) {
    const std::uint64_t r = rng();
    if (r >= limit) return r % n;
  }
}

inline std::mt19937_64 bin_generator(std::uint64_t seed, CategoryId category, std::size_t bin) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(category), static_cast<std::uint32_t>(bin)};
  return std::mt19937_64(seq);
}

}  // namespace detail

/// floor(p * n), with a 1e-9 allowance so that e.g. p = 0.29, n = 100
/// drops 29 rather than 28 from binary rounding of p.
inline std::size_t drop_count(double p, std::size_t n) {
  return static_cast<std::size_t>(std::floor(p * static_cast<double>(n) + 1e-9));
}

/// Bin index m in 1..M with score in ((m-1)/M, m/M]; a score of 0 goes to 1.
inline std::size_t redundancy_bin(double score, std::size_t bins) {
  const double m = static_cast<double>(bins);
  auto b = static_cast<std::size_t>(std::clamp(std::ceil(score * m), 1.0, m));
  while (b > 1 && score <= static_cast<double>(b - 1) / m) --b;
  while (b < bins && score > static_cast<double>(b) / m) ++b;
  return b;
}

inline FilterResult filter_noise_global(const ScoreTable& table, double p) {
  detail::check_noise_p(p);
  if (table.records.empty()) throw InvalidArgumentError("filter: empty score table");
  std::vector<double> scores;
  scores.reserve(table.records.size());
  for (const auto& r : table.records) scores.push_back(r.score);
  const double t = empirical_quantile(scores, p);

  FilterResult res;
  res.strategy = FilterStrategy::kNoiseGlobal;
  res.p = p;
  res.threshold = t;
  for (const auto& r : table.records) {
    (r.score <= t ? res.kept : res.dropped).push_back(r.annotation_id);
  }
  detail::finish(res);
  return res;
}

inline FilterResult filter_noise_per_class(const ScoreTable& table, double p) {
  detail::check_noise_p(p);
  if (table.records.empty()) throw InvalidArgumentError("filter: empty score table");
  std::map<CategoryId, std::vector<double>> per;
  for (const auto& r : table.records) per[r.category_id].push_back(r.score);

  FilterResult res;
  res.strategy = FilterStrategy::kNoisePerClass;
  res.p = p;
  for (const auto& [k, s] : per) {
    res.per_class_thresholds[k] = empirical_quantile(s, p);
    if (s.size() == 1) res.singleton_classes.push_back(k);
  }
  for (const auto& r : table.records) {
    const double t = res.per_class_thresholds.at(r.category_id);
    (r.score <= t ? res.kept : res.dropped).push_back(r.annotation_id);
  }
  detail::finish(res);
  return res;
}

inline FilterResult filter_redundant(const ScoreTable& table, std::size_t bins, double p,
                                     std::uint64_t seed) {
  if (bins < 1) throw InvalidArgumentError("redundancy filter: bin count must be >= 1");
  if (!(p >= 0.0 && p < 1.0)) {
    throw InvalidArgumentError("redundancy filter: p must lie in [0, 1)");
  }
  if (table.records.empty()) throw InvalidArgumentError("filter: empty score table");

  // (class, bin) -> member ids; records are already in ascending id order.
  std::map<std::pair<CategoryId, std::size_t>, std::vector<AnnotationId>> groups;
  for (const auto& r : table.records) {
    groups[{r.category_id, redundancy_bin(r.score, bins)}].push_back(r.annotation_id);
  }

  FilterResult res;
  res.strategy = FilterStrategy::kRedundancy;
  res.p = p;
  res.bins = bins;
  res.seed = seed;
  for (auto& [key, ids] : groups) {
    const std::size_t k = drop_count(p, ids.size());
    auto rng = detail::bin_generator(seed, key.first, key.second);
    for (std::size_t i = 0; i < k; ++i) {
      const auto j = i + detail::uniform_below(rng, ids.size() - i);
      std::swap(ids[i], ids[j]);
    }
    res.dropped.insert(res.dropped.end(), ids.begin(), ids.begin() + k);
    res.kept.insert(res.kept.end(), ids.begin() + k, ids.end());
    res.bin_stats.push_back(BinStat{key.first, key.second, ids.size(), k});
  }
  detail::finish(res);
  return res;
}

struct ApplyOptions {
  bool remove_empty_images = false;
};

/// New index holding only the kept annotations. Every id in the result must
/// exist in `index`.
inline DatasetIndex apply_filter(const DatasetIndex& index, const FilterResult& result,
                                 const ApplyOptions& options = {}) {
  std::unordered_set<AnnotationId> known;
  known.reserve(index.annotations.size());
  for (const auto& a : index.annotations) known.insert(a.id);
  std::vector<std::uint64_t> unknown;
  for (const auto* ids : {&result.kept, &result.dropped}) {
    for (auto id : *ids) {
      if (!known.count(id)) unknown.push_back(id);
    }
  }
  if (!unknown.empty()) {
    std::sort(unknown.begin(), unknown.end());
    throw IntegrityError(std::to_string(unknown.size()) +
                             " filtered annotation id(s) not in the dataset: " +
                             detail::join_ids(unknown),
                         std::move(unknown));
  }

  const std::unordered_set<AnnotationId> keep(result.kept.begin(), result.kept.end());
  DatasetIndex out;
  out.categories = index.categories;
  out.extra = index.extra;
  std::unordered_set<ImageId> used;
  for (const auto& a : index.annotations) {
    if (keep.count(a.id)) {
      out.annotations.push_back(a);
      used.insert(a.image_id);
    }
  }
  for (const auto& im : index.images) {
    if (!options.remove_empty_images || used.count(im.id)) out.images.push_back(im);
  }
  return out;
}

// ---------------------------------------------------------------------------
// FilterResult file

inline std::string filter_to_text(const FilterResult& r) {
  std::string out = "uq-filter v1 strategy=" + std::string(to_string(r.strategy)) +
                    " p=" + io::format_double(r.p) + " M=" + std::to_string(r.bins) +
                    " seed=" + std::to_string(r.seed) + "\n[kept]\n";
  for (auto id : r.kept) out += std::to_string(id) + "\n";
  out += "[dropped]\n";
  for (auto id : r.dropped) out += std::to_string(id) + "\n";
  return out;
}

inline void write_filter_result(const FilterResult& r, const std::filesystem::path& path) {
  io::write_file_atomic(path, filter_to_text(r));
}

inline FilterResult filter_from_text(std::string_view text, const std::string& what = "filter") {
  auto fail = [&](std::size_t line, const std::string& msg) {
    throw ParseError(what + ":" + std::to_string(line) + ": " + msg, line);
  };
  FilterResult r;
  std::vector<AnnotationId>* section = nullptr;
  std::size_t pos = 0, lineno = 0;
  bool header = false;
  while (pos < text.size()) {
    auto end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (!header) {
      auto f = io::split(line, ' ');
      if (f.size() != 6 || f[0] != "uq-filter" || f[1] != "v1") {
        fail(lineno, "expected header 'uq-filter v1 strategy=<s> p=<p> M=<M> seed=<n>'");
      }
      auto value = [&](std::string_view field, std::string_view key) {
        if (field.substr(0, key.size()) != key) fail(lineno, "expected " + std::string(key));
        return field.substr(key.size());
      };
      auto s = parse_strategy(value(f[2], "strategy="));
      if (!s) fail(lineno, "unknown strategy");
      r.strategy = *s;
      if (!io::parse_double(value(f[3], "p="), r.p)) fail(lineno, "bad p");
      if (!io::parse_int(value(f[4], "M="), r.bins)) fail(lineno, "bad M");
      if (!io::parse_int(value(f[5], "seed="), r.seed)) fail(lineno, "bad seed");
      header = true;
      continue;
    }
    if (line.empty()) continue;
    if (line == "[kept]") {
      section = &r.kept;
    } else if (line == "[dropped]") {
      section = &r.dropped;
    } else {
      if (!section) fail(lineno, "id outside a [kept]/[dropped] section");
      AnnotationId id = 0;
      if (!io::parse_int(line, id)) fail(lineno, "bad annotation id");
      section->push_back(id);
    }
  }
  if (!header) fail(1, "missing header");
  detail::finish(r);
  std::vector<AnnotationId> both;
  std::set_intersection(r.kept.begin(), r.kept.end(), r.dropped.begin(), r.dropped.end(),
                        std::back_inserter(both));
  if (!both.empty()) {
    throw ParseError(what + ": ids both kept and dropped: " + detail::join_ids(both), 0);
  }
  return r;
}

inline FilterResult read_filter_result(const std::filesystem::path& path) {
  const auto bytes = io::read_file(path);
  return filter_from_text(std::string_view(bytes.data(), bytes.size()), path.string());
}

}  // namespace uqdet
