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

// Per-class normalised uncertainty scores:
//
//   score = (log M - min_k log M) / (max_k log M - min_k log M)
//
// where the min/max run over the objects of the same class, so every
// non-degenerate class spans exactly [0, 1].

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "uqdet/density_model.hpp"
#include "uqdet/error.hpp"
#include "uqdet/feature_store.hpp"
#include "uqdet/io_util.hpp"

namespace uqdet {

/// Distances are clamped to this floor before the logarithm so an object
/// sitting exactly on its centroid stays finite.
inline constexpr double kDistanceFloor = 1e-12;

struct ScoreRecord {
  AnnotationId annotation_id = 0;
  CategoryId category_id = 0;
  double mahalanobis = 0.0;
  double score = 0.0;

  bool operator==(const ScoreRecord&) const = default;
};

struct ModelRef {
  std::uint32_t dim = 0;
  std::uint64_t checksum = 0;

  bool operator==(const ModelRef&) const = default;
};

struct ScoreTable {
  std::vector<ScoreRecord> records;  // ascending annotation id
  std::map<CategoryId, std::pair<double, double>> per_class_minmax;  // of log M
  ModelRef model_ref;

  bool operator==(const ScoreTable&) const = default;
};

struct NormalizeResult {
  std::map<CategoryId, std::vector<double>> scores;
  std::map<CategoryId, std::pair<double, double>> minmax;
  std::vector<CategoryId> degenerate;  // max == min; all scores 0
};

inline double clamped_log(double distance) {
  return std::log(std::max(distance, kDistanceFloor));
}

/// Log + min-max normalisation, independently per class.
inline NormalizeResult normalize(const std::map<CategoryId, std::vector<double>>& distances) {
  NormalizeResult out;
  for (const auto& [k, ds] : distances) {
    if (ds.empty()) {
      throw InvalidArgumentError("normalize: class " + std::to_string(k) + " has no distances");
    }
    std::vector<double> logs(ds.size());
    std::transform(ds.begin(), ds.end(), logs.begin(), clamped_log);
    const auto [lo_it, hi_it] = std::minmax_element(logs.begin(), logs.end());
    const double lo = *lo_it, hi = *hi_it;
    out.minmax[k] = {lo, hi};
    auto& sc = out.scores[k];
    sc.resize(logs.size());
    if (hi > lo) {
      const double span = hi - lo;
      for (std::size_t i = 0; i < logs.size(); ++i) sc[i] = (logs[i] - lo) / span;
    } else {
      std::fill(sc.begin(), sc.end(), 0.0);
      out.degenerate.push_back(k);
    }
  }
  return out;
}

/// Score of one distance under a class's stored (min, max) of log M.
inline double score_from_minmax(double distance, std::pair<double, double> minmax) {
  const auto [lo, hi] = minmax;
  if (!(hi > lo)) return 0.0;
  return (clamped_log(distance) - lo) / (hi - lo);
}

inline std::vector<std::string> degenerate_warnings(const std::vector<CategoryId>& classes) {
  std::vector<std::string> w;
  for (auto k : classes) {
    w.push_back("class " + std::to_string(k) +
                " is degenerate (max = min log distance); all scores set to 0");
  }
  return w;
}

/// Scores every archive entry. Output is ordered by annotation id.
inline ScoreTable score_dataset(const ClassConditionalGaussian& model,
                                const FeatureArchive& archive,
                                std::vector<std::string>* warnings = nullptr) {
  if (model.dim() != archive.dim) {
    throw FormatError("model dim " + std::to_string(model.dim()) +
                      " does not match archive dim " + std::to_string(archive.dim));
  }
  std::vector<std::uint64_t> unfitted;
  for (const auto& [id, e] : archive.entries) {
    if (!model.has_class(e.category_id) &&
        std::find(unfitted.begin(), unfitted.end(), e.category_id) == unfitted.end()) {
      unfitted.push_back(e.category_id);
    }
  }
  if (!unfitted.empty()) {
    std::sort(unfitted.begin(), unfitted.end());
    throw UnknownClassError("archive contains unfitted categories: " + detail::join_ids(unfitted),
                            unfitted);
  }

  ScoreTable table;
  table.model_ref = ModelRef{model.dim(), model_checksum(model)};
  table.records.reserve(archive.size());
  std::map<CategoryId, std::vector<double>> per_class;
  for (const auto& [id, e] : archive.entries) {
    const double m = model.mahalanobis(std::span<const float>(e.vector), e.category_id);
    table.records.push_back(ScoreRecord{id, e.category_id, m, 0.0});
    per_class[e.category_id].push_back(m);
  }
  auto norm = normalize(per_class);
  std::map<CategoryId, std::size_t> cursor;
  for (auto& rec : table.records) {
    rec.score = norm.scores.at(rec.category_id)[cursor[rec.category_id]++];
  }
  table.per_class_minmax = std::move(norm.minmax);
  if (warnings) {
    auto w = degenerate_warnings(norm.degenerate);
    warnings->insert(warnings->end(), w.begin(), w.end());
  }
  return table;
}

/// Recomputes per_class_minmax from the stored distances.
inline void refresh_minmax(ScoreTable& table) {
  table.per_class_minmax.clear();
  for (const auto& r : table.records) {
    const double l = clamped_log(r.mahalanobis);
    auto [it, inserted] = table.per_class_minmax.try_emplace(r.category_id, l, l);
    if (!inserted) {
      it->second.first = std::min(it->second.first, l);
      it->second.second = std::max(it->second.second, l);
    }
  }
}

// ---------------------------------------------------------------------------
// Histograms

enum class HistogramScope { kGlobal, kPerClass };

struct HistogramBin {
  double lo = 0.0;
  double hi = 0.0;
  std::size_t count = 0;
  std::optional<CategoryId> category;
};

struct HistogramReport {
  std::size_t bin_count = 0;
  HistogramScope scope = HistogramScope::kGlobal;
  std::vector<HistogramBin> bins;  // per-class: grouped by category, ascending
};

/// Equal-width bins over [0, 1]: [lo, hi) except the last, which is [lo, 1].
inline std::size_t bin_of(double score, std::size_t bins) {
  const double m = static_cast<double>(bins);
  auto i = static_cast<std::size_t>(std::clamp(std::floor(score * m), 0.0, m - 1));
  while (i > 0 && score < static_cast<double>(i) / m) --i;
  while (i + 1 < bins && score >= static_cast<double>(i + 1) / m) ++i;
  return i;
}

inline HistogramReport histogram(const ScoreTable& table, std::size_t bin_count,
                                 HistogramScope scope) {
  if (bin_count < 1) throw InvalidArgumentError("histogram: bin_count must be >= 1");
  HistogramReport rep;
  rep.bin_count = bin_count;
  rep.scope = scope;
  const double m = static_cast<double>(bin_count);
  auto make_bins = [&](std::optional<CategoryId> cat) {
    std::vector<HistogramBin> b(bin_count);
    for (std::size_t i = 0; i < bin_count; ++i) {
      b[i].lo = static_cast<double>(i) / m;
      b[i].hi = static_cast<double>(i + 1) / m;
      b[i].category = cat;
    }
    return b;
  };
  if (scope == HistogramScope::kGlobal) {
    rep.bins = make_bins(std::nullopt);
    for (const auto& r : table.records) ++rep.bins[bin_of(r.score, bin_count)].count;
  } else {
    std::map<CategoryId, std::vector<HistogramBin>> per;
    for (const auto& r : table.records) {
      auto [it, inserted] = per.try_emplace(r.category_id);
      if (inserted) it->second = make_bins(r.category_id);
      ++it->second[bin_of(r.score, bin_count)].count;
    }
    for (auto& [k, b] : per) rep.bins.insert(rep.bins.end(), b.begin(), b.end());
  }
  return rep;
}

inline std::string histogram_csv(const HistogramReport& rep) {
  std::string out = rep.scope == HistogramScope::kGlobal ? "bin_lo,bin_hi,count\n"
                                                         : "bin_lo,bin_hi,count,category_id\n";
  for (const auto& b : rep.bins) {
    out += io::format_double(b.lo) + "," + io::format_double(b.hi) + "," +
           std::to_string(b.count);
    if (b.category) out += "," + std::to_string(*b.category);
    out += "\n";
  }
  return out;
}

/// Bar chart(s) as a standalone SVG document; one panel per class for the
/// per-class scope.
inline std::string histogram_svg(const HistogramReport& rep, const std::string& title = "") {
  std::map<std::optional<CategoryId>, std::vector<const HistogramBin*>> panels;
  for (const auto& b : rep.bins) panels[b.category].push_back(&b);
  if (panels.empty()) panels[std::nullopt] = {};

  constexpr double kW = 320, kH = 200, kPad = 30;
  const std::size_t cols = std::min<std::size_t>(panels.size(), 4);
  const std::size_t rows = (panels.size() + cols - 1) / cols;
  const double width = cols * kW, height = rows * kH + (title.empty() ? 0 : 24);
  const double top = title.empty() ? 0 : 24;

  char buf[256];
  std::string s;
  std::snprintf(buf, sizeof buf,
                "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"%.0f\" height=\"%.0f\" "
                "viewBox=\"0 0 %.0f %.0f\" font-family=\"sans-serif\" font-size=\"10\">\n",
                width, height, width, height);
  s += buf;
  s += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  if (!title.empty()) {
    std::snprintf(buf, sizeof buf, "<text x=\"%.1f\" y=\"16\" text-anchor=\"middle\" font-size=\"13\">",
                  width / 2);
    s += buf;
    s += title + "</text>\n";
  }
  std::size_t p = 0;
  for (const auto& [cat, bins] : panels) {
    const double ox = (p % cols) * kW, oy = top + (p / cols) * kH;
    ++p;
    std::size_t peak = 1;
    for (const auto* b : bins) peak = std::max(peak, b->count);
    const double pw = kW - 2 * kPad, ph = kH - 2 * kPad;
    std::snprintf(buf, sizeof buf,
                  "<g transform=\"translate(%.1f,%.1f)\">\n"
                  "<line x1=\"%.1f\" y1=\"%.1f\" x2=\"%.1f\" y2=\"%.1f\" stroke=\"black\"/>\n",
                  ox, oy, kPad, kPad + ph, kPad + pw, kPad + ph);
    s += buf;
    if (cat) {
      std::snprintf(buf, sizeof buf,
                    "<text x=\"%.1f\" y=\"%.1f\" text-anchor=\"middle\">class %u</text>\n",
                    kPad + pw / 2, kPad - 8, *cat);
      s += buf;
    }
    const double bw = bins.empty() ? 0 : pw / bins.size();
    for (std::size_t i = 0; i < bins.size(); ++i) {
      const double h = ph * static_cast<double>(bins[i]->count) / static_cast<double>(peak);
      std::snprintf(buf, sizeof buf,
                    "<rect x=\"%.2f\" y=\"%.2f\" width=\"%.2f\" height=\"%.2f\" "
                    "fill=\"steelblue\" stroke=\"white\" stroke-width=\"0.5\"/>\n",
                    kPad + i * bw, kPad + ph - h, bw, h);
      s += buf;
    }
    std::snprintf(buf, sizeof buf,
                  "<text x=\"%.1f\" y=\"%.1f\">0</text>\n"
                  "<text x=\"%.1f\" y=\"%.1f\" text-anchor=\"end\">1</text>\n"
                  "<text x=\"%.1f\" y=\"%.1f\" text-anchor=\"end\">%zu</text>\n"
                  "</g>\n",
                  kPad, kPad + ph + 12, kPad + pw, kPad + ph + 12, kPad - 3, kPad + 4, peak);
    s += buf;
  }
  s += "</svg>\n";
  return s;
}

// ---------------------------------------------------------------------------
// Score file

inline std::string format_checksum(std::uint64_t c) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(c));
  return buf;
}

inline std::string scores_to_text(const ScoreTable& table) {
  std::string out = "uq-scores v1 dim=" + std::to_string(table.model_ref.dim) +
                    " model=" + format_checksum(table.model_ref.checksum) + "\n";
  out.reserve(out.size() + table.records.size() * 48);
  for (const auto& r : table.records) {
    out += std::to_string(r.annotation_id);
    out += '\t';
    out += std::to_string(r.category_id);
    out += '\t';
    out += io::format_double(r.mahalanobis);
    out += '\t';
    out += io::format_double(r.score);
    out += '\n';
  }
  return out;
}

inline void write_scores(const ScoreTable& table, const std::filesystem::path& path) {
  io::write_file_atomic(path, scores_to_text(table));
}

inline ScoreTable scores_from_text(std::string_view text, const std::string& what = "scores") {
  auto fail = [&](std::size_t line, const std::string& msg) -> void {
    throw ParseError(what + ":" + std::to_string(line) + ": " + msg, line);
  };
  ScoreTable table;
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
      if (f.size() != 4 || f[0] != "uq-scores" || f[1] != "v1" || f[2].substr(0, 4) != "dim=" ||
          f[3].substr(0, 6) != "model=") {
        fail(lineno, "expected header 'uq-scores v1 dim=<d> model=<checksum>'");
      }
      if (!io::parse_int(f[2].substr(4), table.model_ref.dim)) fail(lineno, "bad dim");
      auto hex = f[3].substr(6);
      auto [p, ec] = std::from_chars(hex.data(), hex.data() + hex.size(),
                                     table.model_ref.checksum, 16);
      if (ec != std::errc() || p != hex.data() + hex.size()) fail(lineno, "bad model checksum");
      header = true;
      continue;
    }
    if (line.empty()) continue;
    auto f = io::split(line, '\t');
    if (f.size() != 4) fail(lineno, "expected 4 tab-separated fields");
    ScoreRecord r;
    if (!io::parse_int(f[0], r.annotation_id)) fail(lineno, "bad annotation id");
    if (!io::parse_int(f[1], r.category_id)) fail(lineno, "bad category id");
    if (!io::parse_double(f[2], r.mahalanobis) || !std::isfinite(r.mahalanobis) ||
        r.mahalanobis < 0) {
      fail(lineno, "bad mahalanobis value '" + std::string(f[2]) + "'");
    }
    if (!io::parse_double(f[3], r.score) || !std::isfinite(r.score)) {
      fail(lineno, "bad score '" + std::string(f[3]) + "'");
    }
    if (r.score < 0.0 || r.score > 1.0) {
      fail(lineno, "score " + std::string(f[3]) + " outside [0, 1]");
    }
    table.records.push_back(r);
  }
  if (!header) fail(1, "missing header");
  std::sort(table.records.begin(), table.records.end(),
            [](const auto& a, const auto& b) { return a.annotation_id < b.annotation_id; });
  for (std::size_t i = 1; i < table.records.size(); ++i) {
    if (table.records[i].annotation_id == table.records[i - 1].annotation_id) {
      throw ParseError(what + ": duplicate annotation id " +
                           std::to_string(table.records[i].annotation_id),
                       0);
    }
  }
  refresh_minmax(table);
  return table;
}

inline ScoreTable read_scores(const std::filesystem::path& path) {
  const auto bytes = io::read_file(path);
  return scores_from_text(std::string_view(bytes.data(), bytes.size()), path.string());
}

}  // namespace uqdet
