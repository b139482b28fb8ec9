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

// uqdet: pool features, fit, score, report, filter.
//
// Exit codes: 0 success, 1 usage, 2 data/integrity, 3 numerical failure.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "uqdet/uqdet.hpp"

namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitNumeric = 3;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

int exit_code_for(const uqdet::Error& e) {
  using uqdet::ErrorKind;
  switch (e.kind()) {
    case ErrorKind::kInvalidArgument:
      return kExitUsage;
    case ErrorKind::kUnknownClass:
    case ErrorKind::kSingularModel:
      return kExitNumeric;
    default:
      return kExitData;
  }
}

struct Common {
  std::string out = "out";
  bool quiet = false;

  fs::path out_dir() const {
    fs::path p = fs::absolute(out);
    fs::create_directories(p);
    return p;
  }
};

void log(const Common& c, const std::string& msg) {
  if (!c.quiet) std::cout << msg << "\n";
}

void warn(const std::string& msg) { std::cerr << "warning: " << msg << "\n"; }

fs::path existing(const std::string& p, const char* what) {
  fs::path abs = fs::absolute(p);
  if (!fs::exists(abs)) throw uqdet::IoError(std::string(what) + " not found: " + abs.string());
  return abs;
}

// ---------------------------------------------------------------------------

struct PoolArgs {
  std::string annotations, features_dir, pool = "box";
  bool include_crowd = false, skip_missing = false;
};

int run_pool(const Common& c, const PoolArgs& a) {
  const auto ann = existing(a.annotations, "annotation file");
  const auto dir = existing(a.features_dir, "feature directory");
  const auto out = c.out_dir();

  uqdet::ParseReport pr;
  const auto index = uqdet::parse_dataset(ann, &pr);
  if (!pr.clamped.empty()) warn(std::to_string(pr.clamped.size()) + " box(es) clamped to image bounds");
  if (!pr.zero_area.empty()) {
    warn(std::to_string(pr.zero_area.size()) + " zero-area box(es) excluded: " +
         uqdet::detail::join_ids(pr.zero_area));
  }

  uqdet::BuildOptions opt;
  opt.pool_mode = a.pool == "mask" ? uqdet::PoolMode::kMaskMean : uqdet::PoolMode::kBoxMean;
  opt.include_crowd = a.include_crowd;
  opt.skip_missing = a.skip_missing;
  uqdet::DirectoryMapSource source(dir);
  auto result = uqdet::build_archive(index, source, opt);
  result.archive.provenance = "uqdet pool (" + a.pool + ")";
  const auto path = out / "features.uqfa";
  uqdet::write_archive(result.archive, path);

  const auto& r = result.report;
  log(c, "pooled " + std::to_string(r.pooled) + " objects (dim " +
             std::to_string(result.archive.dim) + ") -> " + path.string());
  log(c, "skipped: crowd " + std::to_string(r.skipped_crowd.size()) + ", zero-area " +
             std::to_string(r.skipped_zero_area.size()) + ", images without maps " +
             std::to_string(r.missing_images.size()));
  if (!r.missing_images.empty()) warn("missing maps for images " + uqdet::detail::join_ids(r.missing_images));
  for (const auto& [k, n] : r.per_class) {
    log(c, "  class " + std::to_string(k) + ": " + std::to_string(n));
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------

void write_histograms(const uqdet::ScoreTable& table, std::size_t bins, const fs::path& out,
                      bool global, bool per_class) {
  if (global) {
    const auto h = uqdet::histogram(table, bins, uqdet::HistogramScope::kGlobal);
    uqdet::io::write_file_atomic(out / "histogram_global.csv", uqdet::histogram_csv(h));
    uqdet::io::write_file_atomic(out / "histogram_global.svg",
                                 uqdet::histogram_svg(h, "uncertainty scores, all classes"));
  }
  if (per_class) {
    const auto h = uqdet::histogram(table, bins, uqdet::HistogramScope::kPerClass);
    uqdet::io::write_file_atomic(out / "histogram_class.csv", uqdet::histogram_csv(h));
    uqdet::io::write_file_atomic(out / "histogram_class.svg",
                                 uqdet::histogram_svg(h, "uncertainty scores per class"));
  }
}

struct ScoreArgs {
  std::string archive, model;
  std::optional<double> eps;
  std::size_t bins = 10;
};

int run_score(const Common& c, const ScoreArgs& a) {
  const auto archive_path = existing(a.archive, "archive");
  std::optional<fs::path> model_path;
  if (!a.model.empty()) model_path = existing(a.model, "model");
  if (a.bins < 1) throw UsageError("--bins must be >= 1");
  if (a.eps && !(*a.eps >= 0.0)) throw UsageError("--eps must be >= 0");
  const auto out = c.out_dir();

  const auto archive = uqdet::read_archive(archive_path);
  if (archive.empty()) throw uqdet::InvalidArgumentError("archive is empty");

  uqdet::ClassConditionalGaussian model;
  if (model_path) {
    model = uqdet::load_model(*model_path, archive.dim);
  } else {
    uqdet::FitOptions fo;
    fo.eps = a.eps;
    uqdet::FitReport fr;
    model = uqdet::fit(archive, fo, &fr);
    for (const auto& w : fr.warnings) warn(w);
  }
  std::vector<std::string> warnings;
  const auto table = uqdet::score_dataset(model, archive, &warnings);
  for (const auto& w : warnings) warn(w);

  uqdet::save_model(model, out / "model.uqgm");
  uqdet::write_scores(table, out / "scores.tsv");
  write_histograms(table, a.bins, out, true, true);
  log(c, "scored " + std::to_string(table.records.size()) + " objects in " +
             std::to_string(table.per_class_minmax.size()) + " classes (eps " +
             uqdet::io::format_double(model.regularization_eps()) + ", model " +
             uqdet::format_checksum(table.model_ref.checksum) + ") -> " + out.string());
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct ReportArgs {
  std::string scores, scope = "both";
  std::size_t bins = 10;
};

int run_report(const Common& c, const ReportArgs& a) {
  const auto path = existing(a.scores, "score file");
  if (a.bins < 1) throw UsageError("--bins must be >= 1");
  const auto out = c.out_dir();
  const auto table = uqdet::read_scores(path);
  const bool global = a.scope != "class";
  const bool per_class = a.scope != "global";
  write_histograms(table, a.bins, out, global, per_class);
  if (global) {
    const auto h = uqdet::histogram(table, a.bins, uqdet::HistogramScope::kGlobal);
    std::cout << uqdet::histogram_csv(h);
  }
  log(c, "histograms for " + std::to_string(table.records.size()) + " records -> " + out.string());
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct FilterArgs {
  std::string scores, annotations, strategy;
  double p = 0.95;
  std::size_t bins = 10;
  std::uint64_t seed = 0;
  bool remove_empty_images = false;
};

int run_filter(const Common& c, const FilterArgs& a) {
  const auto strategy = uqdet::parse_strategy(a.strategy);
  if (!strategy) throw UsageError("unknown --strategy '" + a.strategy + "'");
  if (*strategy == uqdet::FilterStrategy::kRedundancy) {
    if (!(a.p >= 0.0 && a.p < 1.0)) throw UsageError("--p must lie in [0, 1) for redundancy");
    if (a.bins < 1) throw UsageError("--bins must be >= 1");
  } else if (!(a.p > 0.0 && a.p <= 1.0)) {
    throw UsageError("--p must lie in (0, 1]");
  }
  const auto scores_path = existing(a.scores, "score file");
  const auto ann_path = existing(a.annotations, "annotation file");
  const auto out = c.out_dir();

  const auto table = uqdet::read_scores(scores_path);
  const auto index = uqdet::parse_dataset(ann_path);
  uqdet::FilterResult result;
  switch (*strategy) {
    case uqdet::FilterStrategy::kNoiseGlobal:
      result = uqdet::filter_noise_global(table, a.p);
      break;
    case uqdet::FilterStrategy::kNoisePerClass:
      result = uqdet::filter_noise_per_class(table, a.p);
      break;
    case uqdet::FilterStrategy::kRedundancy:
      result = uqdet::filter_redundant(table, a.bins, a.p, a.seed);
      break;
  }
  uqdet::ApplyOptions ao;
  ao.remove_empty_images = a.remove_empty_images;
  const auto filtered = uqdet::apply_filter(index, result, ao);

  uqdet::write_filter_result(result, out / "filter.txt");
  uqdet::write_dataset(filtered, out / "annotations_filtered.json");
  log(c, std::string(uqdet::to_string(*strategy)) + ": kept " + std::to_string(result.kept.size()) +
             ", dropped " + std::to_string(result.dropped.size()));
  if (result.threshold) log(c, "threshold " + uqdet::io::format_double(*result.threshold));
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct SynthArgs {
  uqdet::SynthConfig config;
  std::optional<double> p;
  bool write_data = false;
};

int run_synth(const Common& c, const SynthArgs& a) {
  if (a.p && !(*a.p > 0.0 && *a.p <= 1.0)) throw UsageError("--p must lie in (0, 1]");
  uqdet::validate(a.config);
  const auto out = c.out_dir();
  const auto rep = uqdet::recovery_experiment(a.config, a.p);
  const auto csv = uqdet::recovery_csv(a.config, rep);
  uqdet::io::write_file_atomic(out / "synth_report.csv", csv);
  if (a.write_data) {
    const auto data = uqdet::generate(a.config);
    uqdet::write_archive(data.archive, out / "synth_features.uqfa");
    uqdet::write_dataset(data.index, out / "synth_annotations.json");
    std::string truth = "annotation_id\toutlier\n";
    for (const auto& [id, label] : data.truth.labels) {
      truth += std::to_string(id) + "\t" + (label == uqdet::TruthLabel::kOutlier ? "1" : "0") + "\n";
    }
    uqdet::io::write_file_atomic(out / "synth_truth.tsv", truth);
  }
  std::cout << csv;
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct LossArgs {
  std::string csv, sign = "literal";
  double beta = uqdet::kBetaYolox;
  double gamma = 2.0;
  bool gradients = false;
};

int run_loss_eval(const Common&, const LossArgs& a) {
  const auto path = existing(a.csv, "CSV file");
  if (a.beta < 0) throw UsageError("--beta must be >= 0");
  if (a.gamma < 0) throw UsageError("--gamma must be >= 0");
  uqdet::LossBatch b;
  b.beta = a.beta;
  b.sign = a.sign == "max-entropy" ? uqdet::EntropySign::kMaxEntropy : uqdet::EntropySign::kLiteral;

  std::ifstream in(path);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    auto f = uqdet::io::split(line, ',');
    double prob = 0, score = 0;
    int target = 0;
    if (f.size() != 3 || !uqdet::io::parse_double(f[0], prob) ||
        !uqdet::io::parse_int(f[1], target) || !uqdet::io::parse_double(f[2], score)) {
      if (lineno == 1) continue;  // header
      throw uqdet::ParseError(path.string() + ":" + std::to_string(lineno) +
                                  ": expected prob,target,score",
                              lineno);
    }
    b.probs.push_back(prob);
    b.targets.push_back(target);
    b.scores.push_back(score);
  }
  if (b.probs.empty()) throw uqdet::ParseError(path.string() + ": no rows", 0);

  auto summary = [](const std::vector<double>& g) {
    double lo = g[0], hi = g[0], sum = 0, sq = 0;
    for (double x : g) {
      lo = std::min(lo, x);
      hi = std::max(hi, x);
      sum += x;
      sq += x * x;
    }
    return "min=" + uqdet::io::format_double(lo) + " max=" + uqdet::io::format_double(hi) +
           " mean=" + uqdet::io::format_double(sum / g.size()) +
           " l2=" + uqdet::io::format_double(std::sqrt(sq));
  };
  const auto ua_grad = uqdet::loss_gradient(b);
  const auto fl_grad = uqdet::focal_gradient(b.probs, b.targets, a.gamma);
  std::cout << "n=" << b.probs.size() << "\n"
            << "mean_bce=" << uqdet::io::format_double(uqdet::mean_bce(b.probs, b.targets)) << "\n"
            << "ua_entropy=" << uqdet::io::format_double(uqdet::ua_entropy_loss(b)) << "\n"
            << "constant_entropy="
            << uqdet::io::format_double(uqdet::constant_entropy_loss(b.probs, b.targets, b.beta, b.sign))
            << "\n"
            << "focal=" << uqdet::io::format_double(uqdet::focal_loss(b.probs, b.targets, a.gamma)) << "\n"
            << "ua_entropy_grad " << summary(ua_grad) << "\n"
            << "focal_grad " << summary(fl_grad) << "\n";
  if (a.gradients) {
    std::cout << "index,ua_entropy_grad,focal_grad\n";
    for (std::size_t i = 0; i < ua_grad.size(); ++i) {
      std::cout << i << "," << uqdet::io::format_double(ua_grad[i]) << ","
                << uqdet::io::format_double(fl_grad[i]) << "\n";
    }
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"uqdet: uncertainty scoring and curation for detection datasets"};
  app.set_config("--config", "", "Optional TOML/INI file mirroring the flags (flags win)");
  app.require_subcommand(1);
  app.fallthrough();
  Common common;
  app.add_option("--out", common.out, "Output directory")->capture_default_str();
  app.add_flag("-q,--quiet", common.quiet, "Only print errors and warnings");

  PoolArgs pool;
  auto* pool_cmd = app.add_subcommand("pool", "Pool one feature vector per annotated object");
  pool_cmd->add_option("--annotations", pool.annotations, "COCO annotation file")->required();
  pool_cmd->add_option("--features-dir", pool.features_dir, "Directory of UQFM0001 maps")->required();
  pool_cmd->add_option("--pool", pool.pool, "Pooling region")
      ->check(CLI::IsMember({"box", "mask"}))
      ->capture_default_str();
  pool_cmd->add_flag("--include-crowd", pool.include_crowd, "Also pool crowd annotations");
  pool_cmd->add_flag("--skip-missing", pool.skip_missing, "Skip images without a feature map");

  ScoreArgs score;
  auto* score_cmd = app.add_subcommand("score", "Fit the class-conditional model and score objects");
  score_cmd->add_option("--archive", score.archive, "Feature archive (UQFA0001)")->required();
  score_cmd->add_option("--model", score.model, "Use an existing model instead of fitting");
  score_cmd->add_option("--eps", score.eps, "Covariance regularisation override");
  score_cmd->add_option("--bins", score.bins, "Histogram bins")->capture_default_str();

  ReportArgs report;
  auto* report_cmd = app.add_subcommand("report", "Histogram reports from a score file");
  report_cmd->add_option("--scores", report.scores, "Score file")->required();
  report_cmd->add_option("--bins", report.bins, "Histogram bins")->capture_default_str();
  report_cmd->add_option("--scope", report.scope, "Histogram scope")
      ->check(CLI::IsMember({"global", "class", "both"}))
      ->capture_default_str();

  FilterArgs filter;
  auto* filter_cmd = app.add_subcommand("filter", "Filter annotations by score");
  filter_cmd->add_option("--scores", filter.scores, "Score file")->required();
  filter_cmd->add_option("--annotations", filter.annotations, "COCO annotation file")->required();
  filter_cmd->add_option("--strategy", filter.strategy, "noise-global | noise-class | redundancy")
      ->required();
  filter_cmd->add_option("--p", filter.p, "Quantile (noise) or drop fraction (redundancy)")
      ->capture_default_str();
  filter_cmd->add_option("--bins", filter.bins, "Score bins per class (redundancy)")
      ->capture_default_str();
  filter_cmd->add_option("--seed", filter.seed, "Random seed (redundancy)")->capture_default_str();
  filter_cmd->add_flag("--remove-empty-images", filter.remove_empty_images,
                       "Drop images left without annotations");

  SynthArgs synth;
  auto* synth_cmd = app.add_subcommand("synth", "Synthetic outlier-recovery experiment");
  synth_cmd->add_option("--classes", synth.config.class_count)->capture_default_str();
  synth_cmd->add_option("--dim", synth.config.dim)->capture_default_str();
  synth_cmd->add_option("--per-class", synth.config.per_class_count)->capture_default_str();
  synth_cmd->add_option("--separation", synth.config.mean_separation)->capture_default_str();
  synth_cmd->add_option("--contamination", synth.config.contamination_rate)->capture_default_str();
  synth_cmd->add_option("--shift", synth.config.outlier_shift)->capture_default_str();
  synth_cmd->add_option("--seed", synth.config.seed)->capture_default_str();
  synth_cmd->add_option("--p", synth.p, "Noise-filter quantile (default 1 - contamination)");
  synth_cmd->add_flag("--write-data", synth.write_data, "Also write archive, annotations and truth");

  LossArgs loss;
  auto* loss_cmd = app.add_subcommand("loss-eval", "Evaluate losses on prob,target,score rows");
  loss_cmd->add_option("--csv", loss.csv, "Input CSV")->required();
  loss_cmd->add_option("--beta", loss.beta)->capture_default_str();
  loss_cmd->add_option("--gamma", loss.gamma)->capture_default_str();
  loss_cmd->add_option("--sign", loss.sign)
      ->check(CLI::IsMember({"literal", "max-entropy"}))
      ->capture_default_str();
  loss_cmd->add_flag("--gradients", loss.gradients, "Print per-item gradients");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*pool_cmd) return run_pool(common, pool);
    if (*score_cmd) return run_score(common, score);
    if (*report_cmd) return run_report(common, report);
    if (*filter_cmd) return run_filter(common, filter);
    if (*synth_cmd) return run_synth(common, synth);
    if (*loss_cmd) return run_loss_eval(common, loss);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const uqdet::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e);
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  }
  return kExitUsage;
}
