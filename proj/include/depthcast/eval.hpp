#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "depthcast/image.hpp"
#include "depthcast/synth.hpp"

namespace depthcast::eval {

struct DepthMetrics {
  double abs_rel = 0.0;
  double sq_rel = 0.0;
  double rmse = 0.0;
  double rmse_log = 0.0;
  double delta1 = 0.0;
  double delta2 = 0.0;
  double delta3 = 0.0;
  std::size_t count = 0;  // pixels evaluated
};

struct RangeBin {
  double lo = 0.0;  // exclusive
  double hi = 0.0;  // inclusive
};

struct EvalConfig {
  double depth_cap = 80.0;
  double min_depth = 1e-3;
  bool median_scaling = false;
  std::vector<RangeBin> range_bins{{0.0, 10.0}, {10.0, 30.0}, {30.0, 80.0}};

  /// Bins must be ordered and non-overlapping; min_depth < depth_cap.
  void validate() const;
};

struct ScaledDepth {
  ScalarMap pred;
  double scale = 1.0;
};

/// pred * median(gt) / median(pred) over pixels where valid != 0. Even
/// counts take the lower-middle element. Throws std::domain_error when no
/// pixel is valid.
ScaledDepth median_scale(const ScalarMap& pred, const ScalarMap& gt, const ScalarMap& valid);

/// Lower-middle median; throws std::domain_error on an empty input.
double lower_median(std::vector<double> values);

/// Evaluates over valid pixels with gt in (0, depth_cap]. When
/// cfg.median_scaling is set, pred is scaled first; then pred is clamped to
/// [min_depth, depth_cap].
DepthMetrics depth_metrics(const ScalarMap& pred, const ScalarMap& gt, const ScalarMap& valid, const EvalConfig& cfg);

struct BinMetrics {
  RangeBin bin;
  double fraction = 0.0;                // share of evaluated pixels in the bin
  std::optional<DepthMetrics> metrics;  // absent when the bin is empty
};

struct RangeReport {
  double scale = 1.0;  // shared median scale (1 without median scaling)
  std::vector<BinMetrics> bins;
};

/// Bins by ground-truth depth; the median scale is computed once over the
/// whole evaluated set.
RangeReport range_filtered_metrics(const ScalarMap& pred, const ScalarMap& gt, const ScalarMap& valid,
                                   const EvalConfig& cfg);

struct AteResult {
  double mean = 0.0;
  double std = 0.0;  // population standard deviation over snippets
  std::size_t snippets = 0;
};

/// Sliding windows of `snippet_length` poses (the whole trajectory if it is
/// shorter). Each window is aligned to ground truth by least squares (rigid,
/// or similarity when align_scale) and scored by the RMS position error.
/// Throws std::invalid_argument on length mismatch or fewer than 2 poses and
/// std::domain_error when a window's positions are all identical.
AteResult ate(const synth::Trajectory& pred, const synth::Trajectory& gt, bool align_scale, int snippet_length = 5);

nlohmann::json to_json(const DepthMetrics& m);
nlohmann::json to_json(const RangeReport& r);
nlohmann::json to_json(const AteResult& a);
nlohmann::json to_json(const EvalConfig& c);

/// Column order: abs_rel, sq_rel, rmse, rmse_log, delta1, delta2, delta3.
std::string csv_header();
std::string csv_row(const DepthMetrics& m);

}  // namespace depthcast::eval
