#include "depthcast/eval.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include <Eigen/Geometry>

namespace depthcast::eval {

namespace {

void check_shapes(const ScalarMap& pred, const ScalarMap& gt, const ScalarMap& valid) {
  if (!pred.same_shape(gt) || !pred.same_shape(valid)) {
    throw std::invalid_argument("depth evaluation: pred, gt and valid mask must share a shape");
  }
}

// Pixels that enter the evaluation, in row-major order.
std::vector<std::size_t> evaluated(const ScalarMap& gt, const ScalarMap& valid, double cap) {
  std::vector<std::size_t> idx;
  const auto g = gt.data();
  const auto v = valid.data();
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (v[i] != 0.0 && g[i] > 0.0 && g[i] <= cap) idx.push_back(i);
  }
  return idx;
}

double scale_over(const ScalarMap& pred, const ScalarMap& gt, const std::vector<std::size_t>& idx) {
  std::vector<double> p, g;
  p.reserve(idx.size());
  g.reserve(idx.size());
  for (std::size_t i : idx) {
    p.push_back(pred.data()[i]);
    g.push_back(gt.data()[i]);
  }
  const double mp = lower_median(std::move(p));
  if (!(mp > 0.0)) throw std::domain_error("median scaling: predicted median must be positive");
  return lower_median(std::move(g)) / mp;
}

DepthMetrics accumulate(const ScalarMap& pred, const ScalarMap& gt, const std::vector<std::size_t>& idx, double scale,
                        const EvalConfig& cfg) {
  if (idx.empty()) throw std::domain_error("depth evaluation: no valid pixels");
  DepthMetrics m;
  double se = 0.0, sle = 0.0;
  std::size_t d1 = 0, d2 = 0, d3 = 0;
  for (std::size_t i : idx) {
    const double p = std::clamp(pred.data()[i] * scale, cfg.min_depth, cfg.depth_cap);
    const double g = std::max(gt.data()[i], cfg.min_depth);
    const double diff = p - g;
    m.abs_rel += std::abs(diff) / g;
    m.sq_rel += diff * diff / g;
    se += diff * diff;
    const double ld = std::log(p) - std::log(g);
    sle += ld * ld;
    const double ratio = std::max(p / g, g / p);
    d1 += ratio < 1.25;
    d2 += ratio < 1.25 * 1.25;
    d3 += ratio < 1.25 * 1.25 * 1.25;
  }
  const double n = static_cast<double>(idx.size());
  m.abs_rel /= n;
  m.sq_rel /= n;
  m.rmse = std::sqrt(se / n);
  m.rmse_log = std::sqrt(sle / n);
  m.delta1 = d1 / n;
  m.delta2 = d2 / n;
  m.delta3 = d3 / n;
  m.count = idx.size();
  return m;
}

}  // namespace

void EvalConfig::validate() const {
  if (!(min_depth > 0.0) || !(depth_cap > min_depth)) {
    throw std::invalid_argument("eval config: need 0 < min_depth < depth_cap");
  }
  for (std::size_t i = 0; i < range_bins.size(); ++i) {
    if (!(range_bins[i].hi > range_bins[i].lo)) throw std::invalid_argument("eval config: empty range bin");
    if (i > 0 && range_bins[i].lo < range_bins[i - 1].hi) {
      throw std::invalid_argument("eval config: range bins must be ordered and non-overlapping");
    }
  }
}

double lower_median(std::vector<double> values) {
  if (values.empty()) throw std::domain_error("median of an empty set");
  const auto mid = values.begin() + static_cast<std::ptrdiff_t>((values.size() - 1) / 2);
  std::nth_element(values.begin(), mid, values.end());
  return *mid;
}

ScaledDepth median_scale(const ScalarMap& pred, const ScalarMap& gt, const ScalarMap& valid) {
  check_shapes(pred, gt, valid);
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < valid.size(); ++i) {
    if (valid.data()[i] != 0.0) idx.push_back(i);
  }
  if (idx.empty()) throw std::domain_error("median scaling: no valid pixels");
  const double s = scale_over(pred, gt, idx);
  ScaledDepth out{pred, s};
  for (double& v : out.pred.data()) v *= s;
  return out;
}

DepthMetrics depth_metrics(const ScalarMap& pred, const ScalarMap& gt, const ScalarMap& valid, const EvalConfig& cfg) {
  cfg.validate();
  check_shapes(pred, gt, valid);
  const auto idx = evaluated(gt, valid, cfg.depth_cap);
  if (idx.empty()) throw std::domain_error("depth evaluation: no valid pixels");
  const double s = cfg.median_scaling ? scale_over(pred, gt, idx) : 1.0;
  return accumulate(pred, gt, idx, s, cfg);
}

RangeReport range_filtered_metrics(const ScalarMap& pred, const ScalarMap& gt, const ScalarMap& valid,
                                   const EvalConfig& cfg) {
  cfg.validate();
  check_shapes(pred, gt, valid);
  const auto idx = evaluated(gt, valid, cfg.depth_cap);
  if (idx.empty()) throw std::domain_error("depth evaluation: no valid pixels");
  RangeReport report;
  report.scale = cfg.median_scaling ? scale_over(pred, gt, idx) : 1.0;
  for (const RangeBin& bin : cfg.range_bins) {
    std::vector<std::size_t> in_bin;
    for (std::size_t i : idx) {
      const double g = gt.data()[i];
      if (g > bin.lo && g <= bin.hi) in_bin.push_back(i);
    }
    BinMetrics bm{bin, static_cast<double>(in_bin.size()) / static_cast<double>(idx.size()), std::nullopt};
    if (!in_bin.empty()) bm.metrics = accumulate(pred, gt, in_bin, report.scale, cfg);
    report.bins.push_back(bm);
  }
  return report;
}

AteResult ate(const synth::Trajectory& pred, const synth::Trajectory& gt, bool align_scale, int snippet_length) {
  const std::size_t n = pred.cam_to_world.size();
  if (n != gt.cam_to_world.size()) throw std::invalid_argument("ate: trajectories differ in length");
  if (n < 2) throw std::invalid_argument("ate: need at least 2 poses");
  if (snippet_length < 2) throw std::invalid_argument("ate: snippet length must be at least 2");
  const std::size_t len = std::min(n, static_cast<std::size_t>(snippet_length));

  std::vector<double> errors;
  for (std::size_t start = 0; start + len <= n; ++start) {
    Eigen::Matrix3Xd src(3, len), dst(3, len);
    for (std::size_t j = 0; j < len; ++j) {
      src.col(static_cast<Eigen::Index>(j)) = pred.cam_to_world[start + j].translation();
      dst.col(static_cast<Eigen::Index>(j)) = gt.cam_to_world[start + j].translation();
    }
    const auto spread = [](const Eigen::Matrix3Xd& m) {
      return (m.colwise() - m.rowwise().mean()).squaredNorm();
    };
    if (spread(src) == 0.0 || spread(dst) == 0.0) {
      throw std::domain_error("ate: degenerate window, all positions identical");
    }
    const Eigen::Matrix4d T = Eigen::umeyama(src, dst, align_scale);
    const Eigen::Matrix3Xd aligned = (T.topLeftCorner<3, 3>() * src).colwise() + T.topRightCorner<3, 1>();
    errors.push_back(std::sqrt((aligned - dst).colwise().squaredNorm().mean()));
  }
  AteResult r;
  r.snippets = errors.size();
  for (double e : errors) r.mean += e;
  r.mean /= static_cast<double>(errors.size());
  for (double e : errors) r.std += (e - r.mean) * (e - r.mean);
  r.std = std::sqrt(r.std / static_cast<double>(errors.size()));
  return r;
}

nlohmann::json to_json(const DepthMetrics& m) {
  return {{"abs_rel", m.abs_rel}, {"sq_rel", m.sq_rel},   {"rmse", m.rmse},     {"rmse_log", m.rmse_log},
          {"delta1", m.delta1},   {"delta2", m.delta2},   {"delta3", m.delta3}, {"count", m.count}};
}

nlohmann::json to_json(const RangeReport& r) {
  nlohmann::json bins = nlohmann::json::array();
  for (const auto& b : r.bins) {
    nlohmann::json jb{{"lo", b.bin.lo}, {"hi", b.bin.hi}, {"fraction", b.fraction}};
    jb["metrics"] = b.metrics ? to_json(*b.metrics) : nlohmann::json(nullptr);
    bins.push_back(std::move(jb));
  }
  return {{"scale", r.scale}, {"bins", bins}};
}

nlohmann::json to_json(const AteResult& a) {
  return {{"mean", a.mean}, {"std", a.std}, {"snippets", a.snippets}};
}

nlohmann::json to_json(const EvalConfig& c) {
  nlohmann::json bins = nlohmann::json::array();
  for (const auto& b : c.range_bins) bins.push_back({b.lo, b.hi});
  return {{"depth_cap", c.depth_cap}, {"min_depth", c.min_depth}, {"median_scaling", c.median_scaling},
          {"range_bins", bins}};
}

std::string csv_header() { return "abs_rel,sq_rel,rmse,rmse_log,delta1,delta2,delta3"; }

std::string csv_row(const DepthMetrics& m) {
  std::ostringstream os;
  os.precision(17);
  os << m.abs_rel << ',' << m.sq_rel << ',' << m.rmse << ',' << m.rmse_log << ',' << m.delta1 << ',' << m.delta2
     << ',' << m.delta3;
  return os.str();
}

}  // namespace depthcast::eval
