#include "depthcast/optimize.hpp"

#include <cmath>
#include <fstream>
#include <string>

namespace depthcast {

namespace {

std::string logits_name(int s) { return "disparity_logits_" + std::to_string(s); }
std::string pose_name(std::size_t i) { return "pose_" + std::to_string(i); }

ScalarMap as_map(std::span<const double> v, int h, int w) { return ScalarMap(h, w, std::vector<double>(v.begin(), v.end())); }

// Logits per scale, finest first.
std::vector<ScalarMap> logits_from_params(const ParamVector& params, int h, int w, const OptimizeConfig& cfg) {
  const int ns = cfg.loss.scales;
  std::vector<ScalarMap> logits(static_cast<std::size_t>(ns));
  for (int s = ns - 1; s >= 0; --s) {
    const auto [hs, ws] = scale_shape(h, w, s);
    ScalarMap z = as_map(params.segment(logits_name(s)), hs, ws);
    if (cfg.shared_pyramid && s + 1 < ns) {
      const ScalarMap up = resize_bilinear(logits[s + 1], hs, ws);
      for (std::size_t i = 0; i < z.size(); ++i) z.data()[i] += up.data()[i];
    }
    logits[s] = std::move(z);
  }
  return logits;
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

DivergenceError::DivergenceError(int s, const std::string& what)
    : std::runtime_error("diverged at step " + std::to_string(s) + ": " + what), step(s) {}

void OptimizeConfig::validate() const {
  loss.validate();
  if (steps < 0) throw std::invalid_argument("optimize: steps must be non-negative");
  if (!(adam.lr > 0.0)) throw std::invalid_argument("optimize: learning rate must be positive");
}

ParamVector make_depth_pose_params(int height, int width, int scales, std::size_t context_frames) {
  ParamVector p;
  for (int s = 0; s < scales; ++s) {
    const auto [hs, ws] = scale_shape(height, width, s);
    p.add(logits_name(s), {hs, ws});
  }
  for (std::size_t i = 0; i < context_frames; ++i) p.add(pose_name(i), {6});
  return p;
}

std::vector<ScalarMap> disparities_from_params(const ParamVector& params, int height, int width,
                                               const OptimizeConfig& cfg) {
  std::vector<ScalarMap> sigma = logits_from_params(params, height, width, cfg);
  for (auto& m : sigma) {
    for (double& v : m.data()) v = sigmoid(v);
  }
  return sigma;
}

LossBreakdown depth_pose_objective(std::span<const ImageBuffer> context, const ImageBuffer& target,
                                   const Intrinsics& K, const OptimizeConfig& cfg, const ParamVector& params,
                                   ParamVector* grad) {
  const int h = target.height(), w = target.width();
  const std::vector<ScalarMap> sigma = disparities_from_params(params, h, w, cfg);
  std::vector<PoseParams> poses(context.size());
  for (std::size_t i = 0; i < context.size(); ++i) {
    const auto seg = params.segment(pose_name(i));
    std::copy(seg.begin(), seg.end(), poses[i].begin());
  }
  if (!grad) return total_loss(context, target, sigma, poses, K, cfg.loss);

  LossGradients lg;
  LossBreakdown out = total_loss(context, target, sigma, poses, K, cfg.loss, &lg);
  *grad = params.zeros_like();
  // Finest to coarsest: each scale's logit gradient also receives the
  // adjoint of the upsampling that fed the next finer scale.
  ScalarMap carry;
  for (int s = 0; s < cfg.loss.scales; ++s) {
    const auto [hs, ws] = scale_shape(h, w, s);
    ScalarMap g = lg.d_disparity[s];
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double sg = sigma[s].data()[i];
      g.data()[i] *= sg * (1.0 - sg);
    }
    if (cfg.shared_pyramid && s > 0) {
      const ScalarMap back = resize_bilinear_adjoint(carry, hs, ws);
      for (std::size_t i = 0; i < g.size(); ++i) g.data()[i] += back.data()[i];
    }
    auto seg = grad->segment(logits_name(s));
    std::copy(g.data().begin(), g.data().end(), seg.begin());
    carry = std::move(g);
  }
  for (std::size_t i = 0; i < context.size(); ++i) {
    auto seg = grad->segment(pose_name(i));
    std::copy(lg.d_pose[i].begin(), lg.d_pose[i].end(), seg.begin());
  }
  return out;
}

OptimizeResult optimize_depth_pose(std::span<const ImageBuffer> context, const ImageBuffer& target,
                                   const Intrinsics& K, const OptimizeConfig& cfg) {
  cfg.validate();
  const int h = target.height(), w = target.width();
  ParamVector params = make_depth_pose_params(h, w, cfg.loss.scales, context.size());
  AdamState state(cfg.adam);
  OptimizeResult result;
  ParamVector grad;

  for (int step = 0; step <= cfg.steps; ++step) {
    const bool last = step == cfg.steps;
    const double lr = state.current_lr();
    LossBreakdown lb;
    try {
      lb = depth_pose_objective(context, target, K, cfg, params, last ? nullptr : &grad);
    } catch (const std::domain_error& e) {
      throw DivergenceError(step, e.what());
    }
    if (!std::isfinite(lb.total)) throw DivergenceError(step, "loss is not finite");
    result.history.push_back({step, lb.total, lb.photometric, lb.smoothness, lr});
    if (last) {
      result.final_loss = std::move(lb);
      break;
    }
    try {
      adam_step(params, grad, state);
    } catch (const std::domain_error& e) {
      throw DivergenceError(step, e.what());
    }
  }

  result.disparity = disparities_from_params(params, h, w, cfg);
  result.depth = disparity_to_depth(result.disparity.front(), cfg.loss.range);
  for (std::size_t i = 0; i < context.size(); ++i) {
    PoseParams p{};
    const auto seg = params.segment(pose_name(i));
    std::copy(seg.begin(), seg.end(), p.begin());
    result.poses.push_back(p);
  }
  return result;
}

void write_loss_csv(const std::filesystem::path& path, std::span<const LossRecord> history) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.precision(17);
  out << "step,total,photometric,smoothness,lr\n";
  for (const auto& r : history) {
    out << r.step << ',' << r.total << ',' << r.photometric << ',' << r.smoothness << ',' << r.lr << '\n';
  }
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

nlohmann::json to_json(const LossConfig& c) {
  return {{"alpha", c.alpha},
          {"alpha_d", c.alpha_d},
          {"scales", c.scales},
          {"ssim_c1", c.ssim_c1},
          {"ssim_c2", c.ssim_c2},
          {"automask", c.automask_enabled},
          {"min_reprojection", c.min_reprojection},
          {"min_depth", c.range.min_depth},
          {"max_depth", c.range.max_depth}};
}

nlohmann::json to_json(const AdamConfig& c) {
  return {{"lr", c.lr},     {"beta1", c.beta1},           {"beta2", c.beta2},
          {"eps", c.eps},   {"decay_step", c.decay_step}, {"decayed_lr", c.decayed_lr}};
}

nlohmann::json to_json(const OptimizeConfig& c) {
  return {{"loss", to_json(c.loss)}, {"adam", to_json(c.adam)}, {"steps", c.steps}, {"shared_pyramid", c.shared_pyramid}};
}

}  // namespace depthcast
