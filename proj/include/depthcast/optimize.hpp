#pragma once

#include <filesystem>
#include <span>
#include <stdexcept>
#include <vector>

#include <json.hpp>

#include "depthcast/adam.hpp"
#include "depthcast/loss.hpp"
#include "depthcast/params.hpp"

namespace depthcast {

struct OptimizeConfig {
  LossConfig loss;
  AdamConfig adam;
  int steps = 3000;
  /// Logits at scale s are a free residual plus the upsampled logits of
  /// scale s + 1, so coarse levels are shared by all finer ones. When false
  /// every scale has independent logits.
  bool shared_pyramid = true;

  void validate() const;
};

struct LossRecord {
  int step = 0;
  double total = 0.0;
  double photometric = 0.0;
  double smoothness = 0.0;
  double lr = 0.0;
};

struct OptimizeResult {
  std::vector<ScalarMap> disparity;  // sigma per scale, native resolution
  ScalarMap depth;                   // from the finest scale
  std::vector<PoseParams> poses;     // target camera -> context camera i
  std::vector<LossRecord> history;   // one record per step, before its update, plus the final loss
  LossBreakdown final_loss;
};

/// Loss became non-finite; `step` is the 0-based step at which it happened.
struct DivergenceError : std::runtime_error {
  DivergenceError(int step, const std::string& what);
  int step;
};

/// Parameter layout used by the optimizer: one "disparity_logits_<s>" segment
/// per scale followed by "pose_<i>" per context frame. Logits start at 0,
/// poses at identity.
ParamVector make_depth_pose_params(int height, int width, int scales, std::size_t context_frames);

/// Evaluates total_loss at `params`; fills `grad` (same layout) if non-null.
LossBreakdown depth_pose_objective(std::span<const ImageBuffer> context, const ImageBuffer& target,
                                   const Intrinsics& K, const OptimizeConfig& cfg, const ParamVector& params,
                                   ParamVector* grad);

/// Per-scale sigma maps encoded by `params`.
std::vector<ScalarMap> disparities_from_params(const ParamVector& params, int height, int width,
                                               const OptimizeConfig& cfg);

OptimizeResult optimize_depth_pose(std::span<const ImageBuffer> context, const ImageBuffer& target,
                                   const Intrinsics& K, const OptimizeConfig& cfg);

/// Columns: step,total,photometric,smoothness,lr.
void write_loss_csv(const std::filesystem::path& path, std::span<const LossRecord> history);

nlohmann::json to_json(const LossConfig& c);
nlohmann::json to_json(const AdamConfig& c);
nlohmann::json to_json(const OptimizeConfig& c);

}  // namespace depthcast
