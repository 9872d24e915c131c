#pragma once

#include <vector>

#include "depthcast/geometry.hpp"
#include "depthcast/image.hpp"

namespace depthcast {

/// Points whose transformed depth is at or below this are treated as behind
/// the source camera.
inline constexpr double kMinWarpDepth = 1e-6;

/// Projected coordinates closer than this to an integer are snapped to it,
/// so that an identity warp samples pixel centres exactly.
inline constexpr double kSnapTolerance = 1e-9;

struct WarpResult {
  ImageBuffer image;     // reconstructed target; zero where invalid
  ScalarMap valid_mask;  // 1 where the sample is usable, else 0
  ScalarMap coord_u;     // continuous source column per target pixel
  ScalarMap coord_v;     // continuous source row per target pixel
};

/// Reconstructs the target view by sampling `source` at the projections of
/// the target pixels lifted with `target_depth` and moved by `tar_to_src`.
/// Throws std::domain_error on shape mismatch or non-positive depth.
WarpResult reverse_warp(const ImageBuffer& source, const ScalarMap& target_depth, const Pose& tar_to_src,
                        const Intrinsics& K);

/// Per-pixel derivatives of the reconstruction. Entries for masked pixels are
/// exactly zero.
struct WarpJacobians {
  int height = 0;
  int width = 0;
  int channels = 0;
  std::vector<double> d_depth;  // [H*W*C]
  std::vector<double> d_pose;   // [H*W*C*6], pose parameter order (rx, ry, rz, tx, ty, tz)

  double depth_at(int r, int c, int ch) const { return d_depth[flat(r, c, ch)]; }
  double pose_at(int r, int c, int ch, int k) const { return d_pose[flat(r, c, ch) * 6 + k]; }

 private:
  std::size_t flat(int r, int c, int ch) const { return (static_cast<std::size_t>(r) * width + c) * channels + ch; }
};

WarpJacobians warp_jacobians(const ImageBuffer& source, const ScalarMap& target_depth, const PoseParams& pose,
                             const Intrinsics& K);

struct WarpGradients {
  ScalarMap d_depth;
  PoseParams d_pose{};
};

/// Vector-Jacobian product: given dL/d(reconstruction) (an H*W*C array laid
/// out like ImageBuffer), returns dL/d(depth) and dL/d(pose params). The pose
/// gradient is reduced in row-major order.
WarpGradients warp_backward(const ImageBuffer& source, const ScalarMap& target_depth, const PoseParams& pose,
                            const Intrinsics& K, std::span<const double> grad_recon);

namespace serial {

/// Straight-line reference built from backproject / project / bilinear_sample.
WarpResult reverse_warp(const ImageBuffer& source, const ScalarMap& target_depth, const Pose& tar_to_src,
                        const Intrinsics& K);
WarpGradients warp_backward(const ImageBuffer& source, const ScalarMap& target_depth, const PoseParams& pose,
                            const Intrinsics& K, std::span<const double> grad_recon);

}  // namespace serial

namespace detail {

double snap(double x);

}  // namespace detail

}  // namespace depthcast
