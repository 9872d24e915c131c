#pragma once

#include <span>
#include <vector>

#include "depthcast/geometry.hpp"
#include "depthcast/image.hpp"
#include "depthcast/warp.hpp"

namespace depthcast {

struct LossConfig {
  double alpha = 0.15;     // L1 weight; SSIM gets 1 - alpha
  double alpha_d = 0.001;  // smoothness weight
  int scales = 4;
  double ssim_c1 = 0.01 * 0.01;
  double ssim_c2 = 0.03 * 0.03;
  bool automask_enabled = true;
  /// Per-pixel minimum over context frames instead of the mean.
  bool min_reprojection = false;
  DepthRange range{};

  /// Throws std::invalid_argument when a field is out of range.
  void validate() const;
};

/// Per-pixel channel-mean |target - recon|, zero where the warp is invalid.
ScalarMap l1_photo(const ImageBuffer& target, const WarpResult& recon);

/// Per-pixel (1 - SSIM) / 2 over 3x3 windows, channel-averaged. Windows are
/// truncated at the border and normalized by their in-image pixel count.
ScalarMap ssim_dissim(const ImageBuffer& target, const ImageBuffer& recon, double c1 = 1e-4, double c2 = 9e-4);

/// (1 - alpha) ssim_dissim + alpha l1, zeroed outside the warp's valid mask.
ScalarMap photometric(const ImageBuffer& target, const WarpResult& recon, const LossConfig& cfg);
/// Same, treating every pixel of `other` as valid.
ScalarMap photometric(const ImageBuffer& target, const ImageBuffer& other, const LossConfig& cfg);

/// Adjoint of photometric() with respect to the reconstruction; returns an
/// H*W*C array laid out like ImageBuffer.
std::vector<double> photometric_backward(const ImageBuffer& target, const WarpResult& recon, const LossConfig& cfg,
                                         const ScalarMap& grad_pe);

/// Edge-aware smoothness of the mean-normalized disparity, averaged over
/// pixels. Throws std::domain_error if mean(disparity) < 1e-12.
double smoothness(const ScalarMap& disparity, const ImageBuffer& img);
ScalarMap smoothness_backward(const ScalarMap& disparity, const ImageBuffer& img, double grad_out);

/// 1 where pe(target, recon) < pe(target, unwarped) (strict), else 0.
ScalarMap auto_mask(const ImageBuffer& target, const WarpResult& recon, const ImageBuffer& unwarped_source,
                    const LossConfig& cfg);
ScalarMap auto_mask(const ScalarMap& pe_recon, const ScalarMap& pe_identity);

struct ScaleTerms {
  double photometric = 0.0;
  double smoothness = 0.0;
  double mask_fraction = 0.0;  // share of pixels with mu = 1
};

struct LossBreakdown {
  double total = 0.0;
  double photometric = 0.0;  // sum over scales of the masked photometric term
  double smoothness = 0.0;   // sum over scales, before the alpha_d weight
  ScalarMap per_pixel_pe;    // aggregated photometric error at scale 0
  ScalarMap mask;            // auto-mask at scale 0
  std::vector<ScaleTerms> per_scale;
};

struct LossGradients {
  std::vector<ScalarMap> d_disparity;  // one per scale, at native resolution
  std::vector<PoseParams> d_pose;      // one per context frame
};

/// Multi-scale objective. `context` is ordered oldest to newest and its last
/// frame is the unwarped reference for auto-masking. `disparities[s]` has
/// shape (H >> s, W >> s); `poses[i]` maps target-camera points into the
/// camera of context[i]. When `grad` is non-null it receives the gradient of
/// `total` with the auto-mask held constant.
LossBreakdown total_loss(std::span<const ImageBuffer> context, const ImageBuffer& target,
                         std::span<const ScalarMap> disparities, std::span<const PoseParams> poses,
                         const Intrinsics& K, const LossConfig& cfg, LossGradients* grad = nullptr);

/// Shape of pyramid level s for an (h, w) image.
std::pair<int, int> scale_shape(int h, int w, int s);

namespace serial {

ScalarMap ssim_dissim(const ImageBuffer& target, const ImageBuffer& recon, double c1, double c2);
std::vector<double> photometric_backward(const ImageBuffer& target, const WarpResult& recon, const LossConfig& cfg,
                                         const ScalarMap& grad_pe);

}  // namespace serial

}  // namespace depthcast
