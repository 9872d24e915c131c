#include "depthcast/warp.hpp"

#include <cmath>
#include <stdexcept>

#include <Eigen/Core>

namespace depthcast {

namespace detail {

double snap(double x) {
  const double r = std::round(x);
  return std::abs(x - r) < kSnapTolerance ? r : x;
}

}  // namespace detail

namespace {

using Row26 = Eigen::Matrix<double, 2, 6>;

void check_inputs(const ImageBuffer& source, const ScalarMap& depth) {
  if (source.height() != depth.height() || source.width() != depth.width()) {
    throw std::domain_error("reverse_warp: source and depth dimensions differ");
  }
  for (double d : depth.data()) {
    if (!(d > 0.0) || !std::isfinite(d)) throw std::domain_error("reverse_warp: depth must be positive and finite");
  }
}

// Everything the per-pixel kernels need about the pose, computed once.
struct PoseCache {
  Mat3 R;
  Vec3 t;
  std::array<Mat3, 3> dR;

  static PoseCache from_params(const PoseParams& xi) {
    const Vec3 r(xi[0], xi[1], xi[2]);
    return {rodrigues(r), Vec3(xi[3], xi[4], xi[5]), rotation_derivatives(r)};
  }
  static PoseCache from_pose(const Pose& p) { return {p.rotation(), p.translation(), {}}; }
};

struct PixelWarp {
  bool in_front = false;
  Pixel src;
  Eigen::Vector2d duv_dD = Eigen::Vector2d::Zero();
  Row26 duv_dxi = Row26::Zero();
};

template <bool kWithJacobian>
PixelWarp warp_pixel(int r, int c, double D, const PoseCache& pc, const Intrinsics& K) {
  PixelWarp pw;
  const Vec3 ray((c - K.cx) / K.fx, (r - K.cy) / K.fy, 1.0);
  const Vec3 P = D * ray;
  const Vec3 Pc = pc.R * P + pc.t;
  if (Pc.z() <= kMinWarpDepth) return pw;
  pw.in_front = true;
  const double iz = 1.0 / Pc.z();
  pw.src.u = detail::snap(K.fx * Pc.x() * iz + K.cx);
  pw.src.v = detail::snap(K.fy * Pc.y() * iz + K.cy);
  if constexpr (kWithJacobian) {
    Eigen::Matrix<double, 2, 3> Jp;
    Jp << K.fx * iz, 0.0, -K.fx * Pc.x() * iz * iz,
          0.0, K.fy * iz, -K.fy * Pc.y() * iz * iz;
    pw.duv_dD = Jp * (pc.R * ray);
    for (int i = 0; i < 3; ++i) pw.duv_dxi.col(i) = Jp * (pc.dR[i] * P);
    pw.duv_dxi.rightCols<3>() = Jp;
  }
  return pw;
}

}  // namespace

WarpResult reverse_warp(const ImageBuffer& source, const ScalarMap& target_depth, const Pose& tar_to_src,
                        const Intrinsics& K) {
  check_inputs(source, target_depth);
  const int h = source.height();
  const int w = source.width();
  const int nc = source.channels();
  WarpResult out{ImageBuffer(h, w, nc), ScalarMap(h, w), ScalarMap(h, w), ScalarMap(h, w)};
  const PoseCache pc = PoseCache::from_pose(tar_to_src);
  const GridView view(source);

#pragma omp parallel for schedule(static)
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      const PixelWarp pw = warp_pixel<false>(r, c, target_depth(r, c), pc, K);
      if (!pw.in_front) {
        out.coord_u(r, c) = -1.0;
        out.coord_v(r, c) = -1.0;
        continue;
      }
      out.coord_u(r, c) = pw.src.u;
      out.coord_v(r, c) = pw.src.v;
      const SampleResult s = bilinear_sample(view, pw.src);
      if (!s.valid) continue;
      out.valid_mask(r, c) = 1.0;
      for (int ch = 0; ch < nc; ++ch) out.image(r, c, ch) = s.value[ch];
    }
  }
  return out;
}

WarpJacobians warp_jacobians(const ImageBuffer& source, const ScalarMap& target_depth, const PoseParams& pose,
                             const Intrinsics& K) {
  check_inputs(source, target_depth);
  const int h = source.height();
  const int w = source.width();
  const int nc = source.channels();
  WarpJacobians J;
  J.height = h;
  J.width = w;
  J.channels = nc;
  J.d_depth.assign(static_cast<std::size_t>(h) * w * nc, 0.0);
  J.d_pose.assign(static_cast<std::size_t>(h) * w * nc * 6, 0.0);
  const PoseCache pc = PoseCache::from_params(pose);
  const GridView view(source);

#pragma omp parallel for schedule(static)
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      const PixelWarp pw = warp_pixel<true>(r, c, target_depth(r, c), pc, K);
      if (!pw.in_front) continue;
      const SampleResult s = bilinear_sample(view, pw.src);
      if (!s.valid) continue;
      for (int ch = 0; ch < nc; ++ch) {
        const Eigen::RowVector2d g(s.d_value_d_uv[ch][0], s.d_value_d_uv[ch][1]);
        const std::size_t i = (static_cast<std::size_t>(r) * w + c) * nc + ch;
        J.d_depth[i] = g * pw.duv_dD;
        const Eigen::Matrix<double, 1, 6> gp = g * pw.duv_dxi;
        for (int k = 0; k < 6; ++k) J.d_pose[i * 6 + k] = gp(k);
      }
    }
  }
  return J;
}

WarpGradients warp_backward(const ImageBuffer& source, const ScalarMap& target_depth, const PoseParams& pose,
                            const Intrinsics& K, std::span<const double> grad_recon) {
  check_inputs(source, target_depth);
  const int h = source.height();
  const int w = source.width();
  const int nc = source.channels();
  if (grad_recon.size() != static_cast<std::size_t>(h) * w * nc) {
    throw std::domain_error("warp_backward: gradient size does not match the image");
  }
  WarpGradients out{ScalarMap(h, w), {}};
  std::vector<Eigen::Matrix<double, 1, 6>> row_pose(h, Eigen::Matrix<double, 1, 6>::Zero());
  const PoseCache pc = PoseCache::from_params(pose);
  const GridView view(source);

#pragma omp parallel for schedule(static)
  for (int r = 0; r < h; ++r) {
    Eigen::Matrix<double, 1, 6> acc = Eigen::Matrix<double, 1, 6>::Zero();
    for (int c = 0; c < w; ++c) {
      const PixelWarp pw = warp_pixel<true>(r, c, target_depth(r, c), pc, K);
      if (!pw.in_front) continue;
      const SampleResult s = bilinear_sample(view, pw.src);
      if (!s.valid) continue;
      Eigen::RowVector2d g = Eigen::RowVector2d::Zero();
      for (int ch = 0; ch < nc; ++ch) {
        const double go = grad_recon[(static_cast<std::size_t>(r) * w + c) * nc + ch];
        g += go * Eigen::RowVector2d(s.d_value_d_uv[ch][0], s.d_value_d_uv[ch][1]);
      }
      out.d_depth(r, c) = g * pw.duv_dD;
      acc += g * pw.duv_dxi;
    }
    row_pose[r] = acc;
  }
  Eigen::Matrix<double, 1, 6> total = Eigen::Matrix<double, 1, 6>::Zero();
  for (int r = 0; r < h; ++r) total += row_pose[r];
  for (int k = 0; k < 6; ++k) out.d_pose[k] = total(k);
  return out;
}

}  // namespace depthcast
