// Single-threaded reference kernels kept for testing and benchmarking.

#include <stdexcept>

#include "depthcast/warp.hpp"

namespace depthcast::serial {

WarpResult reverse_warp(const ImageBuffer& source, const ScalarMap& target_depth, const Pose& tar_to_src,
                        const Intrinsics& K) {
  if (!source.height() || source.height() != target_depth.height() || source.width() != target_depth.width()) {
    throw std::domain_error("reverse_warp: source and depth dimensions differ");
  }
  const int h = source.height();
  const int w = source.width();
  WarpResult out{ImageBuffer(h, w, source.channels()), ScalarMap(h, w), ScalarMap(h, w, -1.0), ScalarMap(h, w, -1.0)};
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      const Point3 P = tar_to_src.apply(backproject(Pixel{double(c), double(r)}, target_depth(r, c), K));
      if (P.z() <= kMinWarpDepth) continue;
      Pixel q = project(P, K);
      q.u = detail::snap(q.u);
      q.v = detail::snap(q.v);
      out.coord_u(r, c) = q.u;
      out.coord_v(r, c) = q.v;
      const SampleResult s = bilinear_sample(source, q);
      if (!s.valid) continue;
      out.valid_mask(r, c) = 1.0;
      for (int ch = 0; ch < source.channels(); ++ch) out.image(r, c, ch) = s.value[ch];
    }
  }
  return out;
}

WarpGradients warp_backward(const ImageBuffer& source, const ScalarMap& target_depth, const PoseParams& pose,
                            const Intrinsics& K, std::span<const double> grad_recon) {
  const int h = source.height();
  const int w = source.width();
  const int nc = source.channels();
  const Vec3 rvec(pose[0], pose[1], pose[2]);
  const Pose T = pose_from_params(pose);
  WarpGradients out{ScalarMap(h, w), {}};
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      const Pixel p{double(c), double(r)};
      const double D = target_depth(r, c);
      const Point3 P = backproject(p, D, K);
      const Point3 Pc = T.apply(P);
      if (Pc.z() <= kMinWarpDepth) continue;
      Pixel q = project(Pc, K);
      q.u = detail::snap(q.u);
      q.v = detail::snap(q.v);
      const SampleResult s = bilinear_sample(source, q);
      if (!s.valid) continue;

      // d(u, v)/dPc
      const double X = Pc.x(), Y = Pc.y(), Z = Pc.z();
      Eigen::Matrix<double, 2, 3> Jp;
      Jp << K.fx / Z, 0.0, -K.fx * X / (Z * Z),
            0.0, K.fy / Z, -K.fy * Y / (Z * Z);
      const Vec3 dPc_dD = T.rotation() * (P / D);
      const Mat3 dPc_dr = rotate_point_jacobian(rvec, P);

      double gu = 0.0, gv = 0.0;
      for (int ch = 0; ch < nc; ++ch) {
        const double go = grad_recon[(static_cast<std::size_t>(r) * w + c) * nc + ch];
        gu += go * s.d_value_d_uv[ch][0];
        gv += go * s.d_value_d_uv[ch][1];
      }
      const Eigen::RowVector2d g(gu, gv);
      out.d_depth(r, c) = g * Jp * dPc_dD;
      const Eigen::RowVector3d gr = g * Jp * dPc_dr;
      const Eigen::RowVector3d gt = g * Jp;
      for (int k = 0; k < 3; ++k) {
        out.d_pose[k] += gr(k);
        out.d_pose[3 + k] += gt(k);
      }
    }
  }
  return out;
}

}  // namespace depthcast::serial
