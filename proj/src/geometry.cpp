#include "depthcast/geometry.hpp"

#include <cmath>
#include <string>

#include <Eigen/Geometry>
#include <Eigen/LU>

namespace depthcast {

namespace {

constexpr double kTaylorThreshold = 1e-8;
constexpr double kOrthoTol = 1e-9;

bool finite(const Vec3& v) { return v.allFinite(); }

}  // namespace

Intrinsics Intrinsics::make(double fx, double fy, double cx, double cy) {
  if (!std::isfinite(fx) || !std::isfinite(fy) || !std::isfinite(cx) || !std::isfinite(cy)) {
    throw std::invalid_argument("intrinsics must be finite");
  }
  if (fx <= 0.0 || fy <= 0.0) {
    throw std::invalid_argument("focal lengths must be positive");
  }
  return Intrinsics{fx, fy, cx, cy};
}

Intrinsics Intrinsics::resized(int h, int w, int new_h, int new_w) const {
  // Corner-aligned: new = old * (n' - 1) / (n - 1).
  const double sx = static_cast<double>(new_w - 1) / static_cast<double>(w - 1);
  const double sy = static_cast<double>(new_h - 1) / static_cast<double>(h - 1);
  return make(fx * sx, fy * sy, cx * sx, cy * sy);
}

Pose::Pose(const Mat3& rotation, const Vec3& translation)
    : rotation_(rotation), translation_(translation) {
  if (!rotation.allFinite() || !translation.allFinite()) {
    throw std::invalid_argument("pose must be finite");
  }
  const double ortho = (rotation.transpose() * rotation - Mat3::Identity()).cwiseAbs().maxCoeff();
  const double det = rotation.determinant();
  if (ortho > kOrthoTol || std::abs(det - 1.0) > kOrthoTol) {
    throw std::invalid_argument("rotation is not in SO(3)");
  }
}

std::array<double, 12> Pose::flat() const {
  std::array<double, 12> m{};
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) m[r * 4 + c] = rotation_(r, c);
    m[r * 4 + 3] = translation_(r);
  }
  return m;
}

Pose Pose::from_flat(const std::array<double, 12>& m) {
  Mat3 r;
  Vec3 t;
  for (int i = 0; i < 3; ++i) {
    for (int c = 0; c < 3; ++c) r(i, c) = m[i * 4 + c];
    t(i) = m[i * 4 + 3];
  }
  return Pose(r, t);
}

Point3 backproject(const Pixel& p, double depth, const Intrinsics& K) {
  if (!std::isfinite(depth) || depth <= 0.0) {
    throw std::domain_error("backproject: depth must be positive and finite");
  }
  return Point3(depth * (p.u - K.cx) / K.fx, depth * (p.v - K.cy) / K.fy, depth);
}

Pixel project(const Point3& P, const Intrinsics& K) {
  if (!(P.z() > 0.0)) {
    throw BehindCamera("project: point is behind the camera");
  }
  return Pixel{K.fx * P.x() / P.z() + K.cx, K.fy * P.y() / P.z() + K.cy};
}

Mat3 skew(const Vec3& v) {
  Mat3 s;
  s << 0.0, -v.z(), v.y(),
       v.z(), 0.0, -v.x(),
       -v.y(), v.x(), 0.0;
  return s;
}

Mat3 rodrigues_taylor(const Vec3& r) {
  const Mat3 k = skew(r);
  return Mat3::Identity() + k + 0.5 * k * k;
}

Mat3 rodrigues(const Vec3& r) {
  if (!finite(r)) throw std::invalid_argument("rodrigues: non-finite axis-angle");
  const double theta = r.norm();
  if (theta < kTaylorThreshold) return rodrigues_taylor(r);
  const Mat3 k = skew(r);
  const double s = std::sin(theta) / theta;
  // 1 - cos(theta) without cancellation.
  const double half = std::sin(0.5 * theta);
  const double c = 2.0 * half * half / (theta * theta);
  return Mat3::Identity() + s * k + c * k * k;
}

std::array<Mat3, 3> rotation_derivatives(const Vec3& r) {
  std::array<Mat3, 3> d;
  const double theta2 = r.squaredNorm();
  if (theta2 < kTaylorThreshold * kTaylorThreshold) {
    for (int i = 0; i < 3; ++i) d[i] = skew(Vec3::Unit(i));
    return d;
  }
  const Mat3 R = rodrigues(r);
  const Mat3 I_minus_R = Mat3::Identity() - R;
  const Mat3 rx = skew(r);
  for (int i = 0; i < 3; ++i) {
    d[i] = (r(i) * rx + skew(r.cross(I_minus_R * Vec3::Unit(i)))) * R / theta2;
  }
  return d;
}

Mat3 rotate_point_jacobian(const Vec3& r, const Point3& p) {
  const auto d = rotation_derivatives(r);
  Mat3 J;
  for (int i = 0; i < 3; ++i) J.col(i) = d[i] * p;
  return J;
}

Pose pose_from_axis_angle(const Vec3& r, const Vec3& t) {
  if (!finite(r) || !finite(t)) throw std::invalid_argument("pose_from_axis_angle: non-finite input");
  return Pose(Pose::Unchecked{}, rodrigues(r), t);
}

Pose pose_from_params(const PoseParams& xi) {
  return pose_from_axis_angle(Vec3(xi[0], xi[1], xi[2]), Vec3(xi[3], xi[4], xi[5]));
}

PoseParams params_from_pose(const Pose& p) {
  const Eigen::AngleAxisd aa(p.rotation());
  const Vec3 r = aa.angle() * aa.axis();
  const Vec3& t = p.translation();
  return {r.x(), r.y(), r.z(), t.x(), t.y(), t.z()};
}

Pose compose(const Pose& a, const Pose& b) {
  return Pose(Pose::Unchecked{}, a.rotation_ * b.rotation_, a.rotation_ * b.translation_ + a.translation_);
}

Pose invert(const Pose& a) {
  const Mat3 rt = a.rotation_.transpose();
  return Pose(Pose::Unchecked{}, rt, -(rt * a.translation_));
}

double DepthRange::depth(double sigma) const {
  if (!(sigma > 0.0 && sigma < 1.0)) {
    throw std::domain_error("disparity must lie in (0, 1), got " + std::to_string(sigma));
  }
  return 1.0 / (a() * sigma + b());
}

double DepthRange::depth_derivative(double sigma) const {
  const double d = 1.0 / (a() * sigma + b());
  return -a() * d * d;
}

double DepthRange::sigma(double depth) const {
  if (!(depth > min_depth && depth < max_depth)) {
    throw std::domain_error("depth outside the representable range: " + std::to_string(depth));
  }
  return (1.0 / depth - b()) / a();
}

}  // namespace depthcast
