#pragma once

#include <array>
#include <stdexcept>

#include <Eigen/Core>

namespace depthcast {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Point3 = Eigen::Vector3d;

/// Raised by project() for points with Z <= 0.
struct BehindCamera : std::domain_error {
  using std::domain_error::domain_error;
};

/// Pinhole camera parameters in pixels.
struct Intrinsics {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;

  /// Throws std::invalid_argument unless fx, fy > 0 and every field is finite.
  static Intrinsics make(double fx, double fy, double cx, double cy);

  /// Scales the camera for an image resized from (h, w) to (new_h, new_w)
  /// with corner-aligned sampling.
  Intrinsics resized(int h, int w, int new_h, int new_w) const;
};

/// Continuous pixel coordinate: u is the column, v the row, pixel centres at
/// integers.
struct Pixel {
  double u = 0.0;
  double v = 0.0;
};

/// Rigid transform x -> R x + t.
///
/// A pose named `tar_to_src` maps points expressed in the target camera frame
/// into the source camera frame. There is one convention throughout the
/// library and no helper takes a direction flag.
class Pose {
 public:
  Pose() : rotation_(Mat3::Identity()), translation_(Vec3::Zero()) {}

  /// Validates orthonormality and det(R) = +1 within 1e-9.
  Pose(const Mat3& rotation, const Vec3& translation);

  static Pose identity() { return Pose(); }

  const Mat3& rotation() const { return rotation_; }
  const Vec3& translation() const { return translation_; }

  Point3 apply(const Point3& p) const { return rotation_ * p + translation_; }

  /// Row-major 3x4 [R | t].
  std::array<double, 12> flat() const;
  static Pose from_flat(const std::array<double, 12>& m);

 private:
  struct Unchecked {};
  Pose(Unchecked, const Mat3& r, const Vec3& t) : rotation_(r), translation_(t) {}

  friend Pose compose(const Pose& a, const Pose& b);
  friend Pose invert(const Pose& a);
  friend Pose pose_from_axis_angle(const Vec3& r, const Vec3& t);

  Mat3 rotation_;
  Vec3 translation_;
};

/// Axis-angle + translation packed as (rx, ry, rz, tx, ty, tz).
using PoseParams = std::array<double, 6>;

Point3 backproject(const Pixel& p, double depth, const Intrinsics& K);

/// Throws BehindCamera when P.z <= 0.
Pixel project(const Point3& P, const Intrinsics& K);

/// Rodrigues' formula; second-order Taylor expansion below |r| = 1e-8.
Mat3 rodrigues(const Vec3& r);
Mat3 rodrigues_taylor(const Vec3& r);

/// d(R(r) p)/dr as a 3x3 matrix whose column i is the derivative with
/// respect to r_i.
Mat3 rotate_point_jacobian(const Vec3& r, const Point3& p);

/// dR/dr_i for i = 0, 1, 2.
std::array<Mat3, 3> rotation_derivatives(const Vec3& r);

Pose pose_from_axis_angle(const Vec3& r, const Vec3& t);
Pose pose_from_params(const PoseParams& xi);
/// Inverse of pose_from_params (rotation angle in [0, pi]).
PoseParams params_from_pose(const Pose& p);

/// (a o b)(x) = a(b(x)).
Pose compose(const Pose& a, const Pose& b);
Pose invert(const Pose& a);

Mat3 skew(const Vec3& v);

/// Disparity-to-depth rescaling D = 1 / (a sigma + b), with a and b derived
/// from the configured depth bounds so that D lies in (min_depth, max_depth).
struct DepthRange {
  double min_depth = 0.1;
  double max_depth = 100.0;

  double b() const { return 1.0 / max_depth; }
  double a() const { return 1.0 / min_depth - b(); }

  /// Throws std::domain_error unless sigma is in (0, 1).
  double depth(double sigma) const;
  /// dD/dsigma.
  double depth_derivative(double sigma) const;
  /// Inverse map; throws std::domain_error for depths outside the open range.
  double sigma(double depth) const;
};

}  // namespace depthcast
