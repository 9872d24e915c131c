#include <doctest.h>

#include <cmath>
#include <numbers>

#include <Eigen/Geometry>

#include "depthcast/geometry.hpp"
#include "depthcast/image.hpp"
#include "support.hpp"

using namespace depthcast;

namespace {

const Intrinsics kCam = Intrinsics::make(100.0, 100.0, 50.0, 50.0);

Pose random_pose(Rng& rng, double rot = 1.0, double trans = 2.0) {
  return pose_from_axis_angle(Vec3(rng.uniform(-rot, rot), rng.uniform(-rot, rot), rng.uniform(-rot, rot)),
                              Vec3(rng.uniform(-trans, trans), rng.uniform(-trans, trans), rng.uniform(-trans, trans)));
}

double pose_gap(const Pose& a, const Pose& b) {
  return std::max((a.rotation() - b.rotation()).cwiseAbs().maxCoeff(),
                  (a.translation() - b.translation()).cwiseAbs().maxCoeff());
}

}  // namespace

TEST_SUITE("geometry") {

TEST_CASE("backproject places pixels on the ray at the given depth") {
  CHECK((backproject({50, 50}, 2.0, kCam) - Vec3(0, 0, 2)).norm() == doctest::Approx(0.0));
  CHECK((backproject({150, 50}, 2.0, kCam) - Vec3(2, 0, 2)).norm() == doctest::Approx(0.0));
  CHECK((backproject({50, 150}, 4.0, kCam) - Vec3(0, 4, 4)).norm() == doctest::Approx(0.0));
  CHECK_THROWS_AS(backproject({1, 1}, 0.0, kCam), std::domain_error);
  CHECK_THROWS_AS(backproject({1, 1}, -1.0, kCam), std::domain_error);
  CHECK_THROWS_AS(backproject({1, 1}, std::nan(""), kCam), std::domain_error);
}

TEST_CASE("project inverts backproject") {
  const Pixel a = project(Vec3(0, 0, 2), kCam);
  CHECK(a.u == 50.0);
  CHECK(a.v == 50.0);
  const Pixel b = project(Vec3(2, 0, 2), kCam);
  CHECK(b.u == 150.0);
  CHECK(b.v == 50.0);
  CHECK_THROWS_AS(project(Vec3(1, 1, 0), kCam), BehindCamera);
  CHECK_THROWS_AS(project(Vec3(1, 1, -3), kCam), BehindCamera);

  Rng rng(1);
  for (int i = 0; i < 500; ++i) {
    const Intrinsics K = Intrinsics::make(rng.uniform(10, 500), rng.uniform(10, 500), rng.uniform(-50, 50),
                                          rng.uniform(-50, 50));
    const Pixel p{rng.uniform(-100, 300), rng.uniform(-100, 300)};
    const Pixel q = project(backproject(p, rng.uniform(1e-3, 1e3), K), K);
    CHECK(std::abs(q.u - p.u) < 1e-9);
    CHECK(std::abs(q.v - p.v) < 1e-9);
  }
}

TEST_CASE("intrinsics reject invalid focal lengths") {
  CHECK_THROWS_AS(Intrinsics::make(0.0, 1.0, 0, 0), std::invalid_argument);
  CHECK_THROWS_AS(Intrinsics::make(1.0, -1.0, 0, 0), std::invalid_argument);
  CHECK_THROWS_AS(Intrinsics::make(1.0, 1.0, INFINITY, 0), std::invalid_argument);
}

TEST_CASE("axis-angle poses") {
  const Pose id = pose_from_axis_angle(Vec3::Zero(), Vec3::Zero());
  CHECK(pose_gap(id, Pose::identity()) == 0.0);

  const Pose quarter = pose_from_axis_angle(Vec3(0, 0, std::numbers::pi / 2), Vec3::Zero());
  CHECK((quarter.apply(Vec3(1, 0, 0)) - Vec3(0, 1, 0)).cwiseAbs().maxCoeff() < 1e-12);

  // The small-angle branch against full Rodrigues evaluated the long way.
  const Vec3 tiny(1e-10, 0, 0);
  const double th = tiny.norm();
  const Mat3 k = skew(tiny / th);
  const Mat3 full = Mat3::Identity() + std::sin(th) * k + (1 - std::cos(th)) * k * k;
  CHECK((rodrigues(tiny) - full).cwiseAbs().maxCoeff() < 1e-15);
  CHECK((rodrigues(tiny) - rodrigues_taylor(tiny)).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("Rodrigues agrees with Eigen's angle-axis") {
  Rng rng(2);
  for (int i = 0; i < 200; ++i) {
    const Vec3 r(rng.uniform(-3, 3), rng.uniform(-3, 3), rng.uniform(-3, 3));
    const Mat3 ref = Eigen::AngleAxisd(r.norm(), r.normalized()).toRotationMatrix();
    CHECK((rodrigues(r) - ref).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("property: rotations stay orthonormal up to ten half-turns") {
  Rng rng(3);
  for (int i = 0; i < 1000; ++i) {
    Vec3 dir(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
    const Vec3 r = dir.normalized() * rng.uniform(0.0, 10.0 * std::numbers::pi);
    const Mat3 R = rodrigues(r);
    CHECK((R.transpose() * R - Mat3::Identity()).cwiseAbs().maxCoeff() < 1e-9);
    CHECK(std::abs(R.determinant() - 1.0) < 1e-9);
  }
}

TEST_CASE("property: continuity across the small-angle threshold") {
  Rng rng(4);
  for (int i = 0; i < 100; ++i) {
    const Vec3 dir = Vec3(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)).normalized();
    const Mat3 below = rodrigues(dir * (1e-8 - 1e-12));
    const Mat3 above = rodrigues(dir * (1e-8 + 1e-12));
    // The angle itself moves by 2e-12, so R may change by about that much.
    CHECK((below - above).cwiseAbs().maxCoeff() < 5e-12);
  }
}

TEST_CASE("compose and invert") {
  Rng rng(5);
  const Pose t = random_pose(rng);
  CHECK(pose_gap(compose(Pose::identity(), t), t) == 0.0);
  CHECK(pose_gap(compose(t, invert(t)), Pose::identity()) < 1e-9);
  CHECK(pose_gap(invert(Pose::identity()), Pose::identity()) == 0.0);
  CHECK(pose_gap(invert(invert(t)), t) < 1e-12);

  for (int i = 0; i < 20; ++i) {
    const Pose a = random_pose(rng);
    const Pose b = random_pose(rng);
    const Pose ab = compose(a, b);
    for (int j = 0; j < 10; ++j) {
      const Vec3 x(rng.uniform(-5, 5), rng.uniform(-5, 5), rng.uniform(-5, 5));
      CHECK((ab.apply(x) - a.apply(b.apply(x))).norm() < 1e-9);
      CHECK((invert(a).apply(a.apply(x)) - x).norm() < 1e-9);
    }
  }
}

TEST_CASE("pose constructor rejects non-rotations") {
  Mat3 bad = Mat3::Identity();
  bad(0, 0) = 1.1;
  CHECK_THROWS_AS(Pose(bad, Vec3::Zero()), std::invalid_argument);
  CHECK_THROWS_AS(Pose(-Mat3::Identity(), Vec3::Zero()), std::invalid_argument);
}

TEST_CASE("pose parameters round-trip") {
  Rng rng(6);
  for (int i = 0; i < 200; ++i) {
    const PoseParams xi{rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1),
                        rng.uniform(-3, 3), rng.uniform(-3, 3), rng.uniform(-3, 3)};
    const PoseParams back = params_from_pose(pose_from_params(xi));
    for (int k = 0; k < 6; ++k) CHECK(std::abs(back[k] - xi[k]) < 1e-9);
  }
  CHECK(params_from_pose(Pose::identity()) == PoseParams{});
}

TEST_CASE("rotation Jacobian matches central differences") {
  Rng rng(7);
  for (int i = 0; i < 50; ++i) {
    const Vec3 r(rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(-2, 2));
    const Vec3 p(rng.uniform(-3, 3), rng.uniform(-3, 3), rng.uniform(-3, 3));
    const Mat3 J = rotate_point_jacobian(r, p);
    for (int k = 0; k < 3; ++k) {
      Vec3 dr = Vec3::Zero();
      dr(k) = 1e-6;
      const Vec3 fd = (rodrigues(r + dr) * p - rodrigues(r - dr) * p) / 2e-6;
      CHECK((J.col(k) - fd).norm() < 1e-7);
    }
  }
  // At the origin the derivative is -[p]x.
  const Vec3 p(1, 2, 3);
  CHECK((rotate_point_jacobian(Vec3::Zero(), p) + skew(p)).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("disparity maps into the configured depth range") {
  const DepthRange range;
  CHECK(range.b() == doctest::Approx(0.01));
  CHECK(range.a() == doctest::Approx(9.99));
  CHECK(range.depth(0.5) == doctest::Approx(1.0 / 5.005).epsilon(1e-12));
  CHECK(range.depth(1e-12) == doctest::Approx(100.0).epsilon(1e-9));
  CHECK(range.depth(1.0 - 1e-12) == doctest::Approx(0.1).epsilon(1e-9));
  CHECK_THROWS_AS(range.depth(0.0), std::domain_error);
  CHECK_THROWS_AS(range.depth(1.0), std::domain_error);
  CHECK_THROWS_AS(range.depth(-0.2), std::domain_error);
  CHECK(range.sigma(range.depth(0.3)) == doctest::Approx(0.3).epsilon(1e-12));

  Rng rng(8);
  const ScalarMap sigma = testing::random_map(rng, 10, 12, 1e-9, 1.0 - 1e-9);
  const ScalarMap depth = disparity_to_depth(sigma);
  CHECK(depth.min() > 0.1);
  CHECK(depth.max() < 100.0);

  ScalarMap bad(2, 2, 0.5);
  bad(1, 1) = 1.0;
  CHECK_THROWS_AS(disparity_to_depth(bad), std::domain_error);
}

TEST_CASE("property: depth is strictly decreasing in disparity") {
  const DepthRange range;
  double prev = range.depth(1e-6);
  for (int i = 1; i < 10000; ++i) {
    const double d = range.depth(1e-6 + i * (1.0 - 2e-6) / 10000.0);
    CHECK(d < prev);
    CHECK(d > 0.1);
    CHECK(d < 100.0);
    const double h = 1e-7;
    const double s = 0.05 + 0.9 * i / 10000.0;
    CHECK(range.depth_derivative(s) ==
          doctest::Approx((range.depth(s + h) - range.depth(s - h)) / (2 * h)).epsilon(1e-6));
    prev = d;
  }
}

}  // TEST_SUITE
