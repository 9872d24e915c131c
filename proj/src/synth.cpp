#include "depthcast/synth.hpp"

#include <cmath>
#include <algorithm>
#include <limits>
#include <numbers>
#include <stdexcept>

#include <Eigen/Geometry>

#include "synth_detail.hpp"

namespace depthcast::synth {

double Texture::eval(double a, double b, int ch) const {
  double window = 1.0;
  if (flat_band) {
    const double x = flat_band->axis == 0 ? a : b;
    const double lo = flat_band->lo, hi = flat_band->hi, ramp = flat_band->ramp;
    if (x >= lo && x <= hi) {
      window = 0.0;
    } else if (ramp > 0.0 && x > lo - ramp && x < lo) {
      window = 0.5 * (1.0 + std::cos(std::numbers::pi * (x - (lo - ramp)) / ramp));
    } else if (ramp > 0.0 && x > hi && x < hi + ramp) {
      window = 0.5 * (1.0 - std::cos(std::numbers::pi * (x - hi) / ramp));
    }
  }
  double s = 0.0;
  if (window > 0.0) {
    for (const auto& k : components) {
      s += k.amplitude * std::sin(2.0 * std::numbers::pi * (k.fu * a + k.fv * b) + k.phase + ch * channel_phase);
    }
  }
  return base + window * s;
}

double Texture::max_frequency() const {
  double f = 0.0;
  for (const auto& k : components) f = std::max(f, std::hypot(k.fu, k.fv));
  return f;
}

void Texture::validate() const {
  double amp = 0.0;
  for (const auto& k : components) {
    if (!std::isfinite(k.fu) || !std::isfinite(k.fv) || !std::isfinite(k.phase) || !(k.amplitude >= 0.0)) {
      throw std::invalid_argument("texture component must be finite with non-negative amplitude");
    }
    amp += k.amplitude;
  }
  if (!(base - amp >= 0.0 && base + amp <= 1.0)) {
    throw std::invalid_argument("texture range [base - sum(amp), base + sum(amp)] must lie in [0, 1]");
  }
  if (flat_band && (flat_band->hi < flat_band->lo || flat_band->ramp < 0.0)) {
    throw std::invalid_argument("flat band must have lo <= hi and a non-negative ramp");
  }
}

void Scene::validate() const {
  if (!(far_depth > 0.0) || !std::isfinite(far_depth)) throw std::invalid_argument("far plane depth must be positive");
  far_texture.validate();
  for (const auto& p : primitives) {
    p.texture.validate();
    if (p.kind == Primitive::Kind::Plane) {
      if (p.plane.axis_u.cross(p.plane.axis_v).norm() < 1e-12) {
        throw std::invalid_argument("plane '" + p.name + "' has parallel texture axes");
      }
    } else if ((p.box.max - p.box.min).minCoeff() <= 0.0) {
      throw std::invalid_argument("box '" + p.name + "' has an empty extent");
    }
  }
}

Trajectory make_trajectory(const TrajectorySpec& spec) {
  Trajectory traj;
  if (spec.kind == TrajectorySpec::Kind::Explicit) {
    traj.cam_to_world = spec.poses;
    if (traj.cam_to_world.size() < 2) throw std::invalid_argument("explicit trajectory needs at least 2 poses");
    return traj;
  }
  if (spec.length < 2) throw std::invalid_argument("trajectory length must be at least 2");
  Pose step;
  switch (spec.kind) {
    case TrajectorySpec::Kind::Static:
      break;
    case TrajectorySpec::Kind::ConstantVelocity:
      step = pose_from_axis_angle(Vec3::Zero(), spec.velocity);
      break;
    case TrajectorySpec::Kind::ConstantTurn:
      step = pose_from_axis_angle(Vec3(0.0, spec.yaw_rate, 0.0), spec.velocity);
      break;
    case TrajectorySpec::Kind::Explicit:
      break;
  }
  Pose current = pose_from_params(spec.start);
  for (int i = 0; i < spec.length; ++i) {
    traj.cam_to_world.push_back(current);
    current = compose(current, step);
  }
  return traj;
}

namespace detail {

std::optional<Hit> intersect(const Primitive& prim, const Vec3& origin, const Vec3& dir) {
  constexpr double kMinT = 1e-9;
  if (prim.kind == Primitive::Kind::Plane) {
    const Plane& pl = prim.plane;
    const Vec3 n = pl.axis_u.cross(pl.axis_v).normalized();
    const double denom = n.dot(dir);
    if (std::abs(denom) < 1e-15) return std::nullopt;
    const double t = n.dot(pl.origin - origin) / denom;
    if (!(t > kMinT)) return std::nullopt;
    const Vec3 rel = origin + t * dir - pl.origin;
    const double a = rel.dot(pl.axis_u.normalized());
    const double b = rel.dot(pl.axis_v.normalized());
    if (pl.half_u && std::abs(a) > *pl.half_u) return std::nullopt;
    if (pl.half_v && std::abs(b) > *pl.half_v) return std::nullopt;
    return Hit{t, a, b, n};
  }
  // Slab test.
  const Box& bx = prim.box;
  double t_near = -std::numeric_limits<double>::infinity();
  double t_far = std::numeric_limits<double>::infinity();
  int near_axis = -1;
  for (int i = 0; i < 3; ++i) {
    if (std::abs(dir(i)) < 1e-15) {
      if (origin(i) < bx.min(i) || origin(i) > bx.max(i)) return std::nullopt;
      continue;
    }
    double t0 = (bx.min(i) - origin(i)) / dir(i);
    double t1 = (bx.max(i) - origin(i)) / dir(i);
    if (t0 > t1) std::swap(t0, t1);
    if (t0 > t_near) {
      t_near = t0;
      near_axis = i;
    }
    t_far = std::min(t_far, t1);
  }
  if (t_near > t_far || !(t_near > kMinT) || near_axis < 0) return std::nullopt;
  const Vec3 x = origin + t_near * dir;
  Vec3 n = Vec3::Zero();
  n(near_axis) = dir(near_axis) > 0.0 ? -1.0 : 1.0;
  return Hit{t_near, x((near_axis + 1) % 3), x((near_axis + 2) % 3), n};
}

PixelHit cast(const Scene& scene, const Pose& cam_to_world, const Intrinsics& K, int r, int c) {
  const Vec3 ray_cam((c - K.cx) / K.fx, (r - K.cy) / K.fy, 1.0);
  const Vec3 origin_w = cam_to_world.translation();
  const Vec3 dir_w = cam_to_world.rotation() * ray_cam;
  const double len = ray_cam.norm();

  PixelHit best;
  best.t = std::numeric_limits<double>::infinity();
  // Far plane z = far_depth in world coordinates.
  if (dir_w.z() > 1e-15) {
    const double t = (scene.far_depth - origin_w.z()) / dir_w.z();
    if (t > 0.0) {
      const Vec3 x = origin_w + t * dir_w;
      best = PixelHit{t, x.x(), x.y(), -1, dir_w.z() / len};
    }
  }
  for (std::size_t i = 0; i < scene.primitives.size(); ++i) {
    const Primitive& p = scene.primitives[i];
    const Vec3& dir = p.camera_locked ? ray_cam : dir_w;
    const auto hit = p.camera_locked ? intersect(p, Vec3::Zero(), ray_cam) : intersect(p, origin_w, dir_w);
    if (hit && hit->t < best.t) {
      best = PixelHit{hit->t, hit->a, hit->b, static_cast<int>(i), std::abs(hit->normal.dot(dir)) / len};
    }
  }
  return best;
}

const Texture& texture_of(const Scene& scene, int id) {
  return id < 0 ? scene.far_texture : scene.primitives[static_cast<std::size_t>(id)].texture;
}

}  // namespace detail

RenderResult render(const Scene& scene, const Pose& cam_to_world, const Intrinsics& K, int h, int w) {
  RenderResult out{ImageBuffer(h, w, 3), ScalarMap(h, w)};
  bool miss = false;
#pragma omp parallel for schedule(static) reduction(|| : miss)
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      const detail::PixelHit hit = detail::cast(scene, cam_to_world, K, r, c);
      if (!std::isfinite(hit.t)) {
        miss = true;
        continue;
      }
      out.depth(r, c) = hit.t;
      const Texture& tex = detail::texture_of(scene, hit.id);
      for (int ch = 0; ch < 3; ++ch) out.image(r, c, ch) = std::clamp(tex.eval(hit.a, hit.b, ch), 0.0, 1.0);
    }
  }
  if (miss) throw std::domain_error("render: a camera ray missed every primitive and the far plane");
  return out;
}

Pose relative_pose(const Pose& src_cam_to_world, const Pose& tar_cam_to_world) {
  return compose(invert(src_cam_to_world), tar_cam_to_world);
}

Sequence make_sequence(const Scene& scene, const Trajectory& traj, const Intrinsics& K, int h, int w) {
  scene.validate();
  Sequence seq;
  for (const Pose& p : traj.cam_to_world) {
    RenderResult rr = render(scene, p, K, h, w);
    seq.frames.push_back(Frame{std::move(rr.image), std::move(rr.depth), p});
  }
  const Pose& last = traj.cam_to_world.back();
  for (const Pose& p : traj.cam_to_world) seq.relative_to_last.push_back(relative_pose(p, last));
  return seq;
}

double max_pixel_frequency(const Scene& scene, const Pose& cam_to_world, const Intrinsics& K, int h, int w) {
  // A surface at z-depth Z seen at incidence cos(theta) maps a world
  // frequency f to roughly f * Z / (focal * cos(theta)) cycles per pixel.
  const double focal = std::min(K.fx, K.fy);
  double worst = 0.0;
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      const detail::PixelHit hit = detail::cast(scene, cam_to_world, K, r, c);
      if (!std::isfinite(hit.t)) continue;
      const double f = detail::texture_of(scene, hit.id).max_frequency();
      worst = std::max(worst, f * hit.t / (focal * std::max(hit.cos_incidence, 1e-6)));
    }
  }
  return worst;
}

}  // namespace depthcast::synth
