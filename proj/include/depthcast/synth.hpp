#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "depthcast/geometry.hpp"
#include "depthcast/image.hpp"

namespace depthcast::synth {

struct TextureComponent {
  double fu = 0.0;  // cycles per scene unit along the first texture axis
  double fv = 0.0;  // ... and along the second
  double amplitude = 0.0;
  double phase = 0.0;
};

/// Zero-texture stripe: the sinusoidal part is faded out by a raised-cosine
/// window of width `ramp` on each side of [lo, hi] along one texture axis.
struct FlatBand {
  int axis = 0;  // 0: first texture coordinate, 1: second
  double lo = 0.0;
  double hi = 0.0;
  double ramp = 0.0;
};

/// Lambertian procedural texture: base + window * sum of sinusoids. Channel
/// ch shifts every phase by ch * channel_phase.
struct Texture {
  double base = 0.5;
  std::vector<TextureComponent> components;
  double channel_phase = 2.0943951023931953;
  std::optional<FlatBand> flat_band;

  double eval(double a, double b, int ch) const;
  double max_frequency() const;
  /// Throws std::invalid_argument if values could leave [0, 1].
  void validate() const;
};

struct Plane {
  Vec3 origin = Vec3::Zero();
  Vec3 axis_u = Vec3::UnitX();  // texture axes; the normal is axis_u x axis_v
  Vec3 axis_v = Vec3::UnitY();
  std::optional<double> half_u;  // unbounded when absent
  std::optional<double> half_v;
};

struct Box {
  Vec3 min = Vec3::Zero();
  Vec3 max = Vec3::Ones();
};

struct Primitive {
  enum class Kind { Plane, Box } kind = Kind::Plane;
  std::string name;
  Plane plane;
  Box box;
  Texture texture;
  /// Geometry given in camera coordinates; the primitive moves with the
  /// camera and so looks identical in every frame.
  bool camera_locked = false;
};

struct Scene {
  std::vector<Primitive> primitives;
  /// World plane z = far_depth, unbounded, behind everything else.
  double far_depth = 50.0;
  Texture far_texture;
  std::uint64_t seed = 0;

  /// Checks textures and that the far plane lies in front of the origin.
  void validate() const;
};

/// Camera-to-world poses at uniform timesteps.
struct Trajectory {
  std::vector<Pose> cam_to_world;
};

struct TrajectorySpec {
  enum class Kind { Static, ConstantVelocity, ConstantTurn, Explicit } kind = Kind::ConstantVelocity;
  int length = 3;
  PoseParams start{};                     // initial camera-to-world, axis-angle + translation
  Vec3 velocity = Vec3::Zero();           // per step, in the current camera frame
  double yaw_rate = 0.0;                  // radians per step about the camera y axis
  std::vector<Pose> poses;                // used by Kind::Explicit
};

Trajectory make_trajectory(const TrajectorySpec& spec);

struct RenderResult {
  ImageBuffer image;  // 3 channels
  ScalarMap depth;    // z-depth in the camera frame
};

/// Ray-casts every pixel centre. Throws std::domain_error if some ray hits
/// nothing (only possible when the camera looks away from the far plane).
RenderResult render(const Scene& scene, const Pose& cam_to_world, const Intrinsics& K, int h, int w);

struct Frame {
  ImageBuffer image;
  ScalarMap depth;
  Pose cam_to_world;
};

struct Sequence {
  std::vector<Frame> frames;
  /// relative_to_last[i] maps points in the last frame's camera into frame
  /// i's camera.
  std::vector<Pose> relative_to_last;
};

/// Pose mapping points of camera `tar` into camera `src`.
Pose relative_pose(const Pose& src_cam_to_world, const Pose& tar_cam_to_world);

Sequence make_sequence(const Scene& scene, const Trajectory& traj, const Intrinsics& K, int h, int w);

/// Highest texture frequency in cycles per pixel over the frame seen from
/// `cam_to_world`, accounting for depth and surface obliqueness.
double max_pixel_frequency(const Scene& scene, const Pose& cam_to_world, const Intrinsics& K, int h, int w);

namespace serial {

RenderResult render(const Scene& scene, const Pose& cam_to_world, const Intrinsics& K, int h, int w);

}  // namespace serial

}  // namespace depthcast::synth
