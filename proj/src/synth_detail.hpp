#pragma once

#include <optional>

#include "depthcast/synth.hpp"

namespace depthcast::synth::detail {

struct Hit {
  double t;  // ray parameter; equals z-depth since camera rays have unit z
  double a;  // texture coordinates
  double b;
  Vec3 normal;
};

struct PixelHit {
  double t = 0.0;
  double a = 0.0;
  double b = 0.0;
  int id = -1;  // primitive index, -1 for the far plane
  double cos_incidence = 1.0;
};

std::optional<Hit> intersect(const Primitive& prim, const Vec3& origin, const Vec3& dir);
PixelHit cast(const Scene& scene, const Pose& cam_to_world, const Intrinsics& K, int r, int c);
const Texture& texture_of(const Scene& scene, int id);

}  // namespace depthcast::synth::detail
