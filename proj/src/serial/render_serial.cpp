// Single-threaded reference kernels kept for testing and benchmarking.

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "../synth_detail.hpp"

namespace depthcast::synth::serial {

RenderResult render(const Scene& scene, const Pose& cam_to_world, const Intrinsics& K, int h, int w) {
  RenderResult out{ImageBuffer(h, w, 3), ScalarMap(h, w)};
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      const detail::PixelHit hit = detail::cast(scene, cam_to_world, K, r, c);
      if (!std::isfinite(hit.t)) throw std::domain_error("render: a camera ray missed every primitive");
      out.depth(r, c) = hit.t;
      const Texture& tex = detail::texture_of(scene, hit.id);
      for (int ch = 0; ch < 3; ++ch) out.image(r, c, ch) = std::clamp(tex.eval(hit.a, hit.b, ch), 0.0, 1.0);
    }
  }
  return out;
}

}  // namespace depthcast::synth::serial
