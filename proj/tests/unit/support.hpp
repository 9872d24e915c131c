#pragma once

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <sys/wait.h>

#include "depthcast/image.hpp"
#include "depthcast/rng.hpp"

namespace testing {

using namespace depthcast;

inline ImageBuffer random_image(Rng& rng, int h, int w, int c, double lo = 0.0, double hi = 1.0) {
  ImageBuffer img(h, w, c);
  for (double& v : img.data()) v = rng.uniform(lo, hi);
  return img;
}

inline ScalarMap random_map(Rng& rng, int h, int w, double lo, double hi) {
  ScalarMap m(h, w);
  for (double& v : m.data()) v = rng.uniform(lo, hi);
  return m;
}

template <class A, class B>
double max_abs_diff(const A& a, const B& b) {
  double worst = 0.0;
  const auto da = a.data();
  const auto db = b.data();
  for (std::size_t i = 0; i < da.size(); ++i) worst = std::max(worst, std::abs(da[i] - db[i]));
  return worst;
}

/// Fresh scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("depthcast_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Runs the command-line tool and returns its exit status; output goes to
/// `log` next to the run.
inline int run_cli(const std::string& args, const std::filesystem::path& log) {
  const std::string cmd = std::string(DEPTHCAST_CLI) + " " + args + " > \"" + log.string() + "\" 2>&1";
  const int status = std::system(cmd.c_str());
  if (status == -1) return -1;
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace testing

#include "depthcast/synth.hpp"

namespace testing {

/// Fronto-parallel plane at `depth` with a smooth multi-component texture.
inline synth::Scene textured_plane(double depth, double phase = 0.0) {
  synth::Scene scene;
  synth::Primitive wall;
  wall.name = "wall";
  wall.plane.origin = Vec3(0.0, 0.0, depth);
  wall.texture.components = {{0.21, 0.05, 0.18, phase}, {-0.07, 0.17, 0.12, 1.0 + phase}, {0.11, 0.13, 0.1, 2.0}};
  scene.primitives.push_back(wall);
  scene.far_depth = 4.0 * depth;
  return scene;
}

/// Camera with a 90 degree horizontal field of view.
inline Intrinsics wide_camera(int h, int w) {
  return Intrinsics::make(0.5 * w, 0.5 * w, 0.5 * (w - 1), 0.5 * (h - 1));
}

}  // namespace testing
