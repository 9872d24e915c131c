#pragma once

#include <filesystem>

#include <json.hpp>

#include "depthcast/synth.hpp"

namespace depthcast::io {

/// Everything a scene file describes: geometry, camera, image size and the
/// trajectory to render.
struct SceneFile {
  synth::Scene scene;
  Intrinsics intrinsics;
  int height = 64;
  int width = 192;
  synth::TrajectorySpec trajectory;
  /// Free-form per-command defaults (e.g. "recover": {...}); kept verbatim.
  nlohmann::json settings = nlohmann::json::object();
};

/// Throws std::runtime_error naming the file and the offending key.
SceneFile read_scene(const std::filesystem::path& path);
SceneFile parse_scene(const nlohmann::json& j);
nlohmann::json to_json(const SceneFile& sf);

/// One pose per line: the 3x4 [R | t] matrix flattened row-major.
void write_poses_csv(const std::filesystem::path& path, const std::vector<Pose>& poses);
std::vector<Pose> read_poses_csv(const std::filesystem::path& path);

}  // namespace depthcast::io
