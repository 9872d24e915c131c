#include "depthcast/scene_io.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include "depthcast/image_io.hpp"
#include "depthcast/rng.hpp"

namespace depthcast::io {

using nlohmann::json;

namespace {

struct KeyError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

[[noreturn]] void bad(const std::string& key, const std::string& what) { throw KeyError(key + ": " + what); }

const json& require(const json& j, const std::string& key, const std::string& where) {
  if (!j.is_object() || !j.contains(key)) bad(where + key, "missing");
  return j.at(key);
}

double number(const json& j, const std::string& where) {
  if (!j.is_number()) bad(where, "expected a number");
  return j.get<double>();
}

double number_or(const json& j, const std::string& key, double fallback, const std::string& where) {
  return j.contains(key) ? number(j.at(key), where + key) : fallback;
}

Vec3 vec3(const json& j, const std::string& where) {
  if (!j.is_array() || j.size() != 3) bad(where, "expected an array of 3 numbers");
  return {number(j[0], where + "[0]"), number(j[1], where + "[1]"), number(j[2], where + "[2]")};
}

json to_array(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

synth::Texture parse_texture(const json& j, const std::string& where, std::uint64_t seed) {
  synth::Texture t;
  if (!j.is_object()) bad(where, "expected an object");
  t.base = number_or(j, "base", t.base, where);
  t.channel_phase = number_or(j, "channel_phase", t.channel_phase, where);
  if (j.contains("components")) {
    const json& cs = j.at("components");
    if (!cs.is_array()) bad(where + "components", "expected an array");
    for (std::size_t i = 0; i < cs.size(); ++i) {
      const std::string w = where + "components[" + std::to_string(i) + "].";
      t.components.push_back({number_or(cs[i], "fu", 0.0, w), number_or(cs[i], "fv", 0.0, w),
                              number(require(cs[i], "amplitude", w), w + "amplitude"),
                              number_or(cs[i], "phase", 0.0, w)});
    }
  }
  if (j.contains("random")) {
    // Random sinusoids: directions and phases uniform, frequencies uniform in
    // [0.5, 1] * max_frequency, amplitude split evenly.
    const json& r = j.at("random");
    const std::string w = where + "random.";
    const int count = static_cast<int>(number(require(r, "count", w), w + "count"));
    const double fmax = number(require(r, "max_frequency", w), w + "max_frequency");
    const double amp = number(require(r, "amplitude", w), w + "amplitude");
    if (count < 1) bad(w + "count", "must be at least 1");
    Rng rng(static_cast<std::uint64_t>(number_or(r, "seed", 0.0, w)) ^ seed);
    for (int i = 0; i < count; ++i) {
      const double dir = rng.uniform(0.0, std::numbers::pi);
      const double f = fmax * rng.uniform(0.5, 1.0);
      const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
      t.components.push_back({f * std::cos(dir), f * std::sin(dir), amp / count, phase});
    }
  }
  if (j.contains("flat_band")) {
    const json& fb = j.at("flat_band");
    const std::string w = where + "flat_band.";
    t.flat_band = synth::FlatBand{static_cast<int>(number_or(fb, "axis", 0.0, w)), number(require(fb, "lo", w), w + "lo"),
                                  number(require(fb, "hi", w), w + "hi"), number_or(fb, "ramp", 0.0, w)};
  }
  try {
    t.validate();
  } catch (const std::invalid_argument& e) {
    bad(where.empty() ? "texture" : where.substr(0, where.size() - 1), e.what());
  }
  return t;
}

json texture_json(const synth::Texture& t) {
  json cs = json::array();
  for (const auto& c : t.components) {
    cs.push_back({{"fu", c.fu}, {"fv", c.fv}, {"amplitude", c.amplitude}, {"phase", c.phase}});
  }
  json j{{"base", t.base}, {"channel_phase", t.channel_phase}, {"components", cs}};
  if (t.flat_band) {
    j["flat_band"] = {{"axis", t.flat_band->axis}, {"lo", t.flat_band->lo}, {"hi", t.flat_band->hi},
                      {"ramp", t.flat_band->ramp}};
  }
  return j;
}

PoseParams pose_params(const json& j, const std::string& where) {
  if (!j.is_array() || j.size() != 6) bad(where, "expected [rx, ry, rz, tx, ty, tz]");
  PoseParams p{};
  for (std::size_t i = 0; i < 6; ++i) p[i] = number(j[i], where + "[" + std::to_string(i) + "]");
  return p;
}

Pose flat_pose(const json& j, const std::string& where) {
  if (!j.is_array() || j.size() != 12) bad(where, "expected 12 numbers (3x4 row-major)");
  std::array<double, 12> v{};
  for (std::size_t i = 0; i < 12; ++i) v[i] = number(j[i], where + "[" + std::to_string(i) + "]");
  try {
    return Pose::from_flat(v);
  } catch (const std::exception& e) {
    bad(where, e.what());
  }
}

synth::TrajectorySpec parse_trajectory(const json& j) {
  const std::string where = "trajectory.";
  synth::TrajectorySpec t;
  const std::string kind = require(j, "kind", where).get<std::string>();
  if (kind == "static") {
    t.kind = synth::TrajectorySpec::Kind::Static;
  } else if (kind == "constant_velocity") {
    t.kind = synth::TrajectorySpec::Kind::ConstantVelocity;
  } else if (kind == "constant_turn") {
    t.kind = synth::TrajectorySpec::Kind::ConstantTurn;
  } else if (kind == "explicit") {
    t.kind = synth::TrajectorySpec::Kind::Explicit;
  } else {
    bad(where + "kind", "unknown kind '" + kind + "'");
  }
  t.length = static_cast<int>(number_or(j, "length", t.length, where));
  if (j.contains("start")) t.start = pose_params(j.at("start"), where + "start");
  if (j.contains("velocity")) t.velocity = vec3(j.at("velocity"), where + "velocity");
  t.yaw_rate = number_or(j, "yaw_rate", 0.0, where);
  if (t.kind == synth::TrajectorySpec::Kind::Explicit) {
    const json& ps = require(j, "poses", where);
    if (!ps.is_array()) bad(where + "poses", "expected an array");
    for (std::size_t i = 0; i < ps.size(); ++i) t.poses.push_back(flat_pose(ps[i], where + "poses[" + std::to_string(i) + "]"));
  }
  return t;
}

synth::Primitive parse_primitive(const json& j, std::size_t index, std::uint64_t seed) {
  const std::string where = "primitives[" + std::to_string(index) + "].";
  synth::Primitive p;
  p.name = j.value("name", "primitive" + std::to_string(index));
  const std::string type = require(j, "type", where).get<std::string>();
  if (type == "plane") {
    p.kind = synth::Primitive::Kind::Plane;
    p.plane.origin = vec3(require(j, "origin", where), where + "origin");
    if (j.contains("axis_u")) p.plane.axis_u = vec3(j.at("axis_u"), where + "axis_u");
    if (j.contains("axis_v")) p.plane.axis_v = vec3(j.at("axis_v"), where + "axis_v");
    if (j.contains("half_u")) p.plane.half_u = number(j.at("half_u"), where + "half_u");
    if (j.contains("half_v")) p.plane.half_v = number(j.at("half_v"), where + "half_v");
  } else if (type == "box") {
    p.kind = synth::Primitive::Kind::Box;
    p.box.min = vec3(require(j, "min", where), where + "min");
    p.box.max = vec3(require(j, "max", where), where + "max");
  } else {
    bad(where + "type", "unknown primitive type '" + type + "'");
  }
  if (j.contains("texture")) p.texture = parse_texture(j.at("texture"), where + "texture.", seed + 1 + index);
  p.camera_locked = j.value("camera_locked", false);
  return p;
}

}  // namespace

SceneFile parse_scene(const json& j) {
  if (!j.is_object()) bad("scene", "expected a JSON object");
  SceneFile sf;
  sf.scene.seed = static_cast<std::uint64_t>(number_or(j, "seed", 0.0, ""));
  if (j.contains("image")) {
    const json& im = j.at("image");
    sf.height = static_cast<int>(number(require(im, "height", "image."), "image.height"));
    sf.width = static_cast<int>(number(require(im, "width", "image."), "image.width"));
    if (sf.height < 2 || sf.width < 2) bad("image", "height and width must be at least 2");
  }
  if (j.contains("intrinsics")) {
    const json& k = j.at("intrinsics");
    const std::string w = "intrinsics.";
    try {
      sf.intrinsics = Intrinsics::make(number(require(k, "fx", w), w + "fx"), number(require(k, "fy", w), w + "fy"),
                                       number(require(k, "cx", w), w + "cx"), number(require(k, "cy", w), w + "cy"));
    } catch (const std::invalid_argument& e) {
      bad("intrinsics", e.what());
    }
  } else {
    sf.intrinsics = Intrinsics::make(0.5 * sf.width, 0.5 * sf.width, 0.5 * (sf.width - 1), 0.5 * (sf.height - 1));
  }
  if (j.contains("far_plane")) {
    const json& fp = j.at("far_plane");
    sf.scene.far_depth = number_or(fp, "depth", sf.scene.far_depth, "far_plane.");
    if (fp.contains("texture")) sf.scene.far_texture = parse_texture(fp.at("texture"), "far_plane.texture.", sf.scene.seed);
  }
  if (j.contains("primitives")) {
    const json& ps = j.at("primitives");
    if (!ps.is_array()) bad("primitives", "expected an array");
    for (std::size_t i = 0; i < ps.size(); ++i) sf.scene.primitives.push_back(parse_primitive(ps[i], i, sf.scene.seed));
  }
  sf.trajectory = parse_trajectory(require(j, "trajectory", ""));
  for (const char* key : {"recover", "tam_toy", "gradcheck", "eval", "render"}) {
    if (j.contains(key)) sf.settings[key] = j.at(key);
  }
  try {
    sf.scene.validate();
  } catch (const std::invalid_argument& e) {
    bad("scene", e.what());
  }
  return sf;
}

SceneFile read_scene(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open scene file " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw std::runtime_error(path.string() + ": " + e.what());
  }
  try {
    return parse_scene(j);
  } catch (const KeyError& e) {
    throw std::runtime_error(path.string() + ": " + e.what());
  } catch (const json::exception& e) {
    throw std::runtime_error(path.string() + ": " + e.what());
  }
}

json to_json(const SceneFile& sf) {
  json prims = json::array();
  for (const auto& p : sf.scene.primitives) {
    json jp{{"name", p.name}, {"texture", texture_json(p.texture)}, {"camera_locked", p.camera_locked}};
    if (p.kind == synth::Primitive::Kind::Plane) {
      jp["type"] = "plane";
      jp["origin"] = to_array(p.plane.origin);
      jp["axis_u"] = to_array(p.plane.axis_u);
      jp["axis_v"] = to_array(p.plane.axis_v);
      if (p.plane.half_u) jp["half_u"] = *p.plane.half_u;
      if (p.plane.half_v) jp["half_v"] = *p.plane.half_v;
    } else {
      jp["type"] = "box";
      jp["min"] = to_array(p.box.min);
      jp["max"] = to_array(p.box.max);
    }
    prims.push_back(std::move(jp));
  }
  const auto& t = sf.trajectory;
  static const char* kinds[] = {"static", "constant_velocity", "constant_turn", "explicit"};
  json traj{{"kind", kinds[static_cast<int>(t.kind)]},
            {"length", t.length},
            {"start", t.start},
            {"velocity", to_array(t.velocity)},
            {"yaw_rate", t.yaw_rate}};
  if (t.kind == synth::TrajectorySpec::Kind::Explicit) {
    json ps = json::array();
    for (const Pose& p : t.poses) ps.push_back(p.flat());
    traj["poses"] = ps;
  }
  json j{{"seed", sf.scene.seed},
         {"image", {{"height", sf.height}, {"width", sf.width}}},
         {"intrinsics", {{"fx", sf.intrinsics.fx}, {"fy", sf.intrinsics.fy}, {"cx", sf.intrinsics.cx}, {"cy", sf.intrinsics.cy}}},
         {"far_plane", {{"depth", sf.scene.far_depth}, {"texture", texture_json(sf.scene.far_texture)}}},
         {"primitives", prims},
         {"trajectory", traj}};
  for (const auto& [k, v] : sf.settings.items()) j[k] = v;
  return j;
}

void write_poses_csv(const std::filesystem::path& path, const std::vector<Pose>& poses) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.precision(17);
  for (const Pose& p : poses) {
    const auto f = p.flat();
    for (std::size_t i = 0; i < f.size(); ++i) out << (i ? "," : "") << f[i];
    out << '\n';
  }
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

std::vector<Pose> read_poses_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::vector<Pose> poses;
  std::string line;
  std::size_t offset = 0;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::size_t line_start = offset;
    offset += line.size() + 1;
    if (line.empty()) continue;
    std::array<double, 12> v{};
    std::stringstream ss(line);
    std::string cell;
    std::size_t n = 0;
    while (std::getline(ss, cell, ',')) {
      if (n >= 12) break;
      try {
        std::size_t used = 0;
        v[n] = std::stod(cell, &used);
      } catch (const std::exception&) {
        throw ParseError(path.string() + ": line " + std::to_string(lineno) + " (byte " + std::to_string(line_start) +
                         "): bad number '" + cell + "'");
      }
      ++n;
    }
    if (n != 12 || ss.rdbuf()->in_avail() > 0) {
      throw ParseError(path.string() + ": line " + std::to_string(lineno) + " (byte " + std::to_string(line_start) +
                       "): expected 12 comma-separated values");
    }
    try {
      poses.push_back(Pose::from_flat(v));
    } catch (const std::exception& e) {
      throw ParseError(path.string() + ": line " + std::to_string(lineno) + " (byte " + std::to_string(line_start) +
                       "): " + e.what());
    }
  }
  return poses;
}

}  // namespace depthcast::io
