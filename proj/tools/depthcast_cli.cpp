// depthcast command-line driver: gradcheck | recover | tam-toy | eval | render.

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <numbers>
#include <sstream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <Eigen/Geometry>
#include <json.hpp>

#include "depthcast/checkpoint.hpp"
#include "depthcast/eval.hpp"
#include "depthcast/gradcheck_suite.hpp"
#include "depthcast/image_io.hpp"
#include "depthcast/optimize.hpp"
#include "depthcast/scene_io.hpp"
#include "depthcast/synth.hpp"
#include "depthcast/tam_train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace depthcast;

namespace {

// Exit codes: 0 all checks passed, 1 a check failed, 2 usage / input error,
// 3 the optimization diverged.
constexpr int kCheckFailed = 1;
constexpr int kInputError = 2;
constexpr int kDiverged = 3;

struct Common {
  std::string config;
  std::string out = "out";
  std::optional<std::uint64_t> seed;
};

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw std::runtime_error(path + ": " + e.what());
  }
}

fs::path prepare_out(const std::string& dir) {
  fs::create_directories(dir);
  return fs::path(dir);
}

template <typename T>
void take(const json& j, const char* key, T& dst) {
  if (j.contains(key)) dst = j.at(key).get<T>();
}

// ---- gradcheck -------------------------------------------------------------

struct GradcheckArgs {
  std::string plant_bug;
  std::vector<std::string> only;
};

int cmd_gradcheck(const Common& c, const GradcheckArgs& a) {
  GradCheckSuiteConfig cfg;
  if (!c.config.empty()) {
    const json j = read_json(c.config);
    const json g = j.contains("gradcheck") ? j.at("gradcheck") : j;
    take(g, "seed", cfg.seed);
    take(g, "step", cfg.options.step);
    take(g, "rel_tol", cfg.options.rel_tol);
    take(g, "abs_floor", cfg.options.abs_floor);
    take(g, "planted_bug", cfg.planted_bug);
    take(g, "only", cfg.only);
  }
  if (c.seed) cfg.seed = *c.seed;
  if (!a.plant_bug.empty()) cfg.planted_bug = a.plant_bug;
  if (!a.only.empty()) cfg.only = a.only;

  const GradCheckSuiteReport rep = run_gradcheck_suite(cfg);
  const fs::path out = prepare_out(c.out);
  json report = to_json(rep);
  report["command"] = "gradcheck";
  report["config"] = {{"seed", cfg.seed},
                      {"step", cfg.options.step},
                      {"rel_tol", cfg.options.rel_tol},
                      {"abs_floor", cfg.options.abs_floor},
                      {"planted_bug", cfg.planted_bug},
                      {"only", cfg.only}};
  write_json(out / "report.json", report);

  for (const auto& k : rep.kernels) {
    std::cout << (k.report.passed ? "ok   " : "FAIL ") << k.kernel << "  max_rel_error=" << k.report.max_rel_error
              << "  worst=" << k.report.worst << '\n';
  }
  std::cout << (rep.passed ? "gradcheck passed" : "gradcheck FAILED") << '\n';
  return rep.passed ? 0 : kCheckFailed;
}

// ---- render ----------------------------------------------------------------

int cmd_render(const Common& c) {
  if (c.config.empty()) throw CLI::RequiredError("--config");
  io::SceneFile sf = io::read_scene(c.config);
  if (c.seed) sf.scene.seed = *c.seed;
  const synth::Trajectory traj = synth::make_trajectory(sf.trajectory);
  const synth::Sequence seq = synth::make_sequence(sf.scene, traj, sf.intrinsics, sf.height, sf.width);
  const fs::path out = prepare_out(c.out);
  json frames = json::array();
  for (std::size_t i = 0; i < seq.frames.size(); ++i) {
    const std::string stem = "frame_" + std::to_string(i);
    io::write_ppm(out / (stem + ".ppm"), seq.frames[i].image);
    io::write_pfm(out / (stem + "_depth.pfm"), seq.frames[i].depth);
    frames.push_back({{"image", stem + ".ppm"},
                      {"depth", stem + "_depth.pfm"},
                      {"min_depth", seq.frames[i].depth.min()},
                      {"max_depth", seq.frames[i].depth.max()}});
  }
  io::write_poses_csv(out / "poses.csv", traj.cam_to_world);
  io::write_poses_csv(out / "relative_to_last.csv", seq.relative_to_last);
  double freq = 0.0;
  for (const Pose& p : traj.cam_to_world) {
    freq = std::max(freq, synth::max_pixel_frequency(sf.scene, p, sf.intrinsics, sf.height, sf.width));
  }
  write_json(out / "report.json", {{"command", "render"},
                                   {"config", io::to_json(sf)},
                                   {"frames", frames},
                                   {"max_pixel_frequency", freq}});
  std::cout << "rendered " << seq.frames.size() << " frames to " << out.string() << '\n';
  return 0;
}

// ---- recover ---------------------------------------------------------------

struct RecoverArgs {
  std::optional<int> steps;
  std::optional<int> scales;
  bool no_automask = false;
};

double angle_deg(const Vec3& a, const Vec3& b) {
  const double na = a.norm(), nb = b.norm();
  if (na == 0.0 || nb == 0.0) return std::numeric_limits<double>::quiet_NaN();
  return std::acos(std::clamp(a.dot(b) / (na * nb), -1.0, 1.0)) * 180.0 / std::numbers::pi;
}

json maybe_number(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

int cmd_recover(const Common& c, const RecoverArgs& a) {
  if (c.config.empty()) throw CLI::RequiredError("--config");
  io::SceneFile sf = io::read_scene(c.config);
  if (c.seed) sf.scene.seed = *c.seed;

  OptimizeConfig cfg;
  eval::EvalConfig ecfg;
  ecfg.median_scaling = true;
  json expect = json::object();
  if (sf.settings.contains("recover")) {
    const json& r = sf.settings.at("recover");
    take(r, "steps", cfg.steps);
    take(r, "scales", cfg.loss.scales);
    take(r, "automask", cfg.loss.automask_enabled);
    take(r, "min_reprojection", cfg.loss.min_reprojection);
    take(r, "alpha", cfg.loss.alpha);
    take(r, "alpha_d", cfg.loss.alpha_d);
    take(r, "shared_pyramid", cfg.shared_pyramid);
    take(r, "lr", cfg.adam.lr);
    take(r, "decay_step", cfg.adam.decay_step);
    take(r, "decayed_lr", cfg.adam.decayed_lr);
    take(r, "min_depth", cfg.loss.range.min_depth);
    take(r, "max_depth", cfg.loss.range.max_depth);
    take(r, "depth_cap", ecfg.depth_cap);
    if (r.contains("expect")) expect = r.at("expect");
  }
  if (a.steps) cfg.steps = *a.steps;
  if (a.scales) cfg.loss.scales = *a.scales;
  if (a.no_automask) cfg.loss.automask_enabled = false;
  cfg.validate();

  const synth::Trajectory traj = synth::make_trajectory(sf.trajectory);
  const synth::Sequence seq = synth::make_sequence(sf.scene, traj, sf.intrinsics, sf.height, sf.width);
  std::vector<ImageBuffer> context;
  for (std::size_t i = 0; i + 1 < seq.frames.size(); ++i) context.push_back(seq.frames[i].image);
  const synth::Frame& target = seq.frames.back();

  const fs::path out = prepare_out(c.out);
  json report{{"command", "recover"},
              {"config", {{"scene", io::to_json(sf)}, {"optimize", to_json(cfg)}, {"eval", eval::to_json(ecfg)}}}};

  OptimizeResult res;
  try {
    res = optimize_depth_pose(context, target.image, sf.intrinsics, cfg);
  } catch (const DivergenceError& e) {
    report["error"] = e.what();
    report["diverged_at_step"] = e.step;
    write_json(out / "report.json", report);
    std::cerr << e.what() << '\n';
    return kDiverged;
  }

  const ScalarMap all_valid(sf.height, sf.width, 1.0);
  const eval::DepthMetrics m = eval::depth_metrics(res.depth, target.depth, all_valid, ecfg);
  const eval::RangeReport ranges = eval::range_filtered_metrics(res.depth, target.depth, all_valid, ecfg);
  const eval::ScaledDepth scaled = eval::median_scale(res.depth, target.depth, all_valid);

  json poses = json::array();
  // NaN until some pose has a defined direction (zero translation has none).
  double worst_direction = std::numeric_limits<double>::quiet_NaN();
  std::vector<Pose> recovered;
  for (std::size_t i = 0; i < res.poses.size(); ++i) {
    const Pose est = pose_from_params(res.poses[i]);
    const Pose& gt = seq.relative_to_last[i];
    recovered.push_back(est);
    const double dir = angle_deg(est.translation(), gt.translation());
    const Eigen::AngleAxisd rot_err(est.rotation().transpose() * gt.rotation());
    if (std::isfinite(dir) && !(dir <= worst_direction)) worst_direction = dir;
    poses.push_back({{"context_frame", i},
                     {"estimate", res.poses[i]},
                     {"ground_truth", params_from_pose(gt)},
                     {"translation_direction_error_deg", maybe_number(dir)},
                     {"rotation_error_deg", rot_err.angle() * 180.0 / std::numbers::pi},
                     {"translation_scale_ratio", gt.translation().norm() > 0.0
                                                     ? maybe_number(est.translation().norm() / gt.translation().norm())
                                                     : json(nullptr)}});
  }

  const LossBreakdown& fl = res.final_loss;
  json per_scale = json::array();
  for (const auto& st : fl.per_scale) {
    per_scale.push_back(
        {{"photometric", st.photometric}, {"smoothness", st.smoothness}, {"mask_fraction", st.mask_fraction}});
  }
  report["metrics"] = eval::to_json(m);
  report["range_metrics"] = eval::to_json(ranges);
  report["median_scale"] = scaled.scale;
  report["poses"] = poses;
  report["max_translation_direction_error_deg"] = maybe_number(worst_direction);
  report["loss"] = {{"initial", res.history.front().total},
                    {"final", fl.total},
                    {"photometric", fl.photometric},
                    {"smoothness", fl.smoothness},
                    {"per_scale", per_scale},
                    {"steps", cfg.steps}};
  // Share of scale-0 pixels the auto-mask removed.
  report["masked_fraction"] = 1.0 - fl.mask.mean();
  if (cfg.loss.automask_enabled && report["masked_fraction"].get<double>() > 0.95) {
    report["notes"] = json::array({"auto-mask removed more than 95% of pixels (little or no apparent motion)"});
  }

  bool ok = true;
  json checks = json::array();
  const auto check = [&](const char* name, double value, double bound) {
    const bool pass = std::isfinite(value) && value < bound;
    ok = ok && pass;
    checks.push_back({{"check", name}, {"value", maybe_number(value)}, {"below", bound}, {"passed", pass}});
  };
  if (expect.contains("abs_rel_below")) check("abs_rel", m.abs_rel, expect.at("abs_rel_below").get<double>());
  if (expect.contains("direction_deg_below")) {
    check("translation_direction_error_deg", worst_direction, expect.at("direction_deg_below").get<double>());
  }
  report["checks"] = checks;
  report["passed"] = ok;

  io::write_pfm(out / "depth.pfm", res.depth);
  io::write_pfm(out / "depth_scaled.pfm", scaled.pred);
  io::write_pfm(out / "gt_depth.pfm", target.depth);
  io::write_pfm(out / "disparity.pfm", res.disparity.front());
  io::write_pfm(out / "mask.pfm", fl.mask);
  io::write_ppm(out / "target.ppm", target.image);
  io::write_poses_csv(out / "poses.csv", recovered);
  io::write_poses_csv(out / "gt_poses.csv", {seq.relative_to_last.begin(), seq.relative_to_last.end() - 1});
  write_loss_csv(out / "loss.csv", res.history);
  write_text(out / "metrics.csv", eval::csv_header() + "\n" + eval::csv_row(m) + "\n");
  write_json(out / "report.json", report);

  std::cout << "abs_rel=" << m.abs_rel << " delta1=" << m.delta1 << " direction_error_deg=" << worst_direction
            << " final_loss=" << fl.total << '\n';
  return ok ? 0 : kCheckFailed;
}

// ---- tam-toy ---------------------------------------------------------------

struct TamArgs {
  std::optional<int> layers;
  std::optional<int> epochs;
  bool shuffle_labels = false;
};

int cmd_tam_toy(const Common& c, const TamArgs& a) {
  tam::ToyDataConfig dcfg;
  tam::TrainConfig tcfg;
  json expect = json::object();
  if (!c.config.empty()) {
    const json j = read_json(c.config);
    const json t = j.contains("tam_toy") ? j.at("tam_toy") : j;
    if (t.contains("data")) {
      const json& d = t.at("data");
      take(d, "train_sequences", dcfg.train_sequences);
      take(d, "test_sequences", dcfg.test_sequences);
      take(d, "k", dcfg.k);
      take(d, "height", dcfg.height);
      take(d, "width", dcfg.width);
      take(d, "grid_rows", dcfg.grid_rows);
      take(d, "grid_cols", dcfg.grid_cols);
      take(d, "yaw_rate_range", dcfg.yaw_rate_range);
    }
    if (t.contains("model")) {
      const json& m = t.at("model");
      take(m, "d_model", tcfg.tam.d_model);
      take(m, "heads", tcfg.tam.heads);
      take(m, "layers", tcfg.tam.layers);
      take(m, "d_ff", tcfg.tam.d_ff);
    }
    if (t.contains("train")) {
      const json& r = t.at("train");
      take(r, "epochs", tcfg.epochs);
      take(r, "batch_size", tcfg.batch_size);
      take(r, "lr", tcfg.adam.lr);
      take(r, "shuffle_labels", tcfg.shuffle_labels);
    }
    take(t, "seed", dcfg.seed);
    if (t.contains("expect")) expect = t.at("expect");
  }
  if (c.seed) dcfg.seed = *c.seed;
  if (a.layers) tcfg.tam.layers = *a.layers;
  if (a.epochs) tcfg.epochs = *a.epochs;
  if (a.shuffle_labels) tcfg.shuffle_labels = true;
  tcfg.seed = dcfg.seed;
  tcfg.tam.seed = dcfg.seed;
  tcfg.tam.k = dcfg.k;
  tcfg.tam.feature_dim = dcfg.feature_dim();

  const tam::ToyDataset data = tam::make_toy_dataset(tam::toy_scene(), dcfg);
  const fs::path out = prepare_out(c.out);
  json report{{"command", "tam-toy"}, {"config", {{"data", tam::to_json(dcfg)}, {"train", tam::to_json(tcfg)}}}};
  tam::TrainResult res;
  try {
    res = tam::train_tam_toy(data, tcfg);
  } catch (const std::runtime_error& e) {
    report["error"] = e.what();
    write_json(out / "report.json", report);
    std::cerr << e.what() << '\n';
    return kDiverged;
  }
  const double test_mse = res.test_mse.empty() ? tam::evaluate_mse(res, tcfg, data.test) : res.test_mse.back();
  const double ratio = test_mse / res.target_variance;
  report["train_mse"] = res.train_mse;
  report["test_mse"] = res.test_mse;
  report["target_variance"] = res.target_variance;
  report["final_test_mse"] = test_mse;
  report["test_mse_over_variance"] = ratio;

  bool ok = true;
  json checks = json::array();
  if (expect.contains("ratio_below")) {
    const bool pass = ratio < expect.at("ratio_below").get<double>();
    ok = ok && pass;
    checks.push_back({{"check", "test_mse_over_variance"}, {"value", ratio}, {"below", expect.at("ratio_below")}, {"passed", pass}});
  }
  report["checks"] = checks;
  report["passed"] = ok;

  io::write_checkpoint(out / "tam.ckpt", tam::checkpoint_tensors(res), report["config"]);
  std::string csv = "epoch,train_mse,test_mse\n";
  {
    std::ostringstream os;
    os.precision(17);
    for (std::size_t e = 0; e < res.train_mse.size(); ++e) os << e << ',' << res.train_mse[e] << ',' << res.test_mse[e] << '\n';
    csv += os.str();
  }
  write_text(out / "loss.csv", csv);
  write_json(out / "report.json", report);
  std::cout << "layers=" << tcfg.tam.layers << " test_mse=" << test_mse << " variance=" << res.target_variance
            << " ratio=" << ratio << '\n';
  return ok ? 0 : kCheckFailed;
}

// ---- eval ------------------------------------------------------------------

struct EvalArgs {
  std::string pred;
  std::string gt;
  std::string valid;
  bool median_scaling = false;
  bool align_scale = false;
  int snippet = 5;
};

bool is_csv(const std::string& p) { return fs::path(p).extension() == ".csv"; }

int cmd_eval(const Common& c, const EvalArgs& a) {
  eval::EvalConfig ecfg;
  if (!c.config.empty()) {
    const json j = read_json(c.config);
    const json e = j.contains("eval") ? j.at("eval") : j;
    take(e, "depth_cap", ecfg.depth_cap);
    take(e, "min_depth", ecfg.min_depth);
    take(e, "median_scaling", ecfg.median_scaling);
    if (e.contains("range_bins")) {
      ecfg.range_bins.clear();
      for (const auto& b : e.at("range_bins")) ecfg.range_bins.push_back({b.at(0).get<double>(), b.at(1).get<double>()});
    }
  }
  if (a.median_scaling) ecfg.median_scaling = true;
  ecfg.validate();
  const fs::path out = prepare_out(c.out);

  if (is_csv(a.pred) != is_csv(a.gt)) throw std::invalid_argument("eval: --pred and --gt must both be PFM or both CSV");
  if (is_csv(a.pred)) {
    const synth::Trajectory pred{io::read_poses_csv(a.pred)};
    const synth::Trajectory gt{io::read_poses_csv(a.gt)};
    const eval::AteResult r = eval::ate(pred, gt, a.align_scale, a.snippet);
    write_json(out / "report.json", {{"command", "eval"},
                                     {"config", {{"pred", a.pred}, {"gt", a.gt}, {"align_scale", a.align_scale},
                                                 {"snippet_length", a.snippet}}},
                                     {"ate", eval::to_json(r)}});
    std::ostringstream os;
    os.precision(17);
    os << "ate_mean,ate_std,snippets\n" << r.mean << ',' << r.std << ',' << r.snippets << '\n';
    write_text(out / "metrics.csv", os.str());
    std::cout << "ate=" << r.mean << " +- " << r.std << " over " << r.snippets << " snippets\n";
    return 0;
  }

  const ScalarMap pred = io::read_pfm(a.pred);
  const ScalarMap gt = io::read_pfm(a.gt);
  if (!pred.same_shape(gt)) {
    throw std::invalid_argument("eval: shape mismatch between " + a.pred + " (" + std::to_string(pred.height()) + "x" +
                                std::to_string(pred.width()) + ") and " + a.gt + " (" + std::to_string(gt.height()) +
                                "x" + std::to_string(gt.width()) + ")");
  }
  const ScalarMap valid = a.valid.empty() ? ScalarMap(gt.height(), gt.width(), 1.0) : io::read_pfm(a.valid);
  const eval::DepthMetrics m = eval::depth_metrics(pred, gt, valid, ecfg);
  const eval::RangeReport ranges = eval::range_filtered_metrics(pred, gt, valid, ecfg);
  write_json(out / "report.json", {{"command", "eval"},
                                   {"config", {{"pred", a.pred}, {"gt", a.gt}, {"valid", a.valid},
                                               {"eval", eval::to_json(ecfg)}}},
                                   {"metrics", eval::to_json(m)},
                                   {"range_metrics", eval::to_json(ranges)}});
  write_text(out / "metrics.csv", eval::csv_header() + "\n" + eval::csv_row(m) + "\n");
  std::cout << eval::csv_header() << '\n' << eval::csv_row(m) << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"depthcast: differentiable view synthesis for self-supervised depth and ego-motion"};
  app.require_subcommand(1);

  Common common;
  const auto add_common = [&](CLI::App* sub, bool config_required) {
    auto* opt = sub->add_option("--config", common.config, "JSON config / scene file");
    if (config_required) opt->required()->check(CLI::ExistingFile);
    sub->add_option("--out", common.out, "output directory")->capture_default_str();
    sub->add_option("--seed", common.seed, "random seed (overrides the config)");
  };

  GradcheckArgs ga;
  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference check of every differentiable kernel");
  add_common(gradcheck, false);
  gradcheck->add_option("--plant-bug", ga.plant_bug, "double the analytic gradient of this kernel (test hook)");
  gradcheck->add_option("--only", ga.only, "restrict to these kernels");

  auto* render = app.add_subcommand("render", "render a scene file to PPM/PFM/CSV");
  add_common(render, true);

  RecoverArgs ra;
  auto* recover = app.add_subcommand("recover", "recover depth and poses of a rendered scene by direct optimization");
  add_common(recover, true);
  recover->add_option("--steps", ra.steps, "Adam steps");
  recover->add_option("--scales", ra.scales, "number of disparity scales");
  recover->add_flag("--no-automask", ra.no_automask, "disable auto-masking");

  TamArgs ta;
  auto* tamtoy = app.add_subcommand("tam-toy", "train the temporal aggregation module on the toy forecasting task");
  add_common(tamtoy, false);
  tamtoy->add_option("--layers", ta.layers, "encoder layers (0 disables attention)");
  tamtoy->add_option("--epochs", ta.epochs, "training epochs");
  tamtoy->add_flag("--shuffle-labels", ta.shuffle_labels, "permute training targets (control run)");

  EvalArgs ea;
  auto* evalc = app.add_subcommand("eval", "depth metrics (PFM pair) or ATE (pose CSV pair)");
  add_common(evalc, false);
  evalc->add_option("--pred", ea.pred, "predicted depth PFM or trajectory CSV")->required()->check(CLI::ExistingFile);
  evalc->add_option("--gt", ea.gt, "ground-truth counterpart")->required()->check(CLI::ExistingFile);
  evalc->add_option("--valid", ea.valid, "optional validity mask PFM (nonzero = valid)")->check(CLI::ExistingFile);
  evalc->add_flag("--median-scaling", ea.median_scaling, "scale predictions by the median ratio first");
  evalc->add_flag("--align-scale", ea.align_scale, "similarity (not rigid) alignment for ATE");
  evalc->add_option("--snippet", ea.snippet, "ATE snippet length")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    // --help and friends exit 0; every other parse failure is an input error.
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kInputError;
  }

  try {
    if (*gradcheck) return cmd_gradcheck(common, ga);
    if (*render) return cmd_render(common);
    if (*recover) return cmd_recover(common, ra);
    if (*tamtoy) return cmd_tam_toy(common, ta);
    if (*evalc) return cmd_eval(common, ea);
  } catch (const CLI::Error& e) {
    app.exit(e);
    return kInputError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kInputError;
  }
  return kInputError;
}
