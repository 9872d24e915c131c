#include <doctest.h>

#include <cmath>
#include <limits>
#include <string>

#include "depthcast/gradcheck_suite.hpp"
#include "depthcast/optimize.hpp"
#include "depthcast/synth.hpp"
#include "depthcast/tam_train.hpp"
#include "support.hpp"

using namespace depthcast;

namespace {

struct PlaneFrames {
  std::vector<ImageBuffer> context;
  ImageBuffer target;
  ScalarMap depth;
  Intrinsics K;
};

PlaneFrames plane_frames(int h, int w) {
  const synth::Scene scene = testing::textured_plane(10.0);
  PlaneFrames f;
  f.K = testing::wide_camera(h, w);
  synth::TrajectorySpec spec;
  spec.length = 3;
  spec.velocity = Vec3(0.4, 0.0, 0.0);
  const synth::Sequence seq = synth::make_sequence(scene, synth::make_trajectory(spec), f.K, h, w);
  f.context = {seq.frames[0].image, seq.frames[1].image};
  f.target = seq.frames[2].image;
  f.depth = seq.frames[2].depth;
  return f;
}

tam::ToyDataset small_toy(std::uint64_t seed) {
  tam::ToyDataConfig dc;
  dc.seed = seed;
  return tam::make_toy_dataset(tam::toy_scene(), dc);
}

}  // namespace

TEST_SUITE("optimize") {

TEST_CASE("parameters start at zero logits and identity poses") {
  const ParamVector p = make_depth_pose_params(16, 24, 3, 2);
  CHECK(p.segments().size() == 5);
  CHECK(p.info("disparity_logits_0").shape == std::vector<int>{16, 24});
  CHECK(p.info("disparity_logits_2").shape == std::vector<int>{4, 6});
  CHECK(p.info("pose_1").size == 6);

  OptimizeConfig cfg;
  cfg.loss.scales = 3;
  const auto sigma = disparities_from_params(p, 16, 24, cfg);
  REQUIRE(sigma.size() == 3);
  for (const auto& m : sigma) {
    CHECK(m.min() == 0.5);
    CHECK(m.max() == 0.5);
  }
  const ScalarMap depth = disparity_to_depth(sigma[0], cfg.loss.range);
  CHECK(depth(3, 3) == doctest::Approx(0.19980).epsilon(1e-4));
}

TEST_CASE("shared pyramid: coarse logits feed every finer scale") {
  ParamVector p = make_depth_pose_params(8, 8, 2, 1);
  for (double& v : p.segment("disparity_logits_1")) v = 1.0;
  OptimizeConfig cfg;
  cfg.loss.scales = 2;
  const auto shared = disparities_from_params(p, 8, 8, cfg);
  CHECK(shared[0].min() == doctest::Approx(1.0 / (1.0 + std::exp(-1.0))));
  cfg.shared_pyramid = false;
  const auto independent = disparities_from_params(p, 8, 8, cfg);
  CHECK(independent[0].max() == 0.5);
}

TEST_CASE("objective gradients match finite differences") {
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    GradCheckSuiteConfig cfg;
    cfg.seed = seed;
    cfg.only = {"depth_pose_objective"};
    const auto rep = run_gradcheck_suite(cfg);
    INFO("seed ", seed, " worst ", rep.kernels.front().report.worst);
    CHECK(rep.passed);
  }
}

TEST_CASE("loss halves within 1000 steps on a textured plane") {
  const PlaneFrames f = plane_frames(32, 96);
  OptimizeConfig cfg;
  cfg.steps = 1000;
  const OptimizeResult res = optimize_depth_pose(f.context, f.target, f.K, cfg);
  REQUIRE(res.history.size() == 1001);
  CHECK(res.history.front().step == 0);
  CHECK(res.history.back().step == 1000);
  CHECK(res.history.back().total <= 0.5 * res.history.front().total);
  CHECK(res.final_loss.total == res.history.back().total);
  CHECK(res.poses.size() == 2);
  CHECK(res.depth.height() == 32);
  for (const auto& r : res.history) CHECK(std::isfinite(r.total));
}

TEST_CASE("divergence carries the step index") {
  PlaneFrames f = plane_frames(16, 24);
  f.target(7, 9, 1) = std::numeric_limits<double>::quiet_NaN();
  OptimizeConfig cfg;
  cfg.steps = 5;
  try {
    optimize_depth_pose(f.context, f.target, f.K, cfg);
    FAIL("expected divergence");
  } catch (const DivergenceError& e) {
    CHECK(e.step == 0);
    CHECK(std::string(e.what()).find("not finite") != std::string::npos);
  }

  // A huge learning rate saturates the disparities and pushes every pixel
  // out of view, but the loss stays finite and must not be reported.
  f = plane_frames(16, 24);
  cfg.adam.lr = 1e6;
  CHECK_NOTHROW(optimize_depth_pose(f.context, f.target, f.K, cfg));
}

TEST_CASE("optimizer runs are bit-reproducible") {
  const PlaneFrames f = plane_frames(16, 48);
  OptimizeConfig cfg;
  cfg.steps = 30;
  const OptimizeResult a = optimize_depth_pose(f.context, f.target, f.K, cfg);
  const OptimizeResult b = optimize_depth_pose(f.context, f.target, f.K, cfg);
  CHECK(a.depth == b.depth);
  CHECK(a.poses == b.poses);
}

TEST_CASE("toy forecasting task") {
  const tam::ToyDataset data = small_toy(0);
  CHECK(data.train.size() == 256);
  CHECK(data.test.size() == 128);
  CHECK(data.train.front().features.rows() == 4);
  CHECK(data.train.front().features.cols() == 48);
  const double var = tam::target_variance(data.test);
  CHECK(var > 0.0);

  tam::TrainConfig cfg;
  cfg.tam.feature_dim = 48;
  const tam::TrainResult two = tam::train_tam_toy(data, cfg);
  CHECK(two.test_mse.back() < 0.1 * var);
  CHECK(two.test_mse.back() == doctest::Approx(tam::evaluate_mse(two, cfg, data.test)).epsilon(1e-12));

  tam::TrainConfig flat = cfg;
  flat.tam.layers = 0;
  const tam::TrainResult zero = tam::train_tam_toy(data, flat);
  CHECK(zero.test_mse.back() > two.test_mse.back());

  tam::TrainConfig control = cfg;
  control.shuffle_labels = true;
  const tam::TrainResult shuffled = tam::train_tam_toy(data, control);
  CHECK(shuffled.test_mse.back() >= 0.9 * var);

  const tam::TrainResult again = tam::train_tam_toy(data, cfg);
  CHECK(again.test_mse == two.test_mse);
  CHECK(again.head_w == two.head_w);
}

}  // TEST_SUITE
