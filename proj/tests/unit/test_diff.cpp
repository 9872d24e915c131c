#include <doctest.h>

#include <cmath>

#include "depthcast/adam.hpp"
#include "depthcast/gradcheck.hpp"
#include "depthcast/gradcheck_suite.hpp"
#include "depthcast/params.hpp"
#include "depthcast/rng.hpp"

using namespace depthcast;

TEST_SUITE("diff") {

TEST_CASE("parameter vector segments") {
  ParamVector p;
  auto a = p.add("a", {2, 3});
  auto b = p.add("b", {4});
  CHECK(a.size() == 6);
  CHECK(b.size() == 4);
  CHECK(p.size() == 10);
  CHECK(p.info("b").offset == 6);
  CHECK(p.segment_of(7) == "b");
  CHECK(p.segment_of(5) == "a");
  for (double v : p.values()) CHECK(v == 0.0);
  CHECK_THROWS_AS(p.add("a", {1}), std::invalid_argument);
  CHECK_THROWS(p.segment("missing"));
  b[1] = 3.0;
  CHECK(p.segment("b")[1] == 3.0);
  const ParamVector z = p.zeros_like();
  CHECK(z.same_layout(p));
  CHECK(z.segment("b")[1] == 0.0);
}

TEST_CASE("Adam with a zero gradient only advances the step") {
  ParamVector p;
  auto x = p.add("x", {3});
  x[0] = 1.0;
  x[1] = -2.0;
  const ParamVector g = p.zeros_like();
  AdamState st;
  adam_step(p, g, st);
  CHECK(st.step == 1);
  CHECK(p.segment("x")[0] == 1.0);
  CHECK(p.segment("x")[1] == -2.0);
}

TEST_CASE("first Adam step moves by lr against the gradient sign") {
  ParamVector p;
  p.add("x", {4});
  ParamVector g = p.zeros_like();
  const double grads[] = {3.0, -0.5, 1e3, -2e-2};
  for (int i = 0; i < 4; ++i) g.values()[i] = grads[i];
  AdamState st;
  adam_step(p, g, st);
  for (int i = 0; i < 4; ++i) {
    CHECK(std::abs(p.values()[i] + st.config.lr * std::copysign(1.0, grads[i])) < st.config.lr * 1e-6);
  }
}

TEST_CASE("Adam converges on a quadratic") {
  ParamVector p;
  p.add("x", {1});
  AdamState st(AdamConfig{.lr = 0.1});
  for (int i = 0; i < 500; ++i) {
    ParamVector g = p.zeros_like();
    g.values()[0] = 2.0 * (p.values()[0] - 3.0);
    adam_step(p, g, st);
  }
  CHECK(std::abs(p.values()[0] - 3.0) < 1e-2);
}

TEST_CASE("Adam learning-rate decay and error reporting") {
  AdamState st(AdamConfig{.lr = 1e-4, .decay_step = 3});
  CHECK(st.current_lr() == 1e-4);
  st.step = 1;
  CHECK(st.current_lr() == 1e-4);
  st.step = 2;
  CHECK(st.current_lr() == 1e-5);

  ParamVector p;
  p.add("first", {2});
  p.add("pose_1", {6});
  ParamVector g = p.zeros_like();
  g.segment("pose_1")[4] = NAN;
  AdamState fresh;
  try {
    adam_step(p, g, fresh);
    FAIL("expected an exception");
  } catch (const std::domain_error& e) {
    CHECK(std::string(e.what()).find("pose_1") != std::string::npos);
  }
  CHECK(fresh.step == 0);
}

TEST_CASE("property: Adam trajectories are bit-identical across runs") {
  const auto run = [] {
    Rng rng(61);
    ParamVector p;
    p.add("w", {50});
    for (double& v : p.values()) v = rng.uniform(-1, 1);
    AdamState st(AdamConfig{.lr = 1e-2});
    for (int i = 0; i < 200; ++i) {
      ParamVector g = p.zeros_like();
      for (std::size_t k = 0; k < 50; ++k) g.values()[k] = std::sin(3.0 * p.values()[k]) + 0.1 * p.values()[k];
      adam_step(p, g, st);
    }
    return std::vector<double>(p.values().begin(), p.values().end());
  };
  CHECK(run() == run());
}

TEST_CASE("finite-difference checker") {
  ParamVector x;
  x.add("x", {1});
  x.values()[0] = 3.0;
  const auto square = [](const ParamVector& p) { return p.values()[0] * p.values()[0]; };
  ParamVector g = x.zeros_like();
  g.values()[0] = 6.0;
  const GradCheckReport ok = finite_diff_check(square, g, x);
  CHECK(ok.passed);
  CHECK(ok.max_rel_error < 1e-8);
  CHECK(ok.checked == 1);

  g.values()[0] = 12.0;
  const GradCheckReport bad = finite_diff_check(square, g, x);
  CHECK_FALSE(bad.passed);
  CHECK(bad.max_rel_error == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(bad.worst == "x[0]");
  REQUIRE(bad.failing.size() == 1);
}

TEST_CASE("the default gradient-check suite passes and a planted bug is caught") {
  const GradCheckSuiteReport rep = run_gradcheck_suite({});
  CHECK(rep.passed);
  CHECK(rep.kernels.size() == gradcheck_kernel_names().size());
  for (const auto& k : rep.kernels) {
    INFO(k.kernel);
    CHECK(k.report.passed);
    CHECK(k.report.checked > 0);
  }

  GradCheckSuiteConfig planted;
  planted.planted_bug = "warp_backward";
  const GradCheckSuiteReport broken = run_gradcheck_suite(planted);
  CHECK_FALSE(broken.passed);
  for (const auto& k : broken.kernels) {
    INFO(k.kernel);
    CHECK(k.report.passed == (k.kernel != "warp_backward"));
    if (k.kernel == "warp_backward") CHECK(k.report.max_rel_error == doctest::Approx(1.0).epsilon(1e-3));
  }

  GradCheckSuiteConfig unknown;
  unknown.only = {"no_such_kernel"};
  CHECK_THROWS_AS(run_gradcheck_suite(unknown), std::invalid_argument);
}

}  // TEST_SUITE
