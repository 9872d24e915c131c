#include <doctest.h>

#include <cmath>

#include "depthcast/gradcheck_suite.hpp"
#include "depthcast/loss.hpp"
#include "depthcast/synth.hpp"
#include "support.hpp"

using namespace depthcast;
using testing::random_image;
using testing::random_map;

namespace {

WarpResult as_recon(const ImageBuffer& img, const ScalarMap& mask) {
  return WarpResult{img, mask, ScalarMap(img.height(), img.width()), ScalarMap(img.height(), img.width())};
}

WarpResult as_recon(const ImageBuffer& img) { return as_recon(img, ScalarMap(img.height(), img.width(), 1.0)); }

// Direct per-window SSIM dissimilarity with two-pass variances.
ScalarMap ssim_oracle(const ImageBuffer& x, const ImageBuffer& y, double c1, double c2) {
  const int h = x.height(), w = x.width(), nc = x.channels();
  ScalarMap out(h, w);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      double acc = 0.0;
      for (int ch = 0; ch < nc; ++ch) {
        std::vector<double> xs, ys;
        for (int dr = -1; dr <= 1; ++dr) {
          for (int dc = -1; dc <= 1; ++dc) {
            const int rr = r + dr, cc = c + dc;
            if (rr < 0 || rr >= h || cc < 0 || cc >= w) continue;
            xs.push_back(x(rr, cc, ch));
            ys.push_back(y(rr, cc, ch));
          }
        }
        const double n = double(xs.size());
        double mx = 0, my = 0;
        for (std::size_t i = 0; i < xs.size(); ++i) {
          mx += xs[i] / n;
          my += ys[i] / n;
        }
        double vx = 0, vy = 0, cxy = 0;
        for (std::size_t i = 0; i < xs.size(); ++i) {
          vx += (xs[i] - mx) * (xs[i] - mx) / n;
          vy += (ys[i] - my) * (ys[i] - my) / n;
          cxy += (xs[i] - mx) * (ys[i] - my) / n;
        }
        const double s = (2 * mx * my + c1) * (2 * cxy + c2) / ((mx * mx + my * my + c1) * (vx + vy + c2));
        acc += std::clamp((1 - s) / 2, 0.0, 1.0);
      }
      out(r, c) = acc / nc;
    }
  }
  return out;
}

double smoothness_oracle(const ScalarMap& d, const ImageBuffer& img) {
  const int h = d.height(), w = d.width();
  double mean = 0;
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) mean += d(r, c);
  mean /= h * w;
  const auto gray = [&](int r, int c) {
    double g = 0;
    for (int ch = 0; ch < img.channels(); ++ch) g += img(r, c, ch);
    return g / img.channels();
  };
  double total = 0;
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      if (c + 1 < w) total += std::abs(d(r, c + 1) - d(r, c)) / mean * std::exp(-std::abs(gray(r, c + 1) - gray(r, c)));
      if (r + 1 < h) total += std::abs(d(r + 1, c) - d(r, c)) / mean * std::exp(-std::abs(gray(r + 1, c) - gray(r, c)));
    }
  }
  return total / (h * w);
}

struct Pyramid {
  std::vector<ScalarMap> sigma;
};

Pyramid random_pyramid(Rng& rng, int h, int w, int scales) {
  Pyramid p;
  for (int s = 0; s < scales; ++s) {
    const auto [hs, ws] = scale_shape(h, w, s);
    p.sigma.push_back(random_map(rng, hs, ws, 0.1, 0.3));
  }
  return p;
}

}  // namespace

TEST_SUITE("loss") {

TEST_CASE("L1 photometric term") {
  Rng rng(41);
  const ImageBuffer t = random_image(rng, 6, 7, 3);
  CHECK(l1_photo(t, as_recon(t)).max() == 0.0);

  const ImageBuffer half(4, 4, 3, 0.5), quarter(4, 4, 3, 0.25);
  const ScalarMap l = l1_photo(half, as_recon(quarter));
  CHECK(l.min() == 0.25);
  CHECK(l.max() == 0.25);

  const ImageBuffer y = random_image(rng, 6, 7, 3);
  ScalarMap mask = random_map(rng, 6, 7, 0, 1);
  for (double& v : mask.data()) v = v < 0.3 ? 0.0 : 1.0;
  const ScalarMap got = l1_photo(t, as_recon(y, mask));
  for (int r = 0; r < 6; ++r) {
    for (int c = 0; c < 7; ++c) {
      double e = 0;
      for (int ch = 0; ch < 3; ++ch) e += std::abs(t(r, c, ch) - y(r, c, ch));
      CHECK(got(r, c) == doctest::Approx(mask(r, c) * e / 3).epsilon(1e-14));
    }
  }
  CHECK_THROWS_AS(l1_photo(t, as_recon(random_image(rng, 6, 8, 3))), std::domain_error);
}

TEST_CASE("SSIM dissimilarity") {
  Rng rng(42);
  const ImageBuffer x = random_image(rng, 7, 9, 3);
  CHECK(ssim_dissim(x, x).max() < 1e-15);

  const double c1 = 1e-4;
  const ScalarMap flat = ssim_dissim(ImageBuffer(5, 5, 3, 0.5), ImageBuffer(5, 5, 3, 0.8));
  const double expect = (1 - (2 * 0.5 * 0.8 + c1) / (0.25 + 0.64 + c1)) / 2;
  for (double v : flat.data()) CHECK(v == doctest::Approx(expect).epsilon(1e-12));

  for (int trial = 0; trial < 5; ++trial) {
    const int h = 2 + int(rng.index(9)), w = 2 + int(rng.index(9));
    const int nc = rng.index(2) ? 3 : 1;
    const ImageBuffer a = random_image(rng, h, w, nc), b = random_image(rng, h, w, nc);
    CHECK(testing::max_abs_diff(ssim_dissim(a, b), ssim_oracle(a, b, 1e-4, 9e-4)) < 1e-10);
  }
}

TEST_CASE("property: SSIM dissimilarity is symmetric and bounded") {
  Rng rng(43);
  for (int i = 0; i < 20; ++i) {
    const ImageBuffer a = random_image(rng, 6, 8, 3), b = random_image(rng, 6, 8, 3);
    const ScalarMap ab = ssim_dissim(a, b), ba = ssim_dissim(b, a);
    CHECK(testing::max_abs_diff(ab, ba) < 1e-15);
    CHECK(ab.min() >= 0.0);
    CHECK(ab.max() <= 1.0);
  }
}

TEST_CASE("photometric blend") {
  Rng rng(44);
  const ImageBuffer t = random_image(rng, 6, 8, 3), y = random_image(rng, 6, 8, 3);
  LossConfig cfg;
  CHECK(photometric(t, as_recon(t), cfg).max() < 1e-15);

  cfg.alpha = 1.0;
  CHECK(photometric(t, as_recon(y), cfg) == l1_photo(t, as_recon(y)));
  cfg.alpha = 0.0;
  CHECK(photometric(t, as_recon(y), cfg) == ssim_dissim(t, y));

  cfg.alpha = 0.15;
  ScalarMap mask(6, 8, 1.0);
  mask(2, 3) = 0.0;
  const ScalarMap pe = photometric(t, as_recon(y, mask), cfg);
  CHECK(pe(2, 3) == 0.0);
  CHECK(pe.min() >= 0.0);
  const ScalarMap l1 = l1_photo(t, as_recon(y)), ss = ssim_dissim(t, y);
  CHECK(pe(4, 4) == doctest::Approx(0.85 * ss(4, 4) + 0.15 * l1(4, 4)).epsilon(1e-14));
}

TEST_CASE("edge-aware smoothness") {
  Rng rng(45);
  const ImageBuffer img = random_image(rng, 6, 9, 3);
  CHECK(smoothness(ScalarMap(6, 9, 0.4), img) == 0.0);

  ScalarMap ramp(5, 8);
  for (int r = 0; r < 5; ++r)
    for (int c = 0; c < 8; ++c) ramp(r, c) = 0.1 + 0.05 * c;
  const double mean = ramp.mean();
  // Seven of eight columns carry a step of 0.05 / mean under unit weights.
  CHECK(smoothness(ramp, ImageBuffer(5, 8, 3, 0.7)) == doctest::Approx(7.0 / 8.0 * 0.05 / mean).epsilon(1e-13));

  for (int i = 0; i < 5; ++i) {
    const ScalarMap d = random_map(rng, 6, 9, 0.05, 0.9);
    CHECK(std::abs(smoothness(d, img) - smoothness_oracle(d, img)) < 1e-10);
  }
  CHECK_THROWS_AS(smoothness(ScalarMap(6, 9, 0.0), img), std::domain_error);
}

TEST_CASE("auto-mask uses a strict comparison") {
  Rng rng(46);
  const ImageBuffer t = random_image(rng, 6, 6, 3);
  const ImageBuffer other = random_image(rng, 6, 6, 3);
  const LossConfig cfg;
  CHECK(auto_mask(t, as_recon(t), other, cfg).min() == 1.0);
  CHECK(auto_mask(t, as_recon(other), other, cfg).max() == 0.0);
}

TEST_CASE("property: auto-mask depends only on the loss ordering") {
  Rng rng(47);
  LossConfig cfg;
  cfg.alpha = 1.0;
  for (int i = 0; i < 10; ++i) {
    const ImageBuffer t = random_image(rng, 6, 7, 3, 0.0, 0.7);
    const ImageBuffer y = random_image(rng, 6, 7, 3, 0.0, 0.7);
    const ImageBuffer u = random_image(rng, 6, 7, 3, 0.0, 0.7);
    const double shift = rng.uniform(0.0, 0.3);
    ImageBuffer t2 = t, y2 = y, u2 = u;
    for (double& v : t2.data()) v += shift;
    for (double& v : y2.data()) v += shift;
    for (double& v : u2.data()) v += shift;
    CHECK(auto_mask(t, as_recon(y), u, cfg) == auto_mask(t2, as_recon(y2), u2, cfg));
  }
}

TEST_CASE("auto-mask removes almost everything on a static sequence") {
  const int h = 32, w = 48;
  const synth::Scene scene = testing::textured_plane(6.0);
  const Intrinsics K = testing::wide_camera(h, w);
  const auto frame = synth::render(scene, Pose::identity(), K, h, w);
  // Any depth guess: the identity warp of a static frame is exact, so the
  // comparison ties everywhere.
  const std::vector<ImageBuffer> ctx{frame.image, frame.image};
  const std::vector<PoseParams> poses{PoseParams{0, 0, 0, 0.05, 0, 0}, PoseParams{0, 0, 0, -0.02, 0.01, 0}};
  Rng rng(48);
  const Pyramid p = random_pyramid(rng, h, w, 1);
  LossConfig cfg;
  cfg.scales = 1;
  const LossBreakdown lb = total_loss(ctx, frame.image, p.sigma, poses, K, cfg);
  CHECK(lb.mask.mean() < 0.05);
}

TEST_CASE("total loss at the rendered ground truth is near zero") {
  const int h = 64, w = 192;
  synth::Scene scene = testing::textured_plane(9.0);
  synth::Primitive box;
  box.kind = synth::Primitive::Kind::Box;
  box.box.min = Vec3(-1.0, -0.8, 6.0);
  box.box.max = Vec3(1.0, 0.8, 7.0);
  box.texture.components = {{0.3, 0.2, 0.2, 0.3}, {-0.2, 0.25, 0.15, 2.0}};
  scene.primitives.push_back(box);
  const Intrinsics K = testing::wide_camera(h, w);
  const Pose tar = pose_from_axis_angle(Vec3::Zero(), Vec3(0.2, 0, 0));
  const Pose src_a = Pose::identity();
  const Pose src_b = pose_from_axis_angle(Vec3::Zero(), Vec3(0.1, 0, 0));
  const auto target = synth::render(scene, tar, K, h, w);
  const std::vector<ImageBuffer> ctx{synth::render(scene, src_a, K, h, w).image, synth::render(scene, src_b, K, h, w).image};
  const std::vector<PoseParams> poses{params_from_pose(synth::relative_pose(src_a, tar)),
                                      params_from_pose(synth::relative_pose(src_b, tar))};
  LossConfig cfg;
  cfg.scales = 1;
  ScalarMap sigma(h, w);
  for (std::size_t i = 0; i < sigma.size(); ++i) sigma.data()[i] = cfg.range.sigma(target.depth.data()[i]);
  const LossBreakdown lb = total_loss(ctx, target.image, std::vector<ScalarMap>{sigma}, poses, K, cfg);
  CHECK(lb.photometric < 1e-3);
}

TEST_CASE("total loss bookkeeping") {
  Rng rng(49);
  const int h = 16, w = 24;
  const ImageBuffer target = random_image(rng, h, w, 3);
  const std::vector<ImageBuffer> ctx{random_image(rng, h, w, 3), random_image(rng, h, w, 3)};
  const std::vector<PoseParams> poses{PoseParams{0.01, 0, 0, 0.1, 0, 0}, PoseParams{0, -0.01, 0, -0.1, 0.05, 0}};
  const Intrinsics K = testing::wide_camera(h, w);

  SUBCASE("a single scale is the plain masked mean plus weighted smoothness") {
    LossConfig cfg;
    cfg.scales = 1;
    const Pyramid p = random_pyramid(rng, h, w, 1);
    const LossBreakdown lb = total_loss(ctx, target, p.sigma, poses, K, cfg);
    REQUIRE(lb.per_scale.size() == 1);
    CHECK(lb.total == doctest::Approx(lb.photometric + cfg.alpha_d * lb.smoothness).epsilon(1e-15));
    CHECK(lb.smoothness == doctest::Approx(smoothness(p.sigma[0], target)).epsilon(1e-15));

    // Independent recomputation of the photometric term.
    const ScalarMap depth = disparity_to_depth(p.sigma[0], cfg.range);
    const ScalarMap pe_id = photometric(target, ctx.back(), cfg);
    double acc = 0.0;
    std::vector<WarpResult> rec;
    std::vector<ScalarMap> pe;
    for (std::size_t i = 0; i < 2; ++i) {
      rec.push_back(reverse_warp(ctx[i], depth, pose_from_params(poses[i]), K));
      pe.push_back(photometric(target, rec.back(), cfg));
    }
    for (int r = 0; r < h; ++r) {
      for (int c = 0; c < w; ++c) {
        double n = 0, s = 0;
        for (std::size_t i = 0; i < 2; ++i) {
          if (rec[i].valid_mask(r, c) == 0.0) continue;
          n += 1;
          s += pe[i](r, c);
        }
        const double agg = n > 0 ? s / n : 0.0;
        if (agg < pe_id(r, c)) acc += agg;
      }
    }
    CHECK(lb.photometric == doctest::Approx(acc / (h * w)).epsilon(1e-13));
  }

  SUBCASE("scales add up and the smoothness weight enters linearly") {
    LossConfig cfg;
    const Pyramid p = random_pyramid(rng, h, w, 4);
    const LossBreakdown a = total_loss(ctx, target, p.sigma, poses, K, cfg);
    double photo = 0, smooth = 0;
    for (const auto& s : a.per_scale) {
      photo += s.photometric;
      smooth += s.smoothness;
    }
    CHECK(a.photometric == doctest::Approx(photo).epsilon(1e-15));
    CHECK(a.smoothness == doctest::Approx(smooth).epsilon(1e-15));

    LossConfig doubled = cfg;
    doubled.alpha_d *= 2;
    const LossBreakdown b = total_loss(ctx, target, p.sigma, poses, K, doubled);
    CHECK(b.total - a.total == doctest::Approx(cfg.alpha_d * a.smoothness).epsilon(1e-9));
  }

  SUBCASE("pyramid shapes are enforced") {
    LossConfig cfg;
    Pyramid p = random_pyramid(rng, h, w, 4);
    p.sigma[2] = ScalarMap(3, 3, 0.2);
    CHECK_THROWS_AS(total_loss(ctx, target, p.sigma, poses, K, cfg), std::domain_error);
    p.sigma.pop_back();
    CHECK_THROWS_AS(total_loss(ctx, target, p.sigma, poses, K, cfg), std::domain_error);
  }

  SUBCASE("every per-pixel value is finite and non-negative") {
    LossConfig cfg;
    const Pyramid p = random_pyramid(rng, h, w, 4);
    const LossBreakdown lb = total_loss(ctx, target, p.sigma, poses, K, cfg);
    for (double v : lb.per_pixel_pe.data()) {
      CHECK(std::isfinite(v));
      CHECK(v >= 0.0);
    }
  }
}

TEST_CASE("property: photometric, smoothness and total-loss gradients match finite differences") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    GradCheckSuiteConfig cfg;
    cfg.seed = seed;
    cfg.only = {"photometric", "smoothness", "total_loss"};
    const GradCheckSuiteReport rep = run_gradcheck_suite(cfg);
    for (const auto& k : rep.kernels) {
      INFO(k.kernel, " seed ", seed, " worst ", k.report.worst);
      CHECK(k.report.passed);
      CHECK(k.report.max_rel_error <= 1e-4);
    }
  }
}

}  // TEST_SUITE
