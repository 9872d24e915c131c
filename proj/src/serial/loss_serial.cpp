// Single-threaded reference kernels kept for testing and benchmarking.

#include <algorithm>
#include <cmath>

#include "depthcast/loss.hpp"

namespace depthcast::serial {

namespace {

struct Window {
  int r0, r1, c0, c1;
  double n() const { return static_cast<double>((r1 - r0 + 1) * (c1 - c0 + 1)); }
};

Window window(int r, int c, int h, int w) {
  return {std::max(r - 1, 0), std::min(r + 1, h - 1), std::max(c - 1, 0), std::min(c + 1, w - 1)};
}

// Two-pass window statistics (means first, then centred moments).
struct Moments {
  double mx, my, vx, vy, cxy;
};

Moments moments(const ImageBuffer& x, const ImageBuffer& y, const Window& win, int ch) {
  double mx = 0.0, my = 0.0;
  for (int r = win.r0; r <= win.r1; ++r) {
    for (int c = win.c0; c <= win.c1; ++c) {
      mx += x(r, c, ch);
      my += y(r, c, ch);
    }
  }
  mx /= win.n();
  my /= win.n();
  double vx = 0.0, vy = 0.0, cxy = 0.0;
  for (int r = win.r0; r <= win.r1; ++r) {
    for (int c = win.c0; c <= win.c1; ++c) {
      const double dx = x(r, c, ch) - mx;
      const double dy = y(r, c, ch) - my;
      vx += dx * dx;
      vy += dy * dy;
      cxy += dx * dy;
    }
  }
  return {mx, my, vx / win.n(), vy / win.n(), cxy / win.n()};
}

}  // namespace

ScalarMap ssim_dissim(const ImageBuffer& target, const ImageBuffer& recon, double c1, double c2) {
  const int h = target.height(), w = target.width(), nc = target.channels();
  ScalarMap out(h, w);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      double acc = 0.0;
      for (int ch = 0; ch < nc; ++ch) {
        const Moments m = moments(target, recon, window(r, c, h, w), ch);
        const double ssim = (2.0 * m.mx * m.my + c1) * (2.0 * m.cxy + c2) /
                            ((m.mx * m.mx + m.my * m.my + c1) * (m.vx + m.vy + c2));
        acc += std::clamp(0.5 * (1.0 - ssim), 0.0, 1.0);
      }
      out(r, c) = acc / nc;
    }
  }
  return out;
}

std::vector<double> photometric_backward(const ImageBuffer& target, const WarpResult& recon, const LossConfig& cfg,
                                         const ScalarMap& grad_pe) {
  const ImageBuffer& y = recon.image;
  const int h = target.height(), w = target.width(), nc = target.channels();
  std::vector<double> grad(static_cast<std::size_t>(h) * w * nc, 0.0);
  auto at = [&](int r, int c, int ch) -> double& { return grad[(static_cast<std::size_t>(r) * w + c) * nc + ch]; };

  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      if (recon.valid_mask(r, c) == 0.0) continue;
      const double g = grad_pe(r, c);
      for (int ch = 0; ch < nc; ++ch) {
        const double d = y(r, c, ch) - target(r, c, ch);
        at(r, c, ch) += cfg.alpha * g / nc * ((d > 0.0) - (d < 0.0));

        // Scatter dSSIM/dy over the window using the centred-moment form.
        const Window win = window(r, c, h, w);
        const Moments m = moments(target, y, win, ch);
        const double a1 = 2.0 * m.mx * m.my + cfg.ssim_c1;
        const double a2 = 2.0 * m.cxy + cfg.ssim_c2;
        const double b1 = m.mx * m.mx + m.my * m.my + cfg.ssim_c1;
        const double b2 = m.vx + m.vy + cfg.ssim_c2;
        const double gs = -0.5 * (1.0 - cfg.alpha) * g / nc;
        for (int rr = win.r0; rr <= win.r1; ++rr) {
          for (int cc = win.c0; cc <= win.c1; ++cc) {
            // d my/dy_q = 1/n, d vy/dy_q = 2 (y_q - my)/n, d cxy/dy_q = (x_q - mx)/n.
            const double dmy = 1.0 / win.n();
            const double dvy = 2.0 * (y(rr, cc, ch) - m.my) / win.n();
            const double dcxy = (target(rr, cc, ch) - m.mx) / win.n();
            const double da1 = 2.0 * m.mx * dmy;
            const double da2 = 2.0 * dcxy;
            const double db1 = 2.0 * m.my * dmy;
            const double db2 = dvy;
            const double ds = (da1 * a2 + a1 * da2) / (b1 * b2) - a1 * a2 * (db1 * b2 + b1 * db2) / (b1 * b1 * b2 * b2);
            at(rr, cc, ch) += gs * ds;
          }
        }
      }
    }
  }
  return grad;
}

}  // namespace depthcast::serial
