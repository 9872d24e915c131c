#include "depthcast/loss.hpp"

#include <algorithm>
#include <memory>
#include <span>
#include <cmath>
#include <stdexcept>
#include <string>

namespace depthcast {

namespace {

struct WindowStats {
  double mx = 0.0, my = 0.0, exx = 0.0, eyy = 0.0, exy = 0.0;
};

// 3x3 box sums over HWC planes, windows truncated at the border. Rows are
// summed first, then columns; each output depends only on its own window so
// the row loop parallelizes without changing results.
void box_sum3(std::span<const double* const> src, std::span<double* const> dst, int h, int w, int nc) {
  const std::size_t row = static_cast<std::size_t>(w) * nc;
  const std::size_t step = static_cast<std::size_t>(nc);
  const std::unique_ptr<double[]> tmp(new double[src.size() * static_cast<std::size_t>(h) * row]);
#pragma omp parallel for schedule(static)
  for (int r = 0; r < h; ++r) {
    for (std::size_t k = 0; k < src.size(); ++k) {
      const double* in = src[k] + r * row;
      double* out = tmp.get() + (k * h + r) * row;
      for (std::size_t i = 0; i < step; ++i) {
        out[i] = in[i] + in[i + step];
        out[row - step + i] = in[row - step + i] + in[row - 2 * step + i];
      }
      for (std::size_t i = step; i < row - step; ++i) out[i] = in[i - step] + in[i] + in[i + step];
    }
  }
#pragma omp parallel for schedule(static)
  for (int r = 0; r < h; ++r) {
    for (std::size_t k = 0; k < src.size(); ++k) {
      const double* mid = tmp.get() + (k * h + r) * row;
      double* out = dst[k] + r * row;
      if (r > 0 && r + 1 < h) {
        const double* up = mid - row;
        const double* down = mid + row;
        for (std::size_t i = 0; i < row; ++i) out[i] = up[i] + mid[i] + down[i];
      } else {
        const double* other = r > 0 ? mid - row : mid + row;
        for (std::size_t i = 0; i < row; ++i) out[i] = mid[i] + other[i];
      }
    }
  }
}

int window_count(int r, int c, int h, int w) {
  return (std::min(r + 1, h - 1) - std::max(r - 1, 0) + 1) * (std::min(c + 1, w - 1) - std::max(c - 1, 0) + 1);
}

// Window means of x, y, x^2, y^2 and xy for every pixel and channel.
struct MomentMaps {
  std::vector<double> mx, my, exx, eyy, exy;

  MomentMaps(const ImageBuffer& x, const ImageBuffer& y) {
    const int h = x.height(), w = x.width(), nc = x.channels();
    const std::size_t n = static_cast<std::size_t>(h) * w * nc;
    std::vector<double> xx(n), yy(n), xy(n);
    const auto xd = x.data();
    const auto yd = y.data();
    for (std::size_t i = 0; i < n; ++i) {
      xx[i] = xd[i] * xd[i];
      yy[i] = yd[i] * yd[i];
      xy[i] = xd[i] * yd[i];
    }
    mx.resize(n);
    my.resize(n);
    exx.resize(n);
    eyy.resize(n);
    exy.resize(n);
    const double* in[] = {xd.data(), yd.data(), xx.data(), yy.data(), xy.data()};
    double* out[] = {mx.data(), my.data(), exx.data(), eyy.data(), exy.data()};
    box_sum3(in, out, h, w, nc);
    for (int r = 0; r < h; ++r) {
      for (int c = 0; c < w; ++c) {
        const double inv = 1.0 / window_count(r, c, h, w);
        for (int ch = 0; ch < nc; ++ch) {
          const std::size_t i = (static_cast<std::size_t>(r) * w + c) * nc + ch;
          mx[i] *= inv;
          my[i] *= inv;
          exx[i] *= inv;
          eyy[i] *= inv;
          exy[i] *= inv;
        }
      }
    }
  }

  WindowStats at(std::size_t i) const { return {mx[i], my[i], exx[i], eyy[i], exy[i]}; }
};

struct SsimTerms {
  double s = 0.0;
  // Partials of S with respect to the window statistics of the second image.
  double d_my = 0.0, d_eyy = 0.0, d_exy = 0.0;
};

SsimTerms ssim_terms(const WindowStats& w, double c1, double c2) {
  const double a1 = 2.0 * w.mx * w.my + c1;
  const double a2 = 2.0 * (w.exy - w.mx * w.my) + c2;
  const double b1 = w.mx * w.mx + w.my * w.my + c1;
  const double b2 = (w.exx - w.mx * w.mx) + (w.eyy - w.my * w.my) + c2;
  SsimTerms t;
  t.s = a1 * a2 / (b1 * b2);
  const double dA1 = a2 / (b1 * b2);
  const double dA2 = a1 / (b1 * b2);
  const double dB1 = -t.s / b1;
  const double dB2 = -t.s / b2;
  t.d_my = dA1 * 2.0 * w.mx + dA2 * (-2.0 * w.mx) + dB1 * 2.0 * w.my + dB2 * (-2.0 * w.my);
  t.d_eyy = dB2;
  t.d_exy = 2.0 * dA2;
  return t;
}

void require_same_shape(const ImageBuffer& a, const ImageBuffer& b, const char* what) {
  if (!a.same_shape(b)) throw std::domain_error(std::string(what) + ": image shapes differ");
}

ScalarMap photometric_impl(const ImageBuffer& target, const ImageBuffer& recon, const ScalarMap* mask,
                           const LossConfig& cfg) {
  require_same_shape(target, recon, "photometric");
  ScalarMap out = ssim_dissim(target, recon, cfg.ssim_c1, cfg.ssim_c2);
  const int h = target.height(), w = target.width(), nc = target.channels();
#pragma omp parallel for schedule(static)
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      if (mask && (*mask)(r, c) == 0.0) {
        out(r, c) = 0.0;
        continue;
      }
      double l1 = 0.0;
      for (int ch = 0; ch < nc; ++ch) l1 += std::abs(target(r, c, ch) - recon(r, c, ch));
      l1 /= nc;
      out(r, c) = (1.0 - cfg.alpha) * out(r, c) + cfg.alpha * l1;
    }
  }
  return out;
}

double sign(double x) { return (x > 0.0) - (x < 0.0); }

}  // namespace

void LossConfig::validate() const {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw std::invalid_argument("alpha must lie in [0, 1]");
  if (!(alpha_d >= 0.0) || !std::isfinite(alpha_d)) throw std::invalid_argument("alpha_d must be non-negative");
  if (scales < 1) throw std::invalid_argument("scales must be at least 1");
  if (!(ssim_c1 > 0.0) || !(ssim_c2 > 0.0)) throw std::invalid_argument("SSIM stabilizers must be positive");
}

std::pair<int, int> scale_shape(int h, int w, int s) { return {h >> s, w >> s}; }

ScalarMap l1_photo(const ImageBuffer& target, const WarpResult& recon) {
  require_same_shape(target, recon.image, "l1_photo");
  const int h = target.height(), w = target.width(), nc = target.channels();
  ScalarMap out(h, w);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      if (recon.valid_mask(r, c) == 0.0) continue;
      double s = 0.0;
      for (int ch = 0; ch < nc; ++ch) s += std::abs(target(r, c, ch) - recon.image(r, c, ch));
      out(r, c) = s / nc;
    }
  }
  return out;
}

ScalarMap ssim_dissim(const ImageBuffer& target, const ImageBuffer& recon, double c1, double c2) {
  require_same_shape(target, recon, "ssim_dissim");
  const int h = target.height(), w = target.width(), nc = target.channels();
  ScalarMap out(h, w);
  const MomentMaps mm(target, recon);
#pragma omp parallel for schedule(static)
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      double acc = 0.0;
      for (int ch = 0; ch < nc; ++ch) {
        const SsimTerms t = ssim_terms(mm.at((static_cast<std::size_t>(r) * w + c) * nc + ch), c1, c2);
        acc += std::clamp(0.5 * (1.0 - t.s), 0.0, 1.0);
      }
      out(r, c) = acc / nc;
    }
  }
  return out;
}

ScalarMap photometric(const ImageBuffer& target, const WarpResult& recon, const LossConfig& cfg) {
  return photometric_impl(target, recon.image, &recon.valid_mask, cfg);
}

ScalarMap photometric(const ImageBuffer& target, const ImageBuffer& other, const LossConfig& cfg) {
  return photometric_impl(target, other, nullptr, cfg);
}

std::vector<double> photometric_backward(const ImageBuffer& target, const WarpResult& recon, const LossConfig& cfg,
                                         const ScalarMap& grad_pe) {
  const ImageBuffer& y = recon.image;
  require_same_shape(target, y, "photometric_backward");
  const int h = target.height(), w = target.width(), nc = target.channels();
  const std::size_t n = static_cast<std::size_t>(h) * w * nc;

  // Per-window coefficients: dL/dy(q) = sum over windows p containing q of
  // a(p) + 2 y(q) b(p) + x(q) e(p). The window relation is symmetric, so
  // that sum is a 3x3 box sum of the coefficient maps.
  const MomentMaps mm(target, y);
  std::vector<double> coef_a(n, 0.0), coef_b(n, 0.0), coef_e(n, 0.0);
#pragma omp parallel for schedule(static)
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      const double g = recon.valid_mask(r, c) == 0.0 ? 0.0 : grad_pe(r, c);
      if (g == 0.0) continue;
      const double gs = -0.5 * (1.0 - cfg.alpha) * g / nc / window_count(r, c, h, w);
      for (int ch = 0; ch < nc; ++ch) {
        const std::size_t i = (static_cast<std::size_t>(r) * w + c) * nc + ch;
        const SsimTerms t = ssim_terms(mm.at(i), cfg.ssim_c1, cfg.ssim_c2);
        coef_a[i] = gs * t.d_my;
        coef_b[i] = gs * t.d_eyy;
        coef_e[i] = gs * t.d_exy;
      }
    }
  }
  std::vector<double> sum_a(n), sum_b(n), sum_e(n);
  {
    const double* in[] = {coef_a.data(), coef_b.data(), coef_e.data()};
    double* out[] = {sum_a.data(), sum_b.data(), sum_e.data()};
    box_sum3(in, out, h, w, nc);
  }

  std::vector<double> grad(n, 0.0);
#pragma omp parallel for schedule(static)
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      const double gl1 = recon.valid_mask(r, c) == 0.0 ? 0.0 : cfg.alpha * grad_pe(r, c) / nc;
      for (int ch = 0; ch < nc; ++ch) {
        const std::size_t i = (static_cast<std::size_t>(r) * w + c) * nc + ch;
        const double yq = y.data()[i];
        const double xq = target.data()[i];
        grad[i] = sum_a[i] + 2.0 * yq * sum_b[i] + xq * sum_e[i] + gl1 * sign(yq - xq);
      }
    }
  }
  return grad;
}

double smoothness(const ScalarMap& disparity, const ImageBuffer& img) {
  if (disparity.height() != img.height() || disparity.width() != img.width()) {
    throw std::domain_error("smoothness: disparity and image shapes differ");
  }
  const double m = disparity.mean();
  if (!(std::abs(m) >= 1e-12)) throw std::domain_error("smoothness: disparity mean is zero");
  const auto [ix, iy] = image_gradients(img);
  const int h = disparity.height(), w = disparity.width();
  double acc = 0.0;
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      if (c + 1 < w) acc += std::abs((disparity(r, c + 1) - disparity(r, c)) / m) * std::exp(-std::abs(ix(r, c)));
      if (r + 1 < h) acc += std::abs((disparity(r + 1, c) - disparity(r, c)) / m) * std::exp(-std::abs(iy(r, c)));
    }
  }
  return acc / static_cast<double>(h * w);
}

ScalarMap smoothness_backward(const ScalarMap& disparity, const ImageBuffer& img, double grad_out) {
  const double m = disparity.mean();
  if (!(std::abs(m) >= 1e-12)) throw std::domain_error("smoothness: disparity mean is zero");
  const auto [ix, iy] = image_gradients(img);
  const int h = disparity.height(), w = disparity.width();
  const double scale = grad_out / static_cast<double>(h * w);

  // Gradient with respect to the normalized disparity d / m.
  ScalarMap gn(h, w);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      if (c + 1 < w) {
        const double s = scale * sign(disparity(r, c + 1) - disparity(r, c)) * std::exp(-std::abs(ix(r, c)));
        gn(r, c + 1) += s;
        gn(r, c) -= s;
      }
      if (r + 1 < h) {
        const double s = scale * sign(disparity(r + 1, c) - disparity(r, c)) * std::exp(-std::abs(iy(r, c)));
        gn(r + 1, c) += s;
        gn(r, c) -= s;
      }
    }
  }
  // d(d_p / m)/d d_q = delta_pq / m - d_p / (m^2 N).
  double dot = 0.0;
  for (std::size_t i = 0; i < gn.size(); ++i) dot += gn.data()[i] * disparity.data()[i];
  const double shift = dot / (m * m * static_cast<double>(h * w));
  ScalarMap g(h, w);
  for (std::size_t i = 0; i < g.size(); ++i) g.data()[i] = gn.data()[i] / m - shift;
  return g;
}

ScalarMap auto_mask(const ScalarMap& pe_recon, const ScalarMap& pe_identity) {
  if (!pe_recon.same_shape(pe_identity)) throw std::domain_error("auto_mask: shapes differ");
  ScalarMap mu(pe_recon.height(), pe_recon.width());
  for (std::size_t i = 0; i < mu.size(); ++i) mu.data()[i] = pe_recon.data()[i] < pe_identity.data()[i] ? 1.0 : 0.0;
  return mu;
}

ScalarMap auto_mask(const ImageBuffer& target, const WarpResult& recon, const ImageBuffer& unwarped_source,
                    const LossConfig& cfg) {
  require_same_shape(target, unwarped_source, "auto_mask");
  return auto_mask(photometric(target, recon, cfg), photometric(target, unwarped_source, cfg));
}

LossBreakdown total_loss(std::span<const ImageBuffer> context, const ImageBuffer& target,
                         std::span<const ScalarMap> disparities, std::span<const PoseParams> poses,
                         const Intrinsics& K, const LossConfig& cfg, LossGradients* grad) {
  cfg.validate();
  if (context.empty()) throw std::domain_error("total_loss: no context frames");
  if (context.size() != poses.size()) throw std::domain_error("total_loss: one pose per context frame is required");
  if (static_cast<int>(disparities.size()) != cfg.scales) {
    throw std::domain_error("total_loss: expected " + std::to_string(cfg.scales) + " disparity scales, got " +
                            std::to_string(disparities.size()));
  }
  for (const auto& f : context) require_same_shape(f, target, "total_loss");
  const int h = target.height(), w = target.width();
  const double npix = static_cast<double>(h) * w;
  for (int s = 0; s < cfg.scales; ++s) {
    const auto [hs, ws] = scale_shape(h, w, s);
    if (disparities[s].height() != hs || disparities[s].width() != ws || hs < 2 || ws < 2) {
      throw std::domain_error("total_loss: disparity at scale " + std::to_string(s) + " must be " +
                              std::to_string(hs) + "x" + std::to_string(ws) + " (and at least 2x2)");
    }
  }

  const std::size_t nf = context.size();
  const ScalarMap pe_identity = photometric(target, context.back(), cfg);

  LossBreakdown out;
  if (grad) {
    grad->d_disparity.clear();
    grad->d_pose.assign(nf, PoseParams{});
  }

  for (int s = 0; s < cfg.scales; ++s) {
    const ScalarMap& sigma_s = disparities[s];
    const ScalarMap sigma = resize_bilinear(sigma_s, h, w);
    const ScalarMap depth = disparity_to_depth(sigma, cfg.range);

    std::vector<WarpResult> recon;
    std::vector<ScalarMap> pe;
    recon.reserve(nf);
    pe.reserve(nf);
    for (std::size_t i = 0; i < nf; ++i) {
      recon.push_back(reverse_warp(context[i], depth, pose_from_params(poses[i]), K));
      pe.push_back(photometric(target, recon.back(), cfg));
    }

    // Aggregate over frames that see the pixel; weight[i] is d pe / d pe_i.
    ScalarMap agg(h, w);
    std::vector<ScalarMap> weight(nf, ScalarMap(h, w));
    for (int r = 0; r < h; ++r) {
      for (int c = 0; c < w; ++c) {
        if (cfg.min_reprojection) {
          int best = -1;
          for (std::size_t i = 0; i < nf; ++i) {
            if (recon[i].valid_mask(r, c) == 0.0) continue;
            if (best < 0 || pe[i](r, c) < pe[best](r, c)) best = static_cast<int>(i);
          }
          if (best >= 0) {
            agg(r, c) = pe[best](r, c);
            weight[best](r, c) = 1.0;
          }
        } else {
          double count = 0.0, sum = 0.0;
          for (std::size_t i = 0; i < nf; ++i) {
            if (recon[i].valid_mask(r, c) == 0.0) continue;
            count += 1.0;
            sum += pe[i](r, c);
          }
          if (count > 0.0) {
            agg(r, c) = sum / count;
            for (std::size_t i = 0; i < nf; ++i) {
              if (recon[i].valid_mask(r, c) != 0.0) weight[i](r, c) = 1.0 / count;
            }
          }
        }
      }
    }

    const ScalarMap mu = cfg.automask_enabled ? auto_mask(agg, pe_identity) : ScalarMap(h, w, 1.0);
    double photo = 0.0;
    double kept = 0.0;
    for (std::size_t i = 0; i < agg.size(); ++i) {
      photo += mu.data()[i] * agg.data()[i];
      kept += mu.data()[i];
    }
    photo /= npix;

    const auto [hs, ws] = scale_shape(h, w, s);
    const ImageBuffer target_s = resize_bilinear(target, hs, ws);
    const double smooth = smoothness(sigma_s, target_s);

    out.photometric += photo;
    out.smoothness += smooth;
    out.per_scale.push_back({photo, smooth, kept / npix});
    if (s == 0) {
      out.per_pixel_pe = agg;
      out.mask = mu;
    }

    if (!grad) continue;

    ScalarMap d_depth(h, w);
    for (std::size_t i = 0; i < nf; ++i) {
      ScalarMap g_pe(h, w);
      for (std::size_t k = 0; k < g_pe.size(); ++k) g_pe.data()[k] = mu.data()[k] * weight[i].data()[k] / npix;
      const std::vector<double> g_recon = photometric_backward(target, recon[i], cfg, g_pe);
      const WarpGradients wg = warp_backward(context[i], depth, poses[i], K, g_recon);
      for (std::size_t k = 0; k < d_depth.size(); ++k) d_depth.data()[k] += wg.d_depth.data()[k];
      for (int k = 0; k < 6; ++k) grad->d_pose[i][k] += wg.d_pose[k];
    }
    ScalarMap d_sigma(h, w);
    for (std::size_t k = 0; k < d_sigma.size(); ++k) {
      d_sigma.data()[k] = d_depth.data()[k] * cfg.range.depth_derivative(sigma.data()[k]);
    }
    ScalarMap d_sigma_s = resize_bilinear_adjoint(d_sigma, hs, ws);
    const ScalarMap d_smooth = smoothness_backward(sigma_s, target_s, cfg.alpha_d);
    for (std::size_t k = 0; k < d_sigma_s.size(); ++k) d_sigma_s.data()[k] += d_smooth.data()[k];
    grad->d_disparity.push_back(std::move(d_sigma_s));
  }

  out.total = out.photometric + cfg.alpha_d * out.smoothness;
  return out;
}

}  // namespace depthcast
