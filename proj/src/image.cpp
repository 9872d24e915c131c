#include "depthcast/image.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace depthcast {

namespace {

void check_dims(int h, int w, int min_dim) {
  if (h < min_dim || w < min_dim) {
    throw std::invalid_argument("map dimensions must be at least " + std::to_string(min_dim) + ", got " +
                                std::to_string(h) + "x" + std::to_string(w));
  }
}

struct Taps {
  int i0 = 0;
  double f = 0.0;
};

// Corner-aligned source coordinate for output index i.
Taps resize_tap(int i, int n_out, int n_in) {
  const double x = static_cast<double>(i) * static_cast<double>(n_in - 1) / static_cast<double>(n_out - 1);
  int i0 = static_cast<int>(std::floor(x));
  if (i0 >= n_in - 1) i0 = n_in - 2;
  return {i0, x - i0};
}

}  // namespace

ScalarMap::ScalarMap(int height, int width, double fill)
    : height_(height), width_(width), data_(static_cast<std::size_t>(std::max(height, 0)) * std::max(width, 0), fill) {
  check_dims(height, width, 1);
}

ScalarMap::ScalarMap(int height, int width, std::vector<double> data)
    : height_(height), width_(width), data_(std::move(data)) {
  check_dims(height, width, 1);
  if (data_.size() != static_cast<std::size_t>(height) * width) {
    throw std::invalid_argument("scalar map data size does not match its shape");
  }
  for (double v : data_) {
    if (!std::isfinite(v)) throw std::invalid_argument("scalar map contains a non-finite value");
  }
}

double ScalarMap::mean() const {
  return std::accumulate(data_.begin(), data_.end(), 0.0) / static_cast<double>(data_.size());
}

double ScalarMap::min() const { return *std::min_element(data_.begin(), data_.end()); }
double ScalarMap::max() const { return *std::max_element(data_.begin(), data_.end()); }

ImageBuffer::ImageBuffer(int height, int width, int channels, double fill)
    : height_(height),
      width_(width),
      channels_(channels),
      data_(static_cast<std::size_t>(std::max(height, 0)) * std::max(width, 0) * std::max(channels, 0), fill) {
  check_dims(height, width, 2);
  if (channels != 1 && channels != 3) throw std::invalid_argument("images have 1 or 3 channels");
}

ImageBuffer::ImageBuffer(int height, int width, int channels, std::vector<double> data)
    : height_(height), width_(width), channels_(channels), data_(std::move(data)) {
  check_dims(height, width, 2);
  if (channels != 1 && channels != 3) throw std::invalid_argument("images have 1 or 3 channels");
  if (data_.size() != static_cast<std::size_t>(height) * width * channels) {
    throw std::invalid_argument("image data size does not match its shape");
  }
  validate();
}

void ImageBuffer::validate() const {
  for (std::size_t i = 0; i < data_.size(); ++i) {
    const double v = data_[i];
    if (!std::isfinite(v) || v < 0.0 || v > 1.0) {
      throw std::invalid_argument("image value out of [0, 1] at flat index " + std::to_string(i));
    }
  }
}

ScalarMap ImageBuffer::channel(int ch) const {
  ScalarMap out(height_, width_);
  for (int r = 0; r < height_; ++r)
    for (int c = 0; c < width_; ++c) out(r, c) = (*this)(r, c, ch);
  return out;
}

ScalarMap ImageBuffer::channel_mean() const {
  ScalarMap out(height_, width_);
  for (int r = 0; r < height_; ++r) {
    for (int c = 0; c < width_; ++c) {
      double s = 0.0;
      for (int ch = 0; ch < channels_; ++ch) s += (*this)(r, c, ch);
      out(r, c) = s / channels_;
    }
  }
  return out;
}

SampleResult bilinear_sample(const GridView& img, const Pixel& p) {
  SampleResult res;
  const double u = p.u;
  const double v = p.v;
  if (!(u >= 0.0 && v >= 0.0 && u <= img.width - 1 && v <= img.height - 1)) return res;

  int c0 = static_cast<int>(std::floor(u));
  int r0 = static_cast<int>(std::floor(v));
  if (c0 >= img.width - 1) c0 = img.width - 2;
  if (r0 >= img.height - 1) r0 = img.height - 2;
  const double fx = u - c0;
  const double fy = v - r0;

  res.valid = true;
  for (int ch = 0; ch < img.channels; ++ch) {
    const double i00 = img.at(r0, c0, ch);
    const double i01 = img.at(r0, c0 + 1, ch);
    const double i10 = img.at(r0 + 1, c0, ch);
    const double i11 = img.at(r0 + 1, c0 + 1, ch);
    res.value[ch] = (1.0 - fy) * ((1.0 - fx) * i00 + fx * i01) + fy * ((1.0 - fx) * i10 + fx * i11);
    res.d_value_d_uv[ch][0] = (1.0 - fy) * (i01 - i00) + fy * (i11 - i10);
    res.d_value_d_uv[ch][1] = (1.0 - fx) * (i10 - i00) + fx * (i11 - i01);
  }
  return res;
}

std::pair<ScalarMap, ScalarMap> image_gradients(const ScalarMap& g) {
  const int h = g.height();
  const int w = g.width();
  ScalarMap dx(h, w);
  ScalarMap dy(h, w);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      if (c + 1 < w) dx(r, c) = g(r, c + 1) - g(r, c);
      if (r + 1 < h) dy(r, c) = g(r + 1, c) - g(r, c);
    }
  }
  return {std::move(dx), std::move(dy)};
}

std::pair<ScalarMap, ScalarMap> image_gradients(const ImageBuffer& img) {
  return image_gradients(img.channel_mean());
}

namespace {

template <typename Sample>
void resize_into(int h, int w, int new_h, int new_w, int channels, Sample&& sample, std::span<double> out) {
  for (int r = 0; r < new_h; ++r) {
    const Taps tr = resize_tap(r, new_h, h);
    for (int c = 0; c < new_w; ++c) {
      const Taps tc = resize_tap(c, new_w, w);
      for (int ch = 0; ch < channels; ++ch) {
        const double i00 = sample(tr.i0, tc.i0, ch);
        const double i01 = sample(tr.i0, tc.i0 + 1, ch);
        const double i10 = sample(tr.i0 + 1, tc.i0, ch);
        const double i11 = sample(tr.i0 + 1, tc.i0 + 1, ch);
        out[(static_cast<std::size_t>(r) * new_w + c) * channels + ch] =
            (1.0 - tr.f) * ((1.0 - tc.f) * i00 + tc.f * i01) + tr.f * ((1.0 - tc.f) * i10 + tc.f * i11);
      }
    }
  }
}

void check_resize(int h, int w, int new_h, int new_w) {
  if (new_h < 2 || new_w < 2) throw std::domain_error("resize_bilinear: target size must be at least 2x2");
  if (h < 2 || w < 2) throw std::domain_error("resize_bilinear: source size must be at least 2x2");
}

}  // namespace

ImageBuffer resize_bilinear(const ImageBuffer& img, int new_h, int new_w) {
  check_resize(img.height(), img.width(), new_h, new_w);
  if (new_h == img.height() && new_w == img.width()) return img;
  ImageBuffer out(new_h, new_w, img.channels());
  resize_into(img.height(), img.width(), new_h, new_w, img.channels(),
              [&](int r, int c, int ch) { return img(r, c, ch); }, out.data());
  return out;
}

ScalarMap resize_bilinear(const ScalarMap& m, int new_h, int new_w) {
  check_resize(m.height(), m.width(), new_h, new_w);
  if (new_h == m.height() && new_w == m.width()) return m;
  ScalarMap out(new_h, new_w);
  resize_into(m.height(), m.width(), new_h, new_w, 1, [&](int r, int c, int) { return m(r, c); }, out.data());
  return out;
}

ScalarMap resize_bilinear_adjoint(const ScalarMap& grad_out, int h, int w) {
  check_resize(h, w, grad_out.height(), grad_out.width());
  if (grad_out.height() == h && grad_out.width() == w) return grad_out;
  ScalarMap g(h, w);
  // Scatter in row-major output order so the accumulation order is fixed.
  for (int r = 0; r < grad_out.height(); ++r) {
    const Taps tr = resize_tap(r, grad_out.height(), h);
    for (int c = 0; c < grad_out.width(); ++c) {
      const Taps tc = resize_tap(c, grad_out.width(), w);
      const double go = grad_out(r, c);
      g(tr.i0, tc.i0) += (1.0 - tr.f) * (1.0 - tc.f) * go;
      g(tr.i0, tc.i0 + 1) += (1.0 - tr.f) * tc.f * go;
      g(tr.i0 + 1, tc.i0) += tr.f * (1.0 - tc.f) * go;
      g(tr.i0 + 1, tc.i0 + 1) += tr.f * tc.f * go;
    }
  }
  return g;
}

ScalarMap disparity_to_depth(const ScalarMap& sigma, const DepthRange& range) {
  ScalarMap out(sigma.height(), sigma.width());
  auto src = sigma.data();
  auto dst = out.data();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = range.depth(src[i]);
  return out;
}

}  // namespace depthcast
