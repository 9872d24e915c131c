#pragma once

#include <array>
#include <span>
#include <utility>
#include <vector>

#include "depthcast/geometry.hpp"

namespace depthcast {

/// Row-major H x W map of finite doubles (depth, disparity, masks, losses).
class ScalarMap {
 public:
  ScalarMap() = default;
  ScalarMap(int height, int width, double fill = 0.0);
  /// Throws std::invalid_argument on size mismatch or non-finite values.
  ScalarMap(int height, int width, std::vector<double> data);

  int height() const { return height_; }
  int width() const { return width_; }
  std::size_t size() const { return data_.size(); }

  double& operator()(int r, int c) { return data_[static_cast<std::size_t>(r) * width_ + c]; }
  double operator()(int r, int c) const { return data_[static_cast<std::size_t>(r) * width_ + c]; }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }

  bool same_shape(const ScalarMap& o) const { return height_ == o.height_ && width_ == o.width_; }
  double mean() const;
  double min() const;
  double max() const;

  friend bool operator==(const ScalarMap&, const ScalarMap&) = default;

 private:
  int height_ = 0;
  int width_ = 0;
  std::vector<double> data_;
};

/// H x W x C image, channels interleaved, intensities in [0, 1].
class ImageBuffer {
 public:
  ImageBuffer() = default;
  ImageBuffer(int height, int width, int channels, double fill = 0.0);
  /// Validates shape (H, W >= 2; C in {1, 3}) and that every value is in [0, 1].
  ImageBuffer(int height, int width, int channels, std::vector<double> data);

  int height() const { return height_; }
  int width() const { return width_; }
  int channels() const { return channels_; }

  double& operator()(int r, int c, int ch) { return data_[index(r, c, ch)]; }
  double operator()(int r, int c, int ch) const { return data_[index(r, c, ch)]; }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }

  bool same_shape(const ImageBuffer& o) const {
    return height_ == o.height_ && width_ == o.width_ && channels_ == o.channels_;
  }
  /// Throws std::invalid_argument if any value is outside [0, 1] or non-finite.
  void validate() const;

  ScalarMap channel(int ch) const;
  ScalarMap channel_mean() const;

  friend bool operator==(const ImageBuffer&, const ImageBuffer&) = default;

 private:
  std::size_t index(int r, int c, int ch) const {
    return (static_cast<std::size_t>(r) * width_ + c) * channels_ + ch;
  }

  int height_ = 0;
  int width_ = 0;
  int channels_ = 0;
  std::vector<double> data_;
};

/// Read-only planar view used by the sampler so that both images and scalar
/// maps can be sampled.
struct GridView {
  int height = 0;
  int width = 0;
  int channels = 1;
  std::span<const double> data;

  GridView(const ImageBuffer& img)
      : height(img.height()), width(img.width()), channels(img.channels()), data(img.data()) {}
  GridView(const ScalarMap& m) : height(m.height()), width(m.width()), channels(1), data(m.data()) {}

  double at(int r, int c, int ch) const {
    return data[(static_cast<std::size_t>(r) * width + c) * channels + ch];
  }
};

inline constexpr int kMaxChannels = 3;

struct SampleResult {
  std::array<double, kMaxChannels> value{};
  /// d value / d(u, v) per channel.
  std::array<std::array<double, 2>, kMaxChannels> d_value_d_uv{};
  bool valid = false;
};

/// Bilinear interpolation of the four neighbours of p. Valid iff p lies in
/// [0, w-1] x [0, h-1]; invalid samples have zero value and gradient.
SampleResult bilinear_sample(const GridView& img, const Pixel& p);

/// Forward differences of the channel-mean intensity; the last column (for
/// dx) and last row (for dy) are zero.
std::pair<ScalarMap, ScalarMap> image_gradients(const ImageBuffer& img);
std::pair<ScalarMap, ScalarMap> image_gradients(const ScalarMap& img);

/// Corner-aligned bilinear resize. Throws std::domain_error for sizes < 2.
ImageBuffer resize_bilinear(const ImageBuffer& img, int new_h, int new_w);
ScalarMap resize_bilinear(const ScalarMap& m, int new_h, int new_w);

/// Adjoint of resize_bilinear on scalar maps: maps a gradient on the resized
/// grid back onto the (h, w) source grid.
ScalarMap resize_bilinear_adjoint(const ScalarMap& grad_out, int h, int w);

/// Elementwise D = 1 / (a sigma + b); throws std::domain_error unless every
/// sigma is in (0, 1).
ScalarMap disparity_to_depth(const ScalarMap& sigma, const DepthRange& range = {});

}  // namespace depthcast
