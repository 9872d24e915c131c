#include "depthcast/image_io.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>
#include <vector>

namespace depthcast::io {

namespace {

std::vector<unsigned char> slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void dump(const std::filesystem::path& path, const std::string& header, const void* data, std::size_t bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  out.write(static_cast<const char*>(data), static_cast<std::streamsize>(bytes));
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

// Minimal tokenizer for the ASCII header of PPM/PFM files.
class HeaderReader {
 public:
  HeaderReader(const std::vector<unsigned char>& buf, const std::filesystem::path& path) : buf_(buf), path_(path) {}

  std::string token() {
    skip_space_and_comments();
    const std::size_t start = pos_;
    while (pos_ < buf_.size() && !std::isspace(buf_[pos_])) ++pos_;
    if (start == pos_) fail("unexpected end of header");
    return std::string(buf_.begin() + static_cast<std::ptrdiff_t>(start), buf_.begin() + static_cast<std::ptrdiff_t>(pos_));
  }

  long integer() {
    skip_space_and_comments();
    const std::size_t at = pos_;
    const std::string t = token();
    char* end = nullptr;
    const long v = std::strtol(t.c_str(), &end, 10);
    if (*end != '\0') fail("expected an integer", at);
    return v;
  }

  double real() {
    skip_space_and_comments();
    const std::size_t at = pos_;
    const std::string t = token();
    char* end = nullptr;
    const double v = std::strtod(t.c_str(), &end);
    if (*end != '\0') fail("expected a number", at);
    return v;
  }

  // Exactly one whitespace byte separates the header from the raster.
  std::size_t raster_start() {
    if (pos_ >= buf_.size() || !std::isspace(buf_[pos_])) fail("missing separator before raster");
    return pos_ + 1;
  }

  [[noreturn]] void fail(const std::string& what, std::size_t at = std::string::npos) const {
    std::ostringstream os;
    os << path_.string() << ": " << what << " at byte offset " << (at == std::string::npos ? pos_ : at);
    throw ParseError(os.str());
  }

 private:
  void skip_space_and_comments() {
    while (pos_ < buf_.size()) {
      if (std::isspace(buf_[pos_])) {
        ++pos_;
      } else if (buf_[pos_] == '#') {
        while (pos_ < buf_.size() && buf_[pos_] != '\n') ++pos_;
      } else {
        break;
      }
    }
  }

  const std::vector<unsigned char>& buf_;
  const std::filesystem::path& path_;
  std::size_t pos_ = 0;
};

float load_float_le(const unsigned char* p) {
  std::uint32_t bits = static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
                       (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
  return std::bit_cast<float>(bits);
}

void store_float_le(unsigned char* p, float f) {
  const auto bits = std::bit_cast<std::uint32_t>(f);
  p[0] = static_cast<unsigned char>(bits & 0xFF);
  p[1] = static_cast<unsigned char>((bits >> 8) & 0xFF);
  p[2] = static_cast<unsigned char>((bits >> 16) & 0xFF);
  p[3] = static_cast<unsigned char>((bits >> 24) & 0xFF);
}

void write_pfm_raw(const std::filesystem::path& path, int h, int w, int channels, std::span<const double> data) {
  std::ostringstream header;
  header << (channels == 3 ? "PF" : "Pf") << "\n" << w << " " << h << "\n-1.0\n";
  std::vector<unsigned char> raster(static_cast<std::size_t>(h) * w * channels * 4);
  std::size_t o = 0;
  for (int r = h - 1; r >= 0; --r) {
    for (int c = 0; c < w; ++c) {
      for (int ch = 0; ch < channels; ++ch) {
        store_float_le(&raster[o], static_cast<float>(data[(static_cast<std::size_t>(r) * w + c) * channels + ch]));
        o += 4;
      }
    }
  }
  dump(path, header.str(), raster.data(), raster.size());
}

struct PfmRaw {
  int h = 0;
  int w = 0;
  int channels = 0;
  std::vector<double> data;
};

PfmRaw read_pfm_raw(const std::filesystem::path& path) {
  const auto buf = slurp(path);
  HeaderReader hr(buf, path);
  const std::string magic = hr.token();
  PfmRaw out;
  if (magic == "Pf") {
    out.channels = 1;
  } else if (magic == "PF") {
    out.channels = 3;
  } else {
    hr.fail("bad PFM magic '" + magic + "'", 0);
  }
  out.w = static_cast<int>(hr.integer());
  out.h = static_cast<int>(hr.integer());
  if (out.w <= 0 || out.h <= 0) hr.fail("non-positive PFM dimensions");
  const double scale = hr.real();
  if (scale >= 0.0) hr.fail("big-endian PFM files are not supported");
  const std::size_t start = hr.raster_start();
  const std::size_t n = static_cast<std::size_t>(out.h) * out.w * out.channels;
  if (buf.size() < start + n * 4) hr.fail("truncated raster (expected " + std::to_string(n * 4) + " bytes)", start);
  out.data.resize(n);
  std::size_t o = start;
  for (int r = out.h - 1; r >= 0; --r) {
    for (int c = 0; c < out.w; ++c) {
      for (int ch = 0; ch < out.channels; ++ch) {
        const float f = load_float_le(&buf[o]);
        if (!std::isfinite(f)) hr.fail("non-finite value in raster", o);
        out.data[(static_cast<std::size_t>(r) * out.w + c) * out.channels + ch] = f;
        o += 4;
      }
    }
  }
  return out;
}

}  // namespace

void write_ppm(const std::filesystem::path& path, const ImageBuffer& img) {
  std::ostringstream header;
  header << "P6\n" << img.width() << " " << img.height() << "\n255\n";
  std::vector<unsigned char> raster(static_cast<std::size_t>(img.height()) * img.width() * 3);
  std::size_t o = 0;
  for (int r = 0; r < img.height(); ++r) {
    for (int c = 0; c < img.width(); ++c) {
      for (int ch = 0; ch < 3; ++ch) {
        const double v = img(r, c, img.channels() == 3 ? ch : 0);
        raster[o++] = static_cast<unsigned char>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
      }
    }
  }
  dump(path, header.str(), raster.data(), raster.size());
}

ImageBuffer read_ppm(const std::filesystem::path& path) {
  const auto buf = slurp(path);
  HeaderReader hr(buf, path);
  if (hr.token() != "P6") hr.fail("bad PPM magic (only binary P6 is supported)", 0);
  const long w = hr.integer();
  const long h = hr.integer();
  const long maxval = hr.integer();
  if (w < 2 || h < 2) hr.fail("PPM dimensions must be at least 2x2");
  if (maxval != 255) hr.fail("only 8-bit PPM (maxval 255) is supported");
  const std::size_t start = hr.raster_start();
  const std::size_t n = static_cast<std::size_t>(w) * h * 3;
  if (buf.size() < start + n) hr.fail("truncated raster (expected " + std::to_string(n) + " bytes)", start);
  std::vector<double> data(n);
  for (std::size_t i = 0; i < n; ++i) data[i] = buf[start + i] / 255.0;
  return ImageBuffer(static_cast<int>(h), static_cast<int>(w), 3, std::move(data));
}

void write_pfm(const std::filesystem::path& path, const ScalarMap& map) {
  write_pfm_raw(path, map.height(), map.width(), 1, map.data());
}

void write_pfm(const std::filesystem::path& path, const ImageBuffer& img) {
  write_pfm_raw(path, img.height(), img.width(), img.channels(), img.data());
}

ScalarMap read_pfm(const std::filesystem::path& path) {
  PfmRaw raw = read_pfm_raw(path);
  if (raw.channels != 1) throw ParseError(path.string() + ": expected a single-channel (Pf) map at byte offset 0");
  return ScalarMap(raw.h, raw.w, std::move(raw.data));
}

ImageBuffer read_pfm_image(const std::filesystem::path& path) {
  PfmRaw raw = read_pfm_raw(path);
  return ImageBuffer(raw.h, raw.w, raw.channels, std::move(raw.data));
}

}  // namespace depthcast::io
