#pragma once

#include <filesystem>

#include "depthcast/image.hpp"

namespace depthcast::io {

/// Parse failures carry the file name and byte offset in the message.
struct ParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Binary P6, maxval 255. Values are quantized with round-to-nearest.
void write_ppm(const std::filesystem::path& path, const ImageBuffer& img);
ImageBuffer read_ppm(const std::filesystem::path& path);

/// Little-endian PFM ("Pf" grayscale, "PF" colour), rows stored bottom-up.
void write_pfm(const std::filesystem::path& path, const ScalarMap& map);
void write_pfm(const std::filesystem::path& path, const ImageBuffer& img);
ScalarMap read_pfm(const std::filesystem::path& path);
ImageBuffer read_pfm_image(const std::filesystem::path& path);

}  // namespace depthcast::io
