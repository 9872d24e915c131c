#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

namespace depthcast::io {

struct NamedTensor {
  std::string name;
  std::vector<int> shape;
  std::vector<double> values;
};

/// Layout: u64 little-endian header length N, then N bytes of JSON
///   {"meta": {...}, "tensors": [{"name", "shape", "offset"}, ...]}
/// where offset counts fp64 elements, then all values as little-endian fp64.
void write_checkpoint(const std::filesystem::path& path, const std::vector<NamedTensor>& tensors,
                      const nlohmann::json& meta);

struct Checkpoint {
  std::vector<NamedTensor> tensors;
  nlohmann::json meta;
};

Checkpoint read_checkpoint(const std::filesystem::path& path);

}  // namespace depthcast::io
