#include "depthcast/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <fstream>
#include <iterator>
#include <numeric>
#include <stdexcept>

namespace depthcast::io {

namespace {

void put_u64(std::vector<unsigned char>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xFF));
}

std::uint64_t get_u64(const unsigned char* p) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return v;
}

std::size_t element_count(const std::vector<int>& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         [](std::size_t a, int b) { return a * static_cast<std::size_t>(b); });
}

}  // namespace

void write_checkpoint(const std::filesystem::path& path, const std::vector<NamedTensor>& tensors,
                      const nlohmann::json& meta) {
  nlohmann::json header;
  header["meta"] = meta;
  header["tensors"] = nlohmann::json::array();
  std::size_t offset = 0;
  for (const auto& t : tensors) {
    if (element_count(t.shape) != t.values.size()) {
      throw std::invalid_argument("checkpoint tensor '" + t.name + "' has inconsistent shape");
    }
    header["tensors"].push_back({{"name", t.name}, {"shape", t.shape}, {"offset", offset}});
    offset += t.values.size();
  }
  const std::string text = header.dump();
  std::vector<unsigned char> bytes;
  bytes.reserve(8 + text.size() + offset * 8);
  put_u64(bytes, text.size());
  bytes.insert(bytes.end(), text.begin(), text.end());
  for (const auto& t : tensors) {
    for (double v : t.values) put_u64(bytes, std::bit_cast<std::uint64_t>(v));
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  const std::vector<unsigned char> buf{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  if (buf.size() < 8) throw std::runtime_error(path.string() + ": truncated checkpoint header at byte offset 0");
  const std::uint64_t n = get_u64(buf.data());
  if (buf.size() < 8 + n) throw std::runtime_error(path.string() + ": truncated JSON header at byte offset 8");
  const auto header = nlohmann::json::parse(buf.begin() + 8, buf.begin() + 8 + static_cast<std::ptrdiff_t>(n));
  const std::size_t data_start = 8 + n;

  Checkpoint ck;
  ck.meta = header.value("meta", nlohmann::json::object());
  for (const auto& entry : header.at("tensors")) {
    NamedTensor t;
    t.name = entry.at("name").get<std::string>();
    t.shape = entry.at("shape").get<std::vector<int>>();
    const std::size_t offset = entry.at("offset").get<std::size_t>();
    const std::size_t count = element_count(t.shape);
    const std::size_t begin = data_start + offset * 8;
    if (buf.size() < begin + count * 8) {
      throw std::runtime_error(path.string() + ": tensor '" + t.name + "' runs past end of file at byte offset " +
                               std::to_string(begin));
    }
    t.values.resize(count);
    for (std::size_t i = 0; i < count; ++i) t.values[i] = std::bit_cast<double>(get_u64(&buf[begin + i * 8]));
    ck.tensors.push_back(std::move(t));
  }
  return ck;
}

}  // namespace depthcast::io
