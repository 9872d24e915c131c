#include <doctest.h>

#include <cstring>
#include <fstream>

#include "depthcast/checkpoint.hpp"
#include "depthcast/image_io.hpp"
#include "support.hpp"

using namespace depthcast;

namespace {

void write_bytes(const std::filesystem::path& p, const std::string& bytes) {
  std::ofstream out(p, std::ios::binary);
  out << bytes;
}

std::string message_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const std::exception& e) {
    return e.what();
  }
  return {};
}

}  // namespace

TEST_SUITE("image_io") {

TEST_CASE("PPM round-trips 8-bit values") {
  const auto dir = testing::scratch_dir("ppm");
  ImageBuffer img(3, 4, 3);
  int k = 0;
  for (double& v : img.data()) v = (k++ * 7 % 256) / 255.0;
  io::write_ppm(dir / "a.ppm", img);
  const ImageBuffer back = io::read_ppm(dir / "a.ppm");
  CHECK(testing::max_abs_diff(back, img) < 1e-15);

  const std::string raw = testing::slurp(dir / "a.ppm");
  CHECK(raw.rfind("P6\n4 3\n255\n", 0) == 0);
  CHECK(raw.size() == 11 + 36);
}

TEST_CASE("PFM round-trips single precision maps, bottom row first") {
  const auto dir = testing::scratch_dir("pfm");
  ScalarMap m(2, 3, {1.5, 2.0, -3.25, 10.0, 0.125, 7.0});
  io::write_pfm(dir / "m.pfm", m);
  CHECK(io::read_pfm(dir / "m.pfm") == m);

  const std::string raw = testing::slurp(dir / "m.pfm");
  const std::string header = "Pf\n3 2\n-1.0\n";
  REQUIRE(raw.rfind(header, 0) == 0);
  float first = 0.0f;
  std::memcpy(&first, raw.data() + header.size(), 4);
  CHECK(first == 10.0f);  // bottom row is stored first

  Rng rng(21);
  const ImageBuffer img = testing::random_image(rng, 4, 5, 3);
  io::write_pfm(dir / "c.pfm", img);
  CHECK(testing::max_abs_diff(io::read_pfm_image(dir / "c.pfm"), img) < 1e-7);
  CHECK_THROWS_AS(io::read_pfm(dir / "c.pfm"), io::ParseError);
}

TEST_CASE("parse errors name the file and byte offset") {
  const auto dir = testing::scratch_dir("bad_io");
  write_bytes(dir / "magic.pfm", "PX\n3 2\n-1\n");
  CHECK(message_of([&] { io::read_pfm(dir / "magic.pfm"); }).find("magic.pfm: bad PFM magic") != std::string::npos);

  write_bytes(dir / "short.pfm", "Pf\n3 2\n-1\n" + std::string(8, '\0'));
  const std::string msg = message_of([&] { io::read_pfm(dir / "short.pfm"); });
  CHECK(msg.find("truncated raster") != std::string::npos);
  CHECK(msg.find("byte offset 10") != std::string::npos);

  write_bytes(dir / "dims.ppm", "P6\n4 x\n255\n");
  CHECK(message_of([&] { io::read_ppm(dir / "dims.ppm"); }).find("byte offset 5") != std::string::npos);

  write_bytes(dir / "ascii.ppm", "P3\n2 2\n255\n0 0 0");
  CHECK_THROWS_AS(io::read_ppm(dir / "ascii.ppm"), io::ParseError);
  CHECK_THROWS_AS(io::read_ppm(dir / "missing.ppm"), std::runtime_error);
}

TEST_CASE("checkpoint round-trip") {
  const auto dir = testing::scratch_dir("ckpt");
  const std::vector<io::NamedTensor> tensors{{"a", {2, 3}, {1, 2, 3, 4, 5, 6}}, {"b.c", {1}, {-0.1}}};
  io::write_checkpoint(dir / "x.ckpt", tensors, {{"note", "test"}});
  const io::Checkpoint back = io::read_checkpoint(dir / "x.ckpt");
  REQUIRE(back.tensors.size() == 2);
  CHECK(back.tensors[0].name == "a");
  CHECK(back.tensors[0].shape == std::vector<int>{2, 3});
  CHECK(back.tensors[0].values == tensors[0].values);
  CHECK(back.tensors[1].values == tensors[1].values);
  CHECK(back.meta["note"] == "test");

  CHECK_THROWS_AS(io::write_checkpoint(dir / "y.ckpt", {{"bad", {2, 2}, {1, 2, 3}}}, {}), std::invalid_argument);
  write_bytes(dir / "trunc.ckpt", "\x05");
  CHECK_THROWS_AS(io::read_checkpoint(dir / "trunc.ckpt"), std::runtime_error);
}

}  // TEST_SUITE
