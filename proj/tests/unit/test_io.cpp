#include <cstring>
#include <filesystem>

#include "doctest.h"
#include "icgmvs/io.hpp"

using namespace icgmvs;

namespace {

std::string be_float(float f) {
  unsigned char b[4];
  std::memcpy(b, &f, 4);
  return std::string{static_cast<char>(b[3]), static_cast<char>(b[2]), static_cast<char>(b[1]), static_cast<char>(b[0])};
}

}  // namespace

TEST_CASE("view names are zero-padded to eight digits") {
  CHECK(view_name(3) == "00000003");
  CHECK(view_name(12345678) == "12345678");
}

TEST_CASE("PFM round trip is exact for float values") {
  Tensor d(Shape{2, 3}, std::vector<double>{0.5, 1.25, 2.0, 3.5, 0.0, 7.75});
  Tensor r = decode_pfm(encode_pfm(d));
  CHECK(r.shape() == d.shape());
  for (std::size_t i = 0; i < 6; ++i) CHECK(r[i] == d[i]);
  CHECK(encode_pfm(d).rfind("Pf\n3 2\n-1", 0) == 0);
}

TEST_CASE("big-endian PFM fixture with rows stored bottom-up") {
  std::string bytes = "Pf\n2 2\n1.0\n";
  for (float f : {3.0F, 4.0F, 1.0F, 2.0F}) bytes += be_float(f);
  Tensor t = decode_pfm(bytes);
  CHECK(t[0] == 1.0);
  CHECK(t[1] == 2.0);
  CHECK(t[2] == 3.0);
  CHECK(t[3] == 4.0);
}

TEST_CASE("PFM rejects colour, bad magic and truncation") {
  CHECK_THROWS_AS(decode_pfm("PF\n1 1\n-1\n" + std::string(12, '\0')), ParseError);
  CHECK_THROWS_AS(decode_pfm("P6\n1 1\n-1\n"), ParseError);
  try {
    decode_pfm("Pf\n2 2\n-1\n" + std::string(8, '\0'));
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.offset() > 0);
  }
}

TEST_CASE("PPM round trip quantises to 256 levels") {
  Tensor img({3, 2, 2});
  for (std::size_t i = 0; i < 12; ++i) img.mutable_data()[i] = static_cast<double>(i) / 11.0;
  Tensor r = decode_ppm(encode_ppm(img));
  CHECK(r.shape() == img.shape());
  for (std::size_t i = 0; i < 12; ++i) CHECK(std::abs(r[i] - img[i]) <= 0.5 / 255.0 + 1e-12);
  CHECK_THROWS_AS(decode_ppm("P3\n1 1\n255\n"), ParseError);
  CHECK_THROWS_AS(decode_ppm("P6\n2 2\n255\n\x01"), ParseError);
}

TEST_CASE("PLY ascii and binary round trips") {
  PointCloud pc;
  pc.points = {{0.5, -1.0, 2.25}, {3.0, 4.0, 5.0}};
  pc.colors = {{{1.0, 0.0, 0.0}}, {{0.0, 1.0, 1.0}}};
  pc.view = {0, 0};
  pc.pixel = {0, 1};
  for (bool binary : {false, true}) {
    PointCloud r = decode_ply(encode_ply(pc, binary));
    REQUIRE(r.size() == 2);
    for (std::size_t i = 0; i < 2; ++i) {
      CHECK(r.points[i].isApprox(pc.points[i]));
      for (int c = 0; c < 3; ++c) CHECK(r.colors[i][c] == pc.colors[i][c]);
    }
  }
}

TEST_CASE("single white point PLY fixture") {
  const std::string text =
      "ply\nformat ascii 1.0\nelement vertex 1\nproperty float x\nproperty float y\nproperty float z\n"
      "property uchar red\nproperty uchar green\nproperty uchar blue\nend_header\n1 2 3 255 255 255\n";
  PointCloud r = decode_ply(text);
  REQUIRE(r.size() == 1);
  CHECK(r.points[0] == Eigen::Vector3d(1, 2, 3));
  CHECK(r.colors[0][0] == 1.0);
  CHECK(r.colors[0][2] == 1.0);
  CHECK_THROWS_AS(decode_ply("plx\n"), ParseError);
  CHECK_THROWS_AS(decode_ply("ply\nformat ascii 1.0\nelement face 1\nend_header\n"), ParseError);
}

TEST_CASE("camera text round trip") {
  Camera c;
  c.K << 100.5, 0, 31.5, 0, 101.25, 23.5, 0, 0, 1;
  c.R = Eigen::AngleAxisd(0.3, Eigen::Vector3d(1, 2, 3).normalized()).toRotationMatrix();
  c.t = Eigen::Vector3d(0.1, -0.2, 3.3);
  c.dmin = 1.5;
  c.dmax = 9.25;
  Camera r = decode_camera(encode_camera(c));
  CHECK(r.K.isApprox(c.K, 1e-15));
  CHECK(r.R.isApprox(c.R, 1e-15));
  CHECK(r.t.isApprox(c.t, 1e-15));
  CHECK(r.dmin == c.dmin);
  CHECK(r.dmax == c.dmax);
  CHECK_THROWS_AS(decode_camera("extrinsic\n1 0 0\n"), ParseError);
}

TEST_CASE("pair file round trip") {
  std::vector<PairEntry> p{{0, {{1, 0.9}, {2, 0.5}}}, {1, {{0, 0.9}}}, {2, {}}};
  auto r = decode_pair_file(encode_pair_file(p));
  REQUIRE(r.size() == 3);
  CHECK(r[0].ref == 0);
  CHECK(r[0].sources == p[0].sources);
  CHECK(r[1].sources == p[1].sources);
  CHECK(r[2].sources.empty());
  CHECK_THROWS_AS(decode_pair_file("2\n0\n1 1 0.5\n"), ParseError);
}

TEST_CASE("parse errors report byte offsets") {
  try {
    decode_pair_file("1\n0\nx\n");
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.offset() == 4);
  }
}

TEST_CASE("missing files raise IoError") {
  CHECK_THROWS_AS(read_file("/nonexistent/icgmvs/file"), IoError);
  CHECK_THROWS_AS(list_scenes("/nonexistent/icgmvs"), std::exception);
}

TEST_CASE("file helpers round trip") {
  const auto path = (std::filesystem::temp_directory_path() / "icgmvs_io_test.pfm").string();
  Tensor d(Shape{1, 2}, std::vector<double>{1.0, 2.0});
  write_pfm(path, d);
  CHECK(read_pfm(path)[1] == 2.0);
  std::filesystem::remove(path);
}
