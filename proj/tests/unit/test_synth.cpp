#include <cmath>
#include <filesystem>

#include "doctest.h"
#include "icgmvs/synth.hpp"

using namespace icgmvs;

TEST_CASE("sphere intersection matches the closed form") {
  Primitive s = Primitive::sphere({0, 0, 5}, 1.0, Texture{});
  Hit h = intersect(s, Eigen::Vector3d::Zero(), Eigen::Vector3d(0, 0, 1));
  CHECK(h.t == doctest::Approx(4.0));
  CHECK(h.normal.isApprox(Eigen::Vector3d(0, 0, -1)));
  Hit inside = intersect(s, Eigen::Vector3d(0, 0, 5), Eigen::Vector3d(1, 0, 0));
  CHECK(inside.t == doctest::Approx(1.0));
  Hit miss = intersect(s, Eigen::Vector3d::Zero(), Eigen::Vector3d(0, 1, 0));
  CHECK(std::isinf(miss.t));
  CHECK_THROWS_AS(Primitive::sphere({0, 0, 0}, 0.0, Texture{}), ParameterError);
}

TEST_CASE("rendered depth of a fronto-parallel plane is constant") {
  Scene sc;
  sc.primitives.push_back(Primitive::rectangle({0, 0, 3}, Eigen::Vector3d::UnitX(), Eigen::Vector3d::UnitY(), 1e3, 1e3,
                                               Texture{}));
  Camera c;
  c.K = default_intrinsics(16, 24);
  Render r = render(sc, c, 16, 24);
  for (double d : r.depth.data()) CHECK(d == doctest::Approx(3.0).epsilon(1e-12));
  for (unsigned char v : r.valid) CHECK(v == 1);
  CHECK_THROWS_AS(render(sc, c, 10, 24), ParameterError);
}

TEST_CASE("rendered depth agrees with the closed-form sphere") {
  Scene sc;
  sc.primitives.push_back(Primitive::sphere({0, 0, 6}, 2.0, Texture{}));
  Camera c;
  c.K = default_intrinsics(32, 32);
  Render r = render(sc, c, 32, 32);
  std::size_t hits = 0;
  for (std::size_t y = 0; y < 32; ++y)
    for (std::size_t x = 0; x < 32; ++x) {
      const double d = r.depth.data()[y * 32 + x];
      if (d <= 0.0) continue;
      ++hits;
      const Eigen::Vector3d p = c.unproject(static_cast<double>(x), static_cast<double>(y), d);
      CHECK((p - Eigen::Vector3d(0, 0, 6)).norm() == doctest::Approx(2.0).epsilon(1e-9));
    }
  CHECK(hits > 0);
}

TEST_CASE("surface colours agree across views") {
  DatasetSpec spec;
  spec.num_scenes = 1;
  spec.views_per_scene = 3;
  spec.height = 32;
  spec.width = 40;
  SyntheticScene s = make_scene(spec, 0);
  const auto& a = s.views[0];
  const auto& b = s.views[1];
  const std::size_t H = 32, W = 40, HW = H * W;
  std::size_t agree = 0, total = 0;
  for (std::size_t y = 0; y < H; ++y)
    for (std::size_t x = 0; x < W; ++x) {
      const double d = a.depth.data()[y * W + x];
      if (d <= 0.0) continue;
      const Eigen::Vector3d p = b.cam.project(a.cam.unproject(static_cast<double>(x), static_cast<double>(y), d));
      const long u = std::lround(p.x()), v = std::lround(p.y());
      if (std::abs(p.x() - static_cast<double>(u)) > 0.02 || std::abs(p.y() - static_cast<double>(v)) > 0.02) continue;
      if (u < 0 || v < 0 || u >= static_cast<long>(W) || v >= static_cast<long>(H)) continue;
      const std::size_t j = static_cast<std::size_t>(v) * W + static_cast<std::size_t>(u);
      if (std::abs(b.depth.data()[j] - p.z()) > 1e-6 * p.z()) continue;  // occluded
      ++total;
      bool same = true;
      for (std::size_t c = 0; c < 3; ++c)
        same = same && std::abs(a.image.data()[c * HW + y * W + x] - b.image.data()[c * HW + j]) < 0.1;
      agree += same;
    }
  if (total > 0) CHECK(static_cast<double>(agree) >= 0.9 * static_cast<double>(total));
}

TEST_CASE("scenes are deterministic in the seed") {
  DatasetSpec spec;
  spec.num_scenes = 2;
  spec.views_per_scene = 3;
  spec.height = 16;
  spec.width = 16;
  SyntheticScene a = make_scene(spec, 1), b = make_scene(spec, 1);
  CHECK(a.name == "scene_001");
  for (std::size_t v = 0; v < 3; ++v) {
    CHECK(std::equal(a.views[v].image.data().begin(), a.views[v].image.data().end(), b.views[v].image.data().begin()));
    CHECK(a.views[v].cam == b.views[v].cam);
  }
  spec.seed = 2;
  SyntheticScene c = make_scene(spec, 1);
  CHECK_FALSE(std::equal(a.views[0].image.data().begin(), a.views[0].image.data().end(),
                         c.views[0].image.data().begin()));
}

TEST_CASE("depth ranges bracket GT and pairs are ranked") {
  DatasetSpec spec;
  spec.num_scenes = 1;
  spec.views_per_scene = 4;
  spec.height = 24;
  spec.width = 32;
  SyntheticScene s = make_scene(spec, 0);
  for (std::size_t v = 0; v < 4; ++v) {
    for (double d : s.views[v].depth.data())
      if (d > 0.0) {
        CHECK(d >= s.views[v].cam.dmin);
        CHECK(d <= s.views[v].cam.dmax);
      }
    CHECK(s.pairs[v].size() == 3);
    for (std::size_t k = 1; k < s.pairs[v].size(); ++k) CHECK(s.pairs[v][k].second <= s.pairs[v][k - 1].second);
    for (const auto& [src, score] : s.pairs[v]) CHECK(src != v);
  }
}

TEST_CASE("dataset writes the expected file tree") {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "icgmvs_synth_test";
  fs::remove_all(dir);
  DatasetSpec spec;
  spec.num_scenes = 2;
  spec.views_per_scene = 3;
  spec.height = 16;
  spec.width = 16;
  make_dataset(dir.string(), spec);
  std::size_t files = 0;
  for (const auto& e : fs::recursive_directory_iterator(dir)) files += e.is_regular_file();
  CHECK(files == 2 * (3 * 3 + 1));
  CHECK(fs::exists(dir / "scene_000" / "pair.txt"));
  CHECK(fs::exists(dir / "scene_001" / "images" / "00000002.ppm"));
  fs::remove_all(dir);
}
