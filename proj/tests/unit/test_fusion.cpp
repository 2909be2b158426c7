#include <cmath>

#include "doctest.h"
#include "icgmvs/fusion.hpp"
#include "icgmvs/nn.hpp"
#include "icgmvs/synth.hpp"

using namespace icgmvs;

namespace {

std::vector<FusionView> plane_views(std::size_t n, double depth = 4.0) {
  Scene s;
  s.primitives.push_back(Primitive::rectangle({0, 0, depth}, Eigen::Vector3d::UnitX(), Eigen::Vector3d::UnitY(), 1e3,
                                              1e3, Texture{}));
  std::vector<FusionView> views;
  for (std::size_t i = 0; i < n; ++i) {
    Camera c;
    c.K = default_intrinsics(16, 16);
    c.t = Eigen::Vector3d(-0.1 * static_cast<double>(i), 0.0, 0.0);
    Render r = render(s, c, 16, 16);
    views.push_back({r.depth, Tensor({16, 16}, 1.0), r.image, c});
  }
  return views;
}

}  // namespace

TEST_CASE("a view checked against itself has exactly zero error") {
  auto v = plane_views(1);
  GeometricCheck g = geometric_check(v[0].cam, v[0].depth, v[0].cam, v[0].depth);
  for (std::size_t i = 0; i < g.ok.size(); ++i) {
    CHECK(g.ok[i] == 1);
    CHECK(g.err_c[i] == 0.0);
    CHECK(g.err_d[i] == 0.0);
  }
}

TEST_CASE("consistent GT views pass the check with tiny errors") {
  auto v = plane_views(2);
  GeometricCheck g = geometric_check(v[0].cam, v[0].depth, v[1].cam, v[1].depth);
  std::size_t ok = 0;
  for (std::size_t i = 0; i < g.ok.size(); ++i) {
    if (!g.ok[i]) continue;
    ++ok;
    CHECK(g.err_c[i] < 1e-9);
    CHECK(g.err_d[i] < 1e-12);
  }
  CHECK(ok > 0);
}

TEST_CASE("lookups touching missing source depth are rejected") {
  auto v = plane_views(2);
  Tensor holes = v[1].depth.clone();
  for (double& d : holes.mutable_data()) d = 0.0;
  GeometricCheck g = geometric_check(v[0].cam, v[0].depth, v[1].cam, holes);
  for (std::size_t i = 0; i < g.ok.size(); ++i) {
    CHECK(g.ok[i] == 0);
    CHECK(std::isinf(g.err_c[i]));
  }
}

TEST_CASE("photometric filter keeps confidence at or above the threshold") {
  Tensor c(Shape{1, 3}, std::vector<double>{0.49, 0.5, 0.9});
  CHECK(photometric_filter(c, 0.5) == std::vector<unsigned char>{0, 1, 1});
}

TEST_CASE("fusion of a consistent rig keeps points on the surface") {
  auto v = plane_views(3);
  FusionConfig cfg;
  cfg.min_consistent_views = 2;
  PointCloud pc = fuse(v, cfg);
  CHECK(pc.size() > 0);
  for (const auto& p : pc.points) CHECK(p.z() == doctest::Approx(4.0).epsilon(1e-9));
  for (std::size_t i = 1; i < pc.size(); ++i) CHECK(pc.view[i] >= pc.view[i - 1]);
}

TEST_CASE("requiring more consistent views never adds points") {
  auto v = plane_views(4);
  FusionConfig cfg;
  std::size_t prev = static_cast<std::size_t>(-1);
  for (std::size_t n = 1; n <= 4; ++n) {
    cfg.min_consistent_views = n;
    const std::size_t count = fuse(v, cfg).size();
    CHECK(count <= prev);
    prev = count;
  }
  CHECK(prev == 0);  // four views have only three sources each
}

TEST_CASE("adding a source view never removes points") {
  auto v = plane_views(4);
  FusionConfig cfg;
  cfg.min_consistent_views = 1;
  const std::size_t a = fuse_view(v, 0, {1}, cfg).size();
  const std::size_t b = fuse_view(v, 0, {1, 2}, cfg).size();
  const std::size_t c = fuse_view(v, 0, {1, 2, 3}, cfg).size();
  CHECK(a <= b);
  CHECK(b <= c);
}

TEST_CASE("dynamic mode accepts at least what the static rule accepts") {
  auto v = plane_views(3);
  Rng rng(3);
  for (double& d : v[2].depth.mutable_data()) d *= 1.0 + rng.uniform(-0.02, 0.02);
  FusionConfig s;
  s.min_consistent_views = 2;
  FusionConfig d = s;
  d.dynamic = true;
  CHECK(fuse(v, d).size() >= fuse(v, s).size());
}

TEST_CASE("low confidence removes every point") {
  auto v = plane_views(3);
  for (auto& view : v) view.confidence = Tensor({16, 16}, 0.1);
  FusionConfig cfg;
  cfg.min_consistent_views = 1;
  CHECK(fuse(v, cfg).size() == 0);
}

TEST_CASE("fusion config validation") {
  FusionConfig c;
  c.conf_thresh = 1.5;
  CHECK_THROWS_AS(c.validate(), ParameterError);
  c = FusionConfig{};
  c.thresh_c = 0.0;
  CHECK_THROWS_AS(c.validate(), ParameterError);
  c = FusionConfig{};
  c.min_consistent_views = 0;
  CHECK_THROWS_AS(c.validate(), ParameterError);
}
