#include <cmath>

#include "doctest.h"
#include "icgmvs/camera.hpp"
#include "icgmvs/nn.hpp"
#include "icgmvs/synth.hpp"

using namespace icgmvs;

namespace {

Camera test_camera(double x, double yaw) {
  Eigen::Matrix3d K;
  K << 60, 0, 31.5, 0, 62, 23.5, 0, 0, 1;
  Camera c = look_at(Eigen::Vector3d(x, -0.3, -5.0), Eigen::Vector3d(yaw, 0.0, 0.0), K);
  c.dmin = 2.0;
  c.dmax = 9.0;
  return c;
}

}  // namespace

TEST_CASE("validate rejects malformed cameras") {
  Camera c;
  CHECK_NOTHROW(c.validate());
  Camera bad = c;
  bad.R(0, 0) = 2.0;
  CHECK_THROWS_AS(bad.validate(), ParameterError);
  bad = c;
  bad.K(0, 0) = -1.0;
  CHECK_THROWS_AS(bad.validate(), ParameterError);
  bad = c;
  bad.dmin = 5.0;
  bad.dmax = 5.0;
  CHECK_THROWS_AS(bad.validate(), ParameterError);
  bad = c;
  bad.R = -Eigen::Matrix3d::Identity();
  CHECK_THROWS_AS(bad.validate(), ParameterError);
}

TEST_CASE("project inverts unproject") {
  const Camera c = test_camera(0.4, 0.1);
  for (double u : {0.0, 17.25, 63.0})
    for (double d : {2.5, 7.0}) {
      const Eigen::Vector3d p = c.project(c.unproject(u, 11.5, d));
      CHECK(p.x() == doctest::Approx(u).epsilon(1e-12));
      CHECK(p.y() == doctest::Approx(11.5).epsilon(1e-12));
      CHECK(p.z() == doctest::Approx(d).epsilon(1e-12));
    }
}

TEST_CASE("homography agrees with explicit reprojection") {
  const Camera ref = test_camera(0.0, 0.0), src = test_camera(1.2, 0.3);
  CHECK((homography(ref, ref, 4.0) - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() <= 1e-12);
  for (double d : {2.0, 4.5, 8.0}) {
    const Eigen::Vector3d q = src.project(ref.unproject(20.0, 30.0, d));
    const Eigen::Vector3d h = homography(ref, src, d) * Eigen::Vector3d(20.0, 30.0, 1.0);
    CHECK(h.x() / h.z() == doctest::Approx(q.x()).epsilon(1e-12));
    CHECK(h.y() / h.z() == doctest::Approx(q.y()).epsilon(1e-12));
  }
  CHECK_THROWS_AS(homography(ref, src, -1.0), ParameterError);
}

TEST_CASE("scaled intrinsics map stage pixels to full-resolution pixels") {
  const Camera c = test_camera(0.0, 0.0);
  const Camera s = c.scaled(0.25);
  const Eigen::Vector3d X = c.unproject(12.0, 8.0, 3.0);
  const Eigen::Vector3d p = s.project(X);
  CHECK(p.x() == doctest::Approx(3.0));
  CHECK(p.y() == doctest::Approx(2.0));
}

TEST_CASE("initial hypotheses are an inclusive linspace") {
  HypothesisSet h = initial_hypotheses(1.0, 9.0, 8);
  CHECK(h.values.front() == 1.0);
  CHECK(h.values.back() == 9.0);
  CHECK(h.spacing == doctest::Approx(8.0 / 7.0));
  CHECK(h.uniform);
  CHECK_THROWS_AS(initial_hypotheses(3.0, 2.0, 8), ParameterError);
}

TEST_CASE("refined hypotheses halve spacing, stay in range and increase strictly") {
  Rng rng(5);
  const HypothesisSet h0 = initial_hypotheses(2.0, 6.0, 8);
  Tensor center = random_uniform({3, 4}, rng, 2.0, 6.0);
  center.mutable_data()[0] = 2.0;
  center.mutable_data()[1] = 6.0;
  const HypothesisSet h1 = refine_hypotheses(center, h0, 8, 2.0, 6.0);
  CHECK(h1.spacing == h0.spacing / 2.0);
  CHECK(h1.height == 6);
  CHECK(h1.width == 8);
  for (std::size_t y = 0; y < h1.height; ++y)
    for (std::size_t x = 0; x < h1.width; ++x) {
      CHECK(h1.at(0, y, x) >= 2.0 - 1e-12);
      CHECK(h1.at(7, y, x) <= 6.0 + 1e-12);
      for (std::size_t k = 1; k < 8; ++k) CHECK(h1.at(k, y, x) > h1.at(k - 1, y, x));
    }
  // A mid-range centre gives a symmetric window.
  const HypothesisSet h2 = refine_hypotheses(Tensor(Shape{1, 1}, 4.0), h0, 4, 2.0, 6.0);
  double m = 0.0;
  for (std::size_t k = 0; k < 4; ++k) m += h2.at(k, 0, 0);
  CHECK(m / 4.0 == doctest::Approx(4.0));
}

TEST_CASE("refined window covers the previous winning bin") {
  const HypothesisSet h0 = initial_hypotheses(1.0, 8.0, 8);
  for (std::size_t k = 0; k < 8; ++k) {
    const HypothesisSet h1 = refine_hypotheses(Tensor(Shape{1, 1}, h0.values[k]), h0, 8, 1.0, 8.0);
    CHECK(h1.at(0, 0, 0) <= h0.values[k] + 1e-12);
    CHECK(h1.at(7, 0, 0) >= h0.values[k] - 1e-12);
  }
}

TEST_CASE("refined window centres follow the coarse map at half the fine coordinate") {
  // Coarse map linear in (y, x): fine pixel (y, x) must be centred on the ramp at (y / 2, x / 2).
  const std::size_t h = 3, w = 4;
  std::vector<double> v(h * w);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) v[y * w + x] = 4.0 + 0.1 * static_cast<double>(y) + 0.05 * static_cast<double>(x);
  const HypothesisSet h0 = initial_hypotheses(1.0, 8.0, 8);
  const HypothesisSet h1 = refine_hypotheses(Tensor(Shape{h, w}, v), h0, 4, 1.0, 8.0);
  for (std::size_t y = 0; y + 1 < 2 * h; ++y)
    for (std::size_t x = 0; x + 1 < 2 * w; ++x) {
      const double expect = 4.0 + 0.05 * static_cast<double>(y) + 0.025 * static_cast<double>(x);
      double m = 0.0;
      for (std::size_t k = 0; k < 4; ++k) m += h1.at(k, y, x);
      CHECK(m / 4.0 == doctest::Approx(expect).epsilon(1e-12));
    }
}

TEST_CASE("warp coordinates for the reference itself are the pixel grid") {
  const Camera c = test_camera(0.0, 0.0);
  const HypothesisSet h = initial_hypotheses(2.0, 9.0, 4);
  Tensor w = warp_coords(c, c, h, 6, 8, 0.125);
  CHECK(w.shape() == Shape({2, 4, 6, 8}));
  const std::size_t plane = 4 * 6 * 8;
  for (std::size_t k = 0; k < 4; ++k)
    for (std::size_t y = 0; y < 6; ++y)
      for (std::size_t x = 0; x < 8; ++x) {
        CHECK(w[(k * 6 + y) * 8 + x] == doctest::Approx(static_cast<double>(x)).epsilon(1e-12));
        CHECK(w[plane + (k * 6 + y) * 8 + x] == doctest::Approx(static_cast<double>(y)).epsilon(1e-12));
      }
}
