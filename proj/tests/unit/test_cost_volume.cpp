#include <cmath>

#include "doctest.h"
#include "icgmvs/cost_volume.hpp"
#include "icgmvs/synth.hpp"

using namespace icgmvs;

TEST_CASE("group correlation is the per-group channel mean of products") {
  Rng rng(1);
  Tensor ref = random_uniform({6, 2, 3}, rng);
  Tensor warped = random_uniform({6, 4, 2, 3}, rng);
  Tensor c = group_correlation(ref, warped, 3);
  CHECK(c.shape() == Shape({3, 4, 2, 3}));
  for (std::size_t g = 0; g < 3; ++g)
    for (std::size_t d = 0; d < 4; ++d)
      for (std::size_t p = 0; p < 6; ++p) {
        double s = 0.0;
        for (std::size_t k = 0; k < 2; ++k) s += ref[(g * 2 + k) * 6 + p] * warped[((g * 2 + k) * 4 + d) * 6 + p];
        CHECK(c[((g * 4 + d) * 6) + p] == doctest::Approx(s / 2.0).epsilon(1e-12));
      }
}

TEST_CASE("self-correlation of a view with itself peaks everywhere at once") {
  Rng rng(2);
  Camera cam;
  cam.K = default_intrinsics(8, 8);
  cam.dmin = 1.0;
  cam.dmax = 5.0;
  Tensor f = random_uniform({4, 8, 8}, rng);
  PairwiseCorrelation pc = warp_and_correlate(f, cam, cam, initial_hypotheses(1, 5, 4), f, 2, 1.0);
  for (std::size_t d = 1; d < 4; ++d)
    for (std::size_t i = 0; i < 64; ++i) CHECK(pc.corr[d * 64 + i] == doctest::Approx(pc.corr[i]).epsilon(1e-12));
  for (unsigned char v : pc.valid) CHECK(v == 1);
}

TEST_CASE("view weights are a softmax over depth of the group sum") {
  Rng rng(3);
  Tensor corr = random_uniform({2, 5, 3, 3}, rng, -3, 3);
  Tensor w = view_weights(corr, 2.0);
  CHECK(w.shape() == Shape({5, 3, 3}));
  Tensor s = sum_axis(w, 0);
  for (double v : s.data()) CHECK(std::abs(v - 1.0) <= 1e-12);
  // equal correlations give uniform weights
  Tensor flat = view_weights(Tensor(Shape{2, 4, 1, 1}, 0.7), 2.0);
  for (double v : flat.data()) CHECK(v == doctest::Approx(0.25));
  CHECK_THROWS_AS(view_weights(corr, 0.0), ParameterError);
}

TEST_CASE("aggregation of one view returns that view's correlation") {
  Rng rng(4);
  Tensor corr = random_uniform({2, 4, 2, 2}, rng);
  Tensor w = view_weights(corr, 2.0);
  CostVolume cv = aggregate({corr}, {w}, 1);
  CHECK(cv.stage == 1);
  for (std::size_t i = 0; i < corr.numel(); ++i) CHECK(cv.data[i] == doctest::Approx(corr[i]).epsilon(1e-12));
}

TEST_CASE("aggregation is a convex combination and invariant to view order") {
  Rng rng(5);
  Tensor a = random_uniform({2, 4, 2, 2}, rng), b = random_uniform({2, 4, 2, 2}, rng);
  Tensor wa = view_weights(a, 2.0), wb = view_weights(b, 2.0);
  CostVolume ab = aggregate({a, b}, {wa, wb}, 0), ba = aggregate({b, a}, {wb, wa}, 0);
  for (std::size_t i = 0; i < a.numel(); ++i) {
    CHECK(ab.data[i] == doctest::Approx(ba.data[i]).epsilon(1e-12));
    CHECK(ab.data[i] >= std::min(a[i], b[i]) - 1e-12);
    CHECK(ab.data[i] <= std::max(a[i], b[i]) + 1e-12);
  }
}

TEST_CASE("cross-view guidance appends the configured channel counts") {
  Rng rng(6);
  CostVolume prev{random_uniform({4, 4, 2, 3}, rng), 0};
  CostVolume curr{random_uniform({2, 4, 4, 6}, rng), 1};
  for (std::size_t nc : {0, 1, 3})
    for (std::size_t nf : {0, 2}) {
      ParameterStore s;
      CvaParams p = make_cva_params(s, "cva", 16, 8, nc, nf, rng);
      CostVolume out = cva_guidance(&prev, curr, p, Mode::Train);
      CHECK(out.data.shape() == Shape({2 + nc + nf, 4, 4, 6}));
      // the current volume is carried through unchanged in the leading channels
      for (std::size_t i = 0; i < curr.data.numel(); ++i) CHECK(out.data[i] == curr.data[i]);
      // guidance maps are replicated over depth
      if (nc + nf > 0) {
        const std::size_t plane = 4 * 6, base = 2 * 4 * plane;
        for (std::size_t d = 1; d < 4; ++d)
          for (std::size_t p2 = 0; p2 < plane; ++p2) CHECK(out.data[base + d * plane + p2] == out.data[base + p2]);
      }
      if (nc + nf == 0) CHECK(s.parameter_count() == 0);
    }
}
