#include <cmath>

#include "doctest.h"
#include "icgmvs/feature_net.hpp"

using namespace icgmvs;

TEST_CASE("coordinate pooling takes row and column means") {
  Tensor x(Shape{1, 2, 3}, std::vector<double>{1, 2, 3, 4, 5, 6});
  auto [h, w] = coordinate_pool(x);
  CHECK(h.shape() == Shape({1, 2, 1}));
  CHECK(w.shape() == Shape({1, 1, 3}));
  CHECK(h[0] == 2.0);
  CHECK(h[1] == 5.0);
  CHECK(w[0] == 2.5);
  CHECK(w[2] == 4.5);
}

TEST_CASE("intra-view attention gates lie in (0, 1) and broadcast to the map") {
  ParameterStore s;
  Rng rng(1);
  IvfParams p = make_ivf_params(s, "ivf", 8, 4, rng);
  Tensor fine = random_uniform({8, 6, 5}, rng);
  auto [th, tw] = coordinate_pool(fine);
  IvfAttention a = ivf_attention(th, tw, p);
  CHECK(a.a_h.shape() == Shape({8, 6, 1}));
  CHECK(a.a_w.shape() == Shape({8, 1, 5}));
  for (double v : a.a_h.data()) {
    CHECK(v > 0.0);
    CHECK(v < 1.0);
  }
  Tensor coarse = random_uniform({8, 3, 3}, rng);
  CHECK_THROWS_AS(ivf_fuse(coarse, fine, a), DimensionError);
  Tensor coarse_ok = random_uniform({8, 3, 3}, rng);
  Tensor fine_even = random_uniform({8, 6, 6}, rng);
  auto [eh, ew] = coordinate_pool(fine_even);
  Tensor fused = ivf_fuse(coarse_ok, fine_even, ivf_attention(eh, ew, p));
  CHECK(fused.shape() == Shape({8, 6, 6}));
}

TEST_CASE("fusion with zero fine features is the upsampled coarse map") {
  ParameterStore s;
  Rng rng(2);
  IvfParams p = make_ivf_params(s, "ivf", 4, 4, rng);
  Tensor coarse = random_uniform({4, 2, 2}, rng);
  Tensor fine(Shape{4, 4, 4}, 0.0);
  auto [th, tw] = coordinate_pool(fine);
  Tensor fused = ivf_fuse(coarse, fine, ivf_attention(th, tw, p));
  Tensor up = upsample_bilinear2x(coarse);
  for (std::size_t i = 0; i < up.numel(); ++i) CHECK(fused[i] == up[i]);
}

TEST_CASE("feature pyramid shapes follow the channel schedule") {
  for (bool ivf : {true, false}) {
    ParameterStore s;
    FeatureNetConfig cfg;
    cfg.intra_view_fusion = ivf;
    FeatureNet net(s, "f", cfg, 3);
    Rng rng(3);
    FeaturePyramid p = net(random_uniform({3, 16, 24}, rng, 0, 1), Mode::Train);
    CHECK(p.levels[0].shape() == Shape({32, 2, 3}));
    CHECK(p.levels[1].shape() == Shape({16, 4, 6}));
    CHECK(p.levels[2].shape() == Shape({8, 8, 12}));
    CHECK(p.levels[3].shape() == Shape({8, 16, 24}));
  }
}

TEST_CASE("disabling intra-view fusion removes its parameters") {
  ParameterStore with, without;
  FeatureNetConfig a, b;
  b.intra_view_fusion = false;
  FeatureNet na(with, "f", a, 1), nb(without, "f", b, 1);
  CHECK(with.parameter_count() > without.parameter_count());
}

TEST_CASE("patch descriptors are zero mean and unit norm") {
  Rng rng(4);
  Tensor img = random_uniform({3, 32, 40}, rng, 0, 1);
  Tensor f = patch_descriptor_features(img, 8, 32);
  CHECK(f.shape() == Shape({32, 4, 5}));
  for (std::size_t p = 0; p < 20; ++p) {
    double m = 0.0, n = 0.0;
    for (std::size_t c = 0; c < 32; ++c) {
      m += f[c * 20 + p];
      n += f[c * 20 + p] * f[c * 20 + p];
    }
    CHECK(std::abs(m) < 1e-12);
    CHECK(n == doctest::Approx(1.0).epsilon(1e-6));
  }
  CHECK_THROWS_AS(patch_descriptor_features(img, 8, 16), ParameterError);
  CHECK_THROWS_AS(patch_descriptor_features(img, 3, 32), ParameterError);
}
