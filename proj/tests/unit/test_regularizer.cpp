#include <cmath>

#include "doctest.h"
#include "icgmvs/regularizer.hpp"

using namespace icgmvs;

TEST_CASE("regularizer maps (C,D,H,W) to a normalized (D,H,W) volume") {
  ParameterStore s;
  Regularizer reg(s, "reg", 3, 4, 1);
  Rng rng(1);
  for (auto hw : {std::pair<std::size_t, std::size_t>{4, 4}, {5, 7}, {2, 3}}) {
    Tensor v = random_uniform({3, 8, hw.first, hw.second}, rng);
    for (Mode mode : {Mode::Train, Mode::Eval}) {
      Tensor p = reg(v, mode);
      CHECK(p.shape() == Shape({8, hw.first, hw.second}));
      Tensor sum = sum_axis(p, 0);
      for (double x : sum.data()) CHECK(std::abs(x - 1.0) <= 1e-12);
      for (double x : p.data()) CHECK(x >= 0.0);
    }
  }
}

TEST_CASE("regularizer rejects bad volumes") {
  ParameterStore s;
  Regularizer reg(s, "reg", 3, 4, 1);
  CHECK_THROWS_AS(reg(Tensor(Shape{3, 6, 4, 4}, 0.0), Mode::Train), ParameterError);
  CHECK_THROWS_AS(reg(Tensor(Shape{2, 8, 4, 4}, 0.0), Mode::Train), DimensionError);
  CHECK_THROWS_AS(reg(Tensor(Shape{3, 8, 4}, 0.0), Mode::Train), DimensionError);
}

TEST_CASE("a zero volume through zero-bias layers gives a uniform distribution") {
  ParameterStore s;
  Regularizer reg(s, "reg", 2, 4, 7);
  Tensor p = reg(Tensor(Shape{2, 4, 4, 4}, 0.0), Mode::Train);
  for (double x : p.data()) CHECK(x == doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("winner takes all picks the largest probability, ties to the smaller index") {
  Tensor p(Shape{3, 1, 3}, std::vector<double>{0.2, 0.5, 0.4,  //
                                               0.5, 0.3, 0.2,  //
                                               0.3, 0.2, 0.4});
  HypothesisSet h = initial_hypotheses(1.0, 3.0, 3);
  DepthMap d = wta_depth(p, h);
  CHECK(d.index == std::vector<int>{1, 0, 0});
  CHECK(d.depth[0] == 2.0);
  CHECK(d.depth[2] == 1.0);
  CHECK(d.confidence[0] == 0.5);
  CHECK(d.confidence[2] == 0.4);
  CHECK_THROWS_AS(wta_depth(p, initial_hypotheses(1.0, 3.0, 4)), DimensionError);
}

TEST_CASE("winner takes all reads per-pixel hypotheses") {
  HypothesisSet h0 = initial_hypotheses(1.0, 9.0, 4);
  Tensor center(Shape{1, 1}, 5.0);
  HypothesisSet h1 = refine_hypotheses(center, h0, 4, 1.0, 9.0);
  Tensor p(Shape{4, 2, 2}, 0.0);
  for (std::size_t i = 0; i < 4; ++i) p.mutable_data()[3 * 4 + i] = 1.0;
  DepthMap d = wta_depth(p, h1);
  for (std::size_t i = 0; i < 4; ++i) CHECK(d.depth[i] == h1.at(3, i / 2, i % 2));
}
