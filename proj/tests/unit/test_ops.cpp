#include <cmath>

#include "doctest.h"
#include "icgmvs/gradcheck.hpp"
#include "icgmvs/ops.hpp"

using namespace icgmvs;

namespace {

double dot(const Tensor& a, const Tensor& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) s += a[i] * b[i];
  return s;
}

// Direct loop convolution used as the reference.
Tensor naive_conv2d(const Tensor& x, const Tensor& w, const Tensor& b, std::size_t stride, std::size_t pad) {
  const std::size_t C = x.dim(0), H = x.dim(1), W = x.dim(2), O = w.dim(0), k = w.dim(2);
  const std::size_t Ho = (H + 2 * pad - k) / stride + 1, Wo = (W + 2 * pad - k) / stride + 1;
  Tensor out(Shape{O, Ho, Wo});
  auto o = out.mutable_data();
  for (std::size_t oc = 0; oc < O; ++oc)
    for (std::size_t y = 0; y < Ho; ++y)
      for (std::size_t xx = 0; xx < Wo; ++xx) {
        double s = b[oc];
        for (std::size_t c = 0; c < C; ++c)
          for (std::size_t i = 0; i < k; ++i)
            for (std::size_t j = 0; j < k; ++j) {
              const long iy = static_cast<long>(y * stride + i) - static_cast<long>(pad);
              const long ix = static_cast<long>(xx * stride + j) - static_cast<long>(pad);
              if (iy < 0 || ix < 0 || iy >= static_cast<long>(H) || ix >= static_cast<long>(W)) continue;
              s += w[((oc * C + c) * k + i) * k + j] * x[(c * H + iy) * W + ix];
            }
        o[(oc * Ho + y) * Wo + xx] = s;
      }
  return out;
}

}  // namespace

TEST_CASE("broadcasting follows trailing-axis alignment") {
  CHECK(broadcast_shape({2, 3, 1}, {1, 4}) == Shape({2, 3, 4}));
  CHECK_THROWS_AS(broadcast_shape({2, 3}, {4}), DimensionError);
  Tensor a(Shape{2, 1}, std::vector<double>{1, 2});
  Tensor b(Shape{1, 3}, std::vector<double>{10, 20, 30});
  Tensor c = add(a, b);
  CHECK(c.shape() == Shape({2, 3}));
  CHECK(c[5] == 32.0);
}

TEST_CASE("broadcast gradients are summed over the broadcast axes") {
  Tensor a(Shape{2, 1}, std::vector<double>{1, 2});
  Tensor b(Shape{1, 3}, std::vector<double>{10, 20, 30});
  a.set_requires_grad(true);
  b.set_requires_grad(true);
  sum(mul(a, b)).backward();
  CHECK(a.grad()[0] == 60.0);
  CHECK(b.grad()[0] == 3.0);
}

TEST_CASE("conv2d matches direct loops") {
  Rng rng(1);
  for (std::size_t stride : {1, 2})
    for (std::size_t pad : {0, 1}) {
      Tensor x = random_uniform({3, 7, 6}, rng);
      ConvParams p;
      p.weight = random_uniform({4, 3, 3, 3}, rng);
      p.bias = random_uniform({4}, rng);
      p.stride = {stride, stride, stride};
      p.padding = {pad, pad, pad};
      Tensor fast = conv2d(x, p);
      Tensor ref = naive_conv2d(x, p.weight, p.bias, stride, pad);
      REQUIRE(fast.shape() == ref.shape());
      for (std::size_t i = 0; i < ref.numel(); ++i) CHECK(fast[i] == doctest::Approx(ref[i]).epsilon(1e-12));
    }
}

TEST_CASE("conv3d with unit depth kernel reduces to conv2d per slice") {
  Rng rng(2);
  Tensor x = random_uniform({2, 1, 5, 5}, rng);
  ConvParams p3;
  p3.weight = random_uniform({3, 2, 1, 3, 3}, rng);
  p3.bias = random_uniform({3}, rng);
  p3.padding = {0, 1, 1};
  ConvParams p2;
  p2.weight = reshape(p3.weight, {3, 2, 3, 3});
  p2.bias = p3.bias;
  p2.padding = {1, 1, 0};
  Tensor a = conv3d(x, p3);
  Tensor b = conv2d(reshape(x, {2, 5, 5}), p2);
  for (std::size_t i = 0; i < b.numel(); ++i) CHECK(a[i] == doctest::Approx(b[i]).epsilon(1e-12));
}

TEST_CASE("transposed conv3d is the adjoint of conv3d") {
  Rng rng(3);
  Tensor x = random_uniform({2, 5, 5, 5}, rng);
  ConvParams p;
  p.weight = random_uniform({3, 2, 3, 3, 3}, rng);
  p.stride = {2, 2, 2};
  p.padding = {1, 1, 1};
  Tensor y = conv3d(x, p);
  Tensor r = random_uniform(y.shape(), rng);
  Tensor back = conv_transpose3d(r, p);
  REQUIRE(back.shape() == x.shape());
  CHECK(dot(y, r) == doctest::Approx(dot(x, back)).epsilon(1e-12));
}

TEST_CASE("transposed conv output extent") {
  ConvParams p;
  p.weight = Tensor(Shape{1, 1, 3, 3, 3}, 1.0);
  p.stride = {2, 2, 2};
  p.padding = {1, 1, 1};
  p.output_padding = {1, 1, 1};
  CHECK(conv_transpose3d(Tensor(Shape{1, 2, 3, 4}, 1.0), p).shape() == Shape({1, 4, 6, 8}));
  p.output_padding = {2, 0, 0};
  CHECK_THROWS_AS(conv_transpose3d(Tensor(Shape{1, 2, 3, 4}, 1.0), p), ParameterError);
}

TEST_CASE("softmax is shift invariant and normalized") {
  Rng rng(4);
  Tensor x = random_uniform({5, 3, 2}, rng, -4, 4);
  Tensor a = softmax_axis(x, 0);
  Tensor b = softmax_axis(add_scalar(x, 123.0), 0);
  for (std::size_t i = 0; i < a.numel(); ++i) CHECK(a[i] == doctest::Approx(b[i]).epsilon(1e-12));
  Tensor s = sum_axis(a, 0);
  for (double v : s.data()) CHECK(v == doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("grid sample is exact at pixel centres and zero outside") {
  Rng rng(5);
  Tensor src = random_uniform({2, 4, 5}, rng);
  Tensor coords(Shape{2, 3});
  auto c = coords.mutable_data();
  const double xs[3] = {0.0, 4.0, 4.0 + 1e-9}, ys[3] = {0.0, 3.0, 3.0};
  for (int i = 0; i < 3; ++i) {
    c[i] = xs[i];
    c[3 + i] = ys[i];
  }
  std::vector<unsigned char> valid;
  Tensor out = grid_sample_bilinear(src, coords, &valid);
  CHECK(out[0] == src[0]);
  CHECK(out[1] == src[19]);
  CHECK(valid[0] == 1);
  CHECK(valid[1] == 1);
  CHECK(valid[2] == 0);
  CHECK(out[2] == 0.0);
  CHECK(out[5] == 0.0);
}

TEST_CASE("grid sample reproduces affine fields") {
  Tensor src(Shape{1, 4, 4});
  auto s = src.mutable_data();
  for (std::size_t y = 0; y < 4; ++y)
    for (std::size_t x = 0; x < 4; ++x) s[y * 4 + x] = 2.0 * x - 3.0 * y + 1.0;
  Tensor coords(Shape{2, 1}, std::vector<double>{1.3, 2.6});
  CHECK(grid_sample_bilinear(src, coords)[0] == doctest::Approx(2.0 * 1.3 - 3.0 * 2.6 + 1.0));
}

TEST_CASE("bilinear 2x upsampling keeps corners and affine ramps") {
  Tensor x(Shape{1, 3, 3});
  auto d = x.mutable_data();
  for (std::size_t y = 0; y < 3; ++y)
    for (std::size_t i = 0; i < 3; ++i) d[y * 3 + i] = static_cast<double>(y) + 2.0 * i;
  Tensor u = upsample_bilinear2x(x);
  CHECK(u.shape() == Shape({1, 6, 6}));
  CHECK(u[0] == d[0]);
  CHECK(u[35] == d[8]);
  // align-corners: output index j maps to j * (n-1)/(2n-1)
  CHECK(u[1] == doctest::Approx(2.0 * 2.0 / 5.0));
}

TEST_CASE("batch norm normalizes per channel and tracks running statistics") {
  Rng rng(6);
  Tensor x = random_uniform({2, 4, 4}, rng, 3.0, 5.0);
  BatchNormState st{Tensor(Shape{2}, 0.0), Tensor(Shape{2}, 1.0)};
  Tensor y = batch_norm_train(x, Tensor(Shape{2}, 1.0), Tensor(Shape{2}, 0.0), st);
  Tensor m = mean_axis(reshape(y, {2, 16}), 1);
  CHECK(std::abs(m[0]) < 1e-12);
  CHECK(st.running_mean[0] == doctest::Approx(0.1 * mean(slice(x, 0, 0, 1)).item()));
  Tensor z = batch_norm_infer(x, Tensor(Shape{2}, 1.0), Tensor(Shape{2}, 0.0), st);
  CHECK(z.shape() == x.shape());
}

TEST_CASE("nll loss on a uniform volume is log D and empty masks give zero") {
  Tensor p(Shape{4, 1, 2}, 0.25);
  CHECK(nll_loss(p, {0, 3}, {1, 1}).item() == doctest::Approx(std::log(4.0)));
  CHECK(nll_loss(p, {0, 3}, {0, 0}).item() == 0.0);
  CHECK_THROWS_AS(nll_loss(p, {0, 4}, {1, 1}), ParameterError);
}

TEST_CASE("layout ops") {
  Tensor a(Shape{2, 3}, std::vector<double>{1, 2, 3, 4, 5, 6});
  CHECK(concat({a, a}, 0).shape() == Shape({4, 3}));
  CHECK(concat({a, a}, 1)[3] == 1.0);
  CHECK(slice(a, 1, 1, 3)[0] == 2.0);
  Tensor p = pad(a, {{1, 0}, {0, 2}});
  CHECK(p.shape() == Shape({3, 5}));
  CHECK(p[5] == 1.0);
  CHECK_THROWS_AS(reshape(a, {4}), DimensionError);
  CHECK(sum_axis(a, 0, true).shape() == Shape({1, 3}));
}

TEST_CASE("every differentiable op passes a finite-difference check") {
  for (const std::string& op : gradcheck_op_names()) {
    CAPTURE(op);
    GradcheckResult r = gradcheck_op(op, 99, 3);
    CHECK(r.passed);
    CHECK(r.max_rel_error <= kGradcheckRelTol);
  }
}
