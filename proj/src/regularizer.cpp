#include "icgmvs/regularizer.hpp"

#include "icgmvs/util.hpp"

namespace icgmvs {

Regularizer::Regularizer(ParameterStore& store, const std::string& name, std::size_t in_channels,
                         std::size_t base, std::uint64_t seed)
    : in_channels_(in_channels) {
  Rng rng(mix_seed(seed, name));
  c0_ = make_conv_bn_relu3d(store, name + ".c0", in_channels, base, 1, rng);
  c1_ = make_conv_bn_relu3d(store, name + ".c1", base, 2 * base, 2, rng);
  c1b_ = make_conv_bn_relu3d(store, name + ".c1b", 2 * base, 2 * base, 1, rng);
  c2_ = make_conv_bn_relu3d(store, name + ".c2", 2 * base, 4 * base, 2, rng);
  c2b_ = make_conv_bn_relu3d(store, name + ".c2b", 4 * base, 4 * base, 1, rng);
  u1_ = make_convt_bn_relu3d(store, name + ".u1", 4 * base, 2 * base, rng);
  u0_ = make_convt_bn_relu3d(store, name + ".u0", 2 * base, base, rng);
  out_ = make_conv3d(store, name + ".out", base, 1, 3, 1, 1, rng);
}

Tensor Regularizer::logits(const Tensor& volume, Mode mode) {
  if (volume.rank() != 4) throw DimensionError("regularizer expects (C,D,H,W), got " + shape_str(volume.shape()));
  if (volume.dim(0) != in_channels_)
    throw DimensionError("regularizer expects " + std::to_string(in_channels_) + " channels, got " +
                         std::to_string(volume.dim(0)));
  const std::size_t D = volume.dim(1), H = volume.dim(2), W = volume.dim(3);
  if (D % 4 != 0) throw ParameterError("hypothesis count " + std::to_string(D) + " is not divisible by 4");
  const std::size_t ph = (4 - H % 4) % 4, pw = (4 - W % 4) % 4;
  Tensor x = (ph || pw) ? pad(volume, {{0, 0}, {0, 0}, {0, ph}, {0, pw}}) : volume;

  Tensor s0 = c0_(x, mode);
  Tensor s1 = c1b_(c1_(s0, mode), mode);
  Tensor s2 = c2b_(c2_(s1, mode), mode);
  Tensor up1 = add(s1, u1_(s2, mode));
  Tensor up0 = add(s0, u0_(up1, mode));
  Tensor score = out_(up0);  // (1, D, Hp, Wp)
  score = reshape(score, Shape{D, H + ph, W + pw});
  if (ph) score = slice(score, 1, 0, H);
  if (pw) score = slice(score, 2, 0, W);
  return score;
}

Tensor Regularizer::operator()(const Tensor& volume, Mode mode) { return softmax_axis(logits(volume, mode), 0); }

DepthMap wta_depth(const Tensor& prob, const HypothesisSet& hyp) {
  if (prob.rank() != 3) throw DimensionError("wta_depth expects (D,H,W)");
  const std::size_t D = prob.dim(0), H = prob.dim(1), W = prob.dim(2), HW = H * W;
  if (D != hyp.count) throw DimensionError("probability volume and hypothesis set disagree on D");
  if (!hyp.uniform && (hyp.height != H || hyp.width != W))
    throw DimensionError("hypothesis resolution does not match probability volume");
  auto p = prob.data();
  DepthMap out;
  out.index.resize(HW);
  std::vector<double> depth(HW), conf(HW);
  for (std::size_t y = 0; y < H; ++y)
    for (std::size_t x = 0; x < W; ++x) {
      const std::size_t i = y * W + x;
      std::size_t best = 0;
      for (std::size_t k = 1; k < D; ++k)
        if (p[k * HW + i] > p[best * HW + i]) best = k;
      out.index[i] = static_cast<int>(best);
      depth[i] = hyp.at(best, y, x);
      conf[i] = p[best * HW + i];
    }
  out.depth = Tensor(Shape{H, W}, std::move(depth));
  out.confidence = Tensor(Shape{H, W}, std::move(conf));
  return out;
}

}  // namespace icgmvs
