#include "icgmvs/feature_net.hpp"

#include <cmath>

#include "icgmvs/util.hpp"

namespace icgmvs {

std::pair<Tensor, Tensor> coordinate_pool(const Tensor& x) {
  if (x.rank() != 3) throw DimensionError("coordinate_pool expects (C,H,W), got " + shape_str(x.shape()));
  return {mean_axis(x, 2, true), mean_axis(x, 1, true)};
}

IvfParams make_ivf_params(ParameterStore& store, const std::string& name, std::size_t channels,
                          std::size_t reduction, Rng& rng) {
  const std::size_t mid = std::max<std::size_t>(1, channels / std::max<std::size_t>(1, reduction));
  return {make_conv2d(store, name + ".reduce", channels, mid, 1, 1, 0, rng),
          make_conv2d(store, name + ".restore", mid, channels, 1, 1, 0, rng)};
}

IvfAttention ivf_attention(const Tensor& t_h, const Tensor& t_w, const IvfParams& params) {
  if (t_h.rank() != 3 || t_w.rank() != 3 || t_h.dim(2) != 1 || t_w.dim(1) != 1)
    throw DimensionError("ivf_attention expects (C,H,1) and (C,1,W)");
  if (t_h.dim(0) != t_w.dim(0)) throw DimensionError("ivf_attention channel mismatch");
  const std::size_t C = t_h.dim(0), H = t_h.dim(1), W = t_w.dim(2);
  // (C,1,W) and (C,W,1) share a memory layout.
  Tensor joint = concat({t_h, reshape(t_w, Shape{C, W, 1})}, 1);
  Tensor fused = params.restore(relu(params.reduce(joint)));
  Tensor a_h = sigmoid(slice(fused, 1, 0, H));
  Tensor a_w = sigmoid(reshape(slice(fused, 1, H, H + W), Shape{C, 1, W}));
  return {a_h, a_w};
}

Tensor ivf_fuse(const Tensor& coarse, const Tensor& fine, const IvfAttention& att) {
  if (coarse.rank() != 3 || fine.rank() != 3) throw DimensionError("ivf_fuse expects (C,H,W) tensors");
  if (coarse.dim(0) != fine.dim(0) || 2 * coarse.dim(1) != fine.dim(1) || 2 * coarse.dim(2) != fine.dim(2))
    throw DimensionError("ivf_fuse: coarse " + shape_str(coarse.shape()) + " is not half of fine " +
                         shape_str(fine.shape()));
  if (att.a_h.shape() != Shape{fine.dim(0), fine.dim(1), 1} || att.a_w.shape() != Shape{fine.dim(0), 1, fine.dim(2)})
    throw DimensionError("ivf_fuse: attention maps do not match fine feature shape");
  return add(upsample_bilinear2x(coarse), mul(mul(att.a_h, att.a_w), fine));
}

FeatureNet::FeatureNet(ParameterStore& store, const std::string& name, const FeatureNetConfig& config,
                       std::uint64_t seed)
    : config_(config) {
  const auto& c = config.channels;
  // Encoder widths per resolution (full .. 1/8).
  const std::array<std::size_t, kNumStages> width{c[3], 2 * c[2], 2 * c[1], c[0]};
  for (std::size_t lvl = 0; lvl < kNumStages; ++lvl) {
    const std::string n = name + ".enc" + std::to_string(lvl);
    Rng rng(mix_seed(seed, n));
    encoder_[lvl] = make_conv_bn_relu2d(store, n, lvl == 0 ? 3 : width[lvl - 1], width[lvl], 3, lvl == 0 ? 1 : 2, 1,
                                        rng);
  }
  // Top-down: step s fuses resolution level (3 - s) into (2 - s).
  for (std::size_t s = 0; s + 1 < kNumStages; ++s) {
    const std::size_t coarse_lvl = kNumStages - 1 - s, fine_lvl = coarse_lvl - 1;
    const std::string n = name + ".td" + std::to_string(s);
    Rng rng(mix_seed(seed, n));
    lateral_[s] = make_conv2d(store, n + ".lateral", width[coarse_lvl], width[fine_lvl], 1, 1, 0, rng);
    if (config.intra_view_fusion) ivf_[s] = make_ivf_params(store, n + ".ivf", width[fine_lvl], config.reduction, rng);
  }
  for (std::size_t stage = 0; stage < kNumStages; ++stage) {
    const std::size_t lvl = kNumStages - 1 - stage;
    const std::string n = name + ".head" + std::to_string(stage);
    Rng rng(mix_seed(seed, n));
    heads_[stage] = make_conv2d(store, n, width[lvl], c[stage], 3, 1, 1, rng);
  }
}

FeaturePyramid FeatureNet::operator()(const Tensor& image, Mode mode) {
  if (image.rank() != 3 || image.dim(0) != 3)
    throw DimensionError("feature extraction expects a (3,H,W) image, got " + shape_str(image.shape()));
  if (image.dim(1) % 8 != 0 || image.dim(2) % 8 != 0)
    throw ParameterError("image extents must be divisible by 8, got " + shape_str(image.shape()));
  std::array<Tensor, kNumStages> enc;
  Tensor x = image;
  for (std::size_t lvl = 0; lvl < kNumStages; ++lvl) {
    x = encoder_[lvl](x, mode);
    enc[lvl] = x;
  }
  FeaturePyramid out;
  Tensor top = enc[kNumStages - 1];
  out.levels[0] = heads_[0](top);
  for (std::size_t s = 0; s + 1 < kNumStages; ++s) {
    const Tensor& fine = enc[kNumStages - 2 - s];
    Tensor coarse = lateral_[s](top);
    if (config_.intra_view_fusion) {
      auto [t_h, t_w] = coordinate_pool(fine);
      top = ivf_fuse(coarse, fine, ivf_attention(t_h, t_w, ivf_[s]));
    } else {
      top = add(upsample_bilinear2x(coarse), fine);
    }
    out.levels[s + 1] = heads_[s + 1](top);
  }
  return out;
}

Tensor patch_descriptor_features(const Tensor& image, std::size_t factor, std::size_t channels) {
  if (image.rank() != 3 || image.dim(0) != 3) throw DimensionError("expected a (3,H,W) image");
  if (factor == 0 || image.dim(1) % factor || image.dim(2) % factor)
    throw ParameterError("image extents must be divisible by the downsampling factor");
  if (channels < 27) throw ParameterError("patch descriptors need at least 27 channels");
  const std::size_t H = image.dim(1) / factor, W = image.dim(2) / factor, FH = image.dim(1), FW = image.dim(2);
  auto img = image.data();
  std::vector<double> small(3 * H * W, 0.0);
  const double inv = 1.0 / static_cast<double>(factor * factor);
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t y = 0; y < H; ++y)
      for (std::size_t x = 0; x < W; ++x) {
        double s = 0.0;
        // Window centred on full-resolution pixel (y * factor, x * factor), edges clamped.
        const long half = static_cast<long>(factor / 2);
        for (std::size_t dy = 0; dy < factor; ++dy)
          for (std::size_t dx = 0; dx < factor; ++dx) {
            const long yy = std::clamp<long>(static_cast<long>(y * factor + dy) - half, 0, static_cast<long>(FH) - 1);
            const long xx = std::clamp<long>(static_cast<long>(x * factor + dx) - half, 0, static_cast<long>(FW) - 1);
            s += img[(c * FH + yy) * FW + xx];
          }
        small[(c * H + y) * W + x] = s * inv;
      }
  std::vector<double> out(channels * H * W, 0.0);
  std::vector<double> desc(27);
  for (std::size_t y = 0; y < H; ++y)
    for (std::size_t x = 0; x < W; ++x) {
      std::size_t k = 0;
      for (std::size_t c = 0; c < 3; ++c)
        for (int dy = -1; dy <= 1; ++dy)
          for (int dx = -1; dx <= 1; ++dx) {
            long yy = std::clamp<long>(static_cast<long>(y) + dy, 0, static_cast<long>(H) - 1);
            long xx = std::clamp<long>(static_cast<long>(x) + dx, 0, static_cast<long>(W) - 1);
            desc[k++] = small[(c * H + yy) * W + xx];
          }
      double m = 0.0;
      for (double v : desc) m += v;
      m /= 27.0;
      double nrm = 0.0;
      for (double& v : desc) {
        v -= m;
        nrm += v * v;
      }
      nrm = std::sqrt(nrm) + 1e-9;
      for (std::size_t i = 0; i < 27; ++i) out[(i * H + y) * W + x] = desc[i] / nrm;
    }
  return Tensor(Shape{channels, H, W}, std::move(out));
}

}  // namespace icgmvs
