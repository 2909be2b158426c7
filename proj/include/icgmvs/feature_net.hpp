#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <utility>

#include "icgmvs/nn.hpp"

namespace icgmvs {

inline constexpr std::size_t kNumStages = 4;

// Per-stage features, coarsest first: stage l has resolution H / 2^(3-l).
struct FeaturePyramid {
  std::array<Tensor, kNumStages> levels;
};

// Height-wise (C, H, 1) and width-wise (C, 1, W) gates in (0, 1).
struct IvfAttention {
  Tensor a_h;
  Tensor a_w;
};

// Row means (C, H, 1) and column means (C, 1, W).
std::pair<Tensor, Tensor> coordinate_pool(const Tensor& x);

// Shared 1x1 conv stack of the intra-view fusion: channel reduce, ReLU,
// channel restore. Applied to the concatenated (C, H + W, 1) descriptor.
struct IvfParams {
  Conv2dLayer reduce;
  Conv2dLayer restore;
};

IvfParams make_ivf_params(ParameterStore& store, const std::string& name, std::size_t channels,
                          std::size_t reduction, Rng& rng);

IvfAttention ivf_attention(const Tensor& t_h, const Tensor& t_w, const IvfParams& params);

// upsample2x(coarse) + a_h * a_w * fine. `coarse` must already carry the
// fine level's channel count (lateral 1x1 conv applied by the caller).
Tensor ivf_fuse(const Tensor& coarse, const Tensor& fine, const IvfAttention& att);

struct FeatureNetConfig {
  std::array<std::size_t, kNumStages> channels{32, 16, 8, 8};
  std::size_t reduction = 4;
  bool intra_view_fusion = true;
};

// Bottom-up encoder to 1/8 resolution, then a top-down pathway that gates
// each finer encoder level with intra-view attention before merging.
class FeatureNet {
 public:
  FeatureNet(ParameterStore& store, const std::string& name, const FeatureNetConfig& config, std::uint64_t seed);

  FeaturePyramid operator()(const Tensor& image, Mode mode);
  const FeatureNetConfig& config() const { return config_; }

 private:
  FeatureNetConfig config_;
  std::array<ConvBnRelu2d, kNumStages> encoder_;  // full, 1/2, 1/4, 1/8
  std::array<Conv2dLayer, kNumStages - 1> lateral_;
  std::array<IvfParams, kNumStages - 1> ivf_;
  std::array<Conv2dLayer, kNumStages> heads_;
};

// Untrained, matching-friendly features: box-filter the image around every
// factor-th pixel (stage pixel y sits at full-resolution y * factor), stack each pixel's 3x3 color neighbourhood (27 values, zero
// padded to `channels`), and normalize every descriptor to zero mean and unit
// norm, so that group correlation behaves like normalized cross-correlation.
Tensor patch_descriptor_features(const Tensor& image, std::size_t factor, std::size_t channels);

}  // namespace icgmvs
