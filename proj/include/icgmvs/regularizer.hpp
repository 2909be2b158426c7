#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "icgmvs/camera.hpp"
#include "icgmvs/nn.hpp"

namespace icgmvs {

struct DepthMap {
  Tensor depth;                // (H, W)
  Tensor confidence;           // (H, W), probability of the selected bin
  std::vector<int> index;      // selected bin per pixel
};

// 3D U-Net: two stride-2 levels down, transposed convs up with additive
// skips, then a single-channel 3D conv whose output is softmaxed over depth.
// H and W are zero-padded to multiples of 4 and cropped back; the hypothesis
// count must itself be a multiple of 4.
class Regularizer {
 public:
  Regularizer(ParameterStore& store, const std::string& name, std::size_t in_channels, std::size_t base_channels,
              std::uint64_t seed);

  // volume (C_in, D, H, W) -> probability volume (D, H, W)
  Tensor operator()(const Tensor& volume, Mode mode);
  // Pre-softmax scores, (D, H, W).
  Tensor logits(const Tensor& volume, Mode mode);
  std::size_t in_channels() const { return in_channels_; }

 private:
  std::size_t in_channels_;
  ConvBnRelu3d c0_, c1_, c1b_, c2_, c2b_;
  ConvTBnRelu3d u1_, u0_;
  Conv3dLayer out_;
};

// Winner-takes-all over the depth axis, ties to the smaller index.
DepthMap wta_depth(const Tensor& prob, const HypothesisSet& hyp);

}  // namespace icgmvs
