#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "icgmvs/camera.hpp"
#include "icgmvs/nn.hpp"

namespace icgmvs {

// Aggregated matching scores, (G, D, H, W), for one cascade stage.
struct CostVolume {
  Tensor data;
  int stage = 0;
};

struct PairwiseCorrelation {
  Tensor corr;                       // (G, D, H, W)
  std::vector<unsigned char> valid;  // (D, H, W); invalid entries of corr are 0
};

// Reference feature (C, H, W) repeated over D hypotheses: (C, D, H, W).
Tensor build_reference_volume(const Tensor& ref_feature, std::size_t depth_count);

// Group-wise correlation of a reference feature (C, H, W) with a warped
// source volume (C, D, H, W): mean over each of G channel groups of the
// elementwise product. G must divide C.
Tensor group_correlation(const Tensor& ref_feature, const Tensor& warped, std::size_t groups);

// Warps a source feature into the reference frustum at every hypothesis and
// correlates it with the reference feature.
PairwiseCorrelation warp_and_correlate(const Tensor& src_feature, const Camera& ref, const Camera& src,
                                       const HypothesisSet& hyp, const Tensor& ref_feature, std::size_t groups,
                                       double intrinsic_scale);

// softmax over depth of (sum_g corr[g]) / temperature: (D, H, W).
Tensor view_weights(const Tensor& corr, double temperature);

// sum_i W_i * Corr_i / sum_i W_i, weights broadcast over groups.
CostVolume aggregate(const std::vector<Tensor>& corrs, const std::vector<Tensor>& weights, int stage);

// Cross-view guidance for stages >= 1. Each branch is a 3x3 conv + BN + ReLU
// over the (G*D, H, W) flattening of a cost volume; a branch with zero
// output channels is absent.
struct CvaParams {
  std::size_t num_prev = 0;
  std::size_t num_curr = 0;
  std::optional<ConvBnRelu2d> prev;
  std::optional<ConvBnRelu2d> curr;
};

CvaParams make_cva_params(ParameterStore& store, const std::string& name, std::size_t prev_channels,
                          std::size_t curr_channels, std::size_t num_prev, std::size_t num_curr, Rng& rng);

// Appends guidance channels to the current volume: the previous-stage map is
// computed at its own resolution and bilinearly upsampled 2x; every guidance
// map is replicated over D. Output: (G + num_prev + num_curr, D, H, W).
// With both counts zero the current volume is returned unchanged.
CostVolume cva_guidance(const CostVolume* previous, const CostVolume& current, CvaParams& params, Mode mode);

}  // namespace icgmvs
