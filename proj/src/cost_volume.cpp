#include "icgmvs/cost_volume.hpp"

namespace icgmvs {

Tensor build_reference_volume(const Tensor& ref_feature, std::size_t depth_count) {
  if (ref_feature.rank() != 3) throw DimensionError("reference feature must be (C,H,W)");
  const std::size_t C = ref_feature.dim(0), H = ref_feature.dim(1), W = ref_feature.dim(2);
  return broadcast_to(reshape(ref_feature, Shape{C, 1, H, W}), Shape{C, depth_count, H, W});
}

Tensor group_correlation(const Tensor& ref_feature, const Tensor& warped, std::size_t groups) {
  if (ref_feature.rank() != 3 || warped.rank() != 4) throw DimensionError("group_correlation expects (C,H,W) and (C,D,H,W)");
  const std::size_t C = ref_feature.dim(0), H = ref_feature.dim(1), W = ref_feature.dim(2), D = warped.dim(1);
  if (warped.dim(0) != C || warped.dim(2) != H || warped.dim(3) != W)
    throw DimensionError("group_correlation: " + shape_str(ref_feature.shape()) + " vs " + shape_str(warped.shape()));
  if (groups == 0 || C % groups != 0)
    throw ParameterError("channel count " + std::to_string(C) + " is not divisible by " + std::to_string(groups) +
                         " groups");
  Tensor prod = mul(reshape(ref_feature, Shape{C, 1, H, W}), warped);
  if (groups == C) return prod;
  return mean_axis(reshape(prod, Shape{groups, C / groups, D, H, W}), 1);
}

PairwiseCorrelation warp_and_correlate(const Tensor& src_feature, const Camera& ref, const Camera& src,
                                       const HypothesisSet& hyp, const Tensor& ref_feature, std::size_t groups,
                                       double intrinsic_scale) {
  if (src_feature.shape() != ref_feature.shape())
    throw DimensionError("source and reference features differ: " + shape_str(src_feature.shape()) + " vs " +
                         shape_str(ref_feature.shape()));
  const std::size_t H = ref_feature.dim(1), W = ref_feature.dim(2);
  Tensor coords = warp_coords(ref, src, hyp, H, W, intrinsic_scale);
  PairwiseCorrelation out;
  Tensor warped = grid_sample_bilinear(src_feature, coords, &out.valid);
  out.corr = group_correlation(ref_feature, warped, groups);
  return out;
}

Tensor view_weights(const Tensor& corr, double temperature) {
  if (!(temperature > 0.0)) throw ParameterError("temperature must be positive");
  if (corr.rank() != 4) throw DimensionError("view_weights expects (G,D,H,W)");
  return softmax_axis(scale(sum_axis(corr, 0), 1.0 / temperature), 0);
}

CostVolume aggregate(const std::vector<Tensor>& corrs, const std::vector<Tensor>& weights, int stage) {
  if (corrs.empty()) throw ParameterError("aggregation needs at least one source view");
  if (corrs.size() != weights.size()) throw DimensionError("one weight field per correlation required");
  Tensor num, den;
  for (std::size_t i = 0; i < corrs.size(); ++i) {
    const Tensor& w = weights[i];
    Tensor w4 = reshape(w, Shape{1, w.dim(0), w.dim(1), w.dim(2)});
    Tensor term = mul(w4, corrs[i]);
    num = num.defined() ? add(num, term) : term;
    den = den.defined() ? add(den, w4) : w4;
  }
  return {div(num, den), stage};
}

CvaParams make_cva_params(ParameterStore& store, const std::string& name, std::size_t prev_channels,
                          std::size_t curr_channels, std::size_t num_prev, std::size_t num_curr, Rng& rng) {
  CvaParams p;
  p.num_prev = num_prev;
  p.num_curr = num_curr;
  if (num_prev > 0) p.prev = make_conv_bn_relu2d(store, name + ".prev", prev_channels, num_prev, 3, 1, 1, rng);
  if (num_curr > 0) p.curr = make_conv_bn_relu2d(store, name + ".curr", curr_channels, num_curr, 3, 1, 1, rng);
  return p;
}

namespace {
Tensor flatten_gd(const Tensor& v) { return reshape(v, Shape{v.dim(0) * v.dim(1), v.dim(2), v.dim(3)}); }

Tensor replicate_over_depth(const Tensor& g, std::size_t D) {
  return broadcast_to(reshape(g, Shape{g.dim(0), 1, g.dim(1), g.dim(2)}), Shape{g.dim(0), D, g.dim(1), g.dim(2)});
}
}  // namespace

CostVolume cva_guidance(const CostVolume* previous, const CostVolume& current, CvaParams& params, Mode mode) {
  if (params.num_prev == 0 && params.num_curr == 0) return current;
  const Tensor& cur = current.data;
  const std::size_t D = cur.dim(1), H = cur.dim(2), W = cur.dim(3);
  std::vector<Tensor> parts{cur};
  if (params.num_prev > 0) {
    if (!previous) throw UsageError("cross-view guidance needs the previous stage cost volume");
    const Tensor& prev = previous->data;
    if (2 * prev.dim(2) != H || 2 * prev.dim(3) != W)
      throw DimensionError("previous cost volume must be half the current resolution");
    Tensor g = upsample_bilinear2x((*params.prev)(flatten_gd(prev), mode));
    parts.push_back(replicate_over_depth(g, D));
  }
  if (params.num_curr > 0) parts.push_back(replicate_over_depth((*params.curr)(flatten_gd(cur), mode), D));
  return {concat(parts, 0), current.stage};
}

}  // namespace icgmvs
