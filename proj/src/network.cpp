#include "icgmvs/network.hpp"

#include "icgmvs/util.hpp"

namespace icgmvs {

void NetworkConfig::validate() const {
  for (std::size_t s = 0; s < kNumStages; ++s) {
    if (depth_counts[s] < 2) throw ParameterError("each stage needs at least 2 hypotheses");
    if (depth_counts[s] % 4 != 0) throw ParameterError("hypothesis counts must be multiples of 4");
    if (groups[s] == 0 || channels[s] % groups[s] != 0)
      throw ParameterError("stage " + std::to_string(s) + ": channels not divisible by groups");
  }
  if (!(temperature > 0.0)) throw ParameterError("temperature must be positive");
  if (regularizer_base == 0) throw ParameterError("regularizer width must be positive");
}

IcgMvsNet::IcgMvsNet(const NetworkConfig& config, std::uint64_t seed) : config_(config) {
  config_.validate();
  FeatureNetConfig fc;
  fc.channels = config_.channels;
  fc.reduction = config_.reduction;
  fc.intra_view_fusion = config_.intra_view_fusion;
  features_ = std::make_unique<FeatureNet>(store_, "feature", fc, seed);
  for (std::size_t s = 1; s < kNumStages && config_.cross_view_aggregation; ++s) {
    const std::string name = "cva" + std::to_string(s);
    Rng rng(mix_seed(seed, name));
    cva_[s] = make_cva_params(store_, name, config_.groups[s - 1] * config_.depth_counts[s - 1],
                              config_.groups[s] * config_.depth_counts[s], config_.num_prev, config_.num_curr, rng);
  }
  for (std::size_t s = 0; s < kNumStages; ++s) {
    const bool guided = s > 0 && config_.cross_view_aggregation;
    const std::size_t in = config_.groups[s] + (guided ? config_.num_prev + config_.num_curr : 0);
    regularizers_.push_back(
        std::make_unique<Regularizer>(store_, "reg" + std::to_string(s), in, config_.regularizer_base, seed));
  }
}

NetworkOutput IcgMvsNet::forward(const std::vector<Tensor>& images, const std::vector<Camera>& cams, Mode mode) {
  if (images.size() < 2) throw ParameterError("need a reference and at least one source view");
  if (images.size() != cams.size()) throw ParameterError("one camera per image required");
  const std::size_t H = images[0].dim(1), W = images[0].dim(2);
  for (const auto& img : images)
    if (img.shape() != images[0].shape()) throw DimensionError("all views must share one resolution");
  const Camera& ref = cams[0];
  ref.validate();

  std::vector<FeaturePyramid> pyramids;
  pyramids.reserve(images.size());
  for (const auto& img : images) pyramids.push_back((*features_)(img, mode));

  NetworkOutput out;
  for (std::size_t s = 0; s < kNumStages; ++s) {
    StageOutput& st = out.stages[s];
    const std::size_t factor = std::size_t{1} << (kNumStages - 1 - s);
    const std::size_t h = H / factor, w = W / factor;
    st.intrinsic_scale = 1.0 / static_cast<double>(factor);
    st.hypotheses = s == 0 ? initial_hypotheses(ref.dmin, ref.dmax, config_.depth_counts[0])
                           : refine_hypotheses(out.stages[s - 1].depth.depth, out.stages[s - 1].hypotheses,
                                               config_.depth_counts[s], ref.dmin, ref.dmax);
    const Tensor& ref_feat = pyramids[0].levels[s];
    if (ref_feat.dim(1) != h || ref_feat.dim(2) != w) throw DimensionError("feature pyramid resolution mismatch");

    std::vector<Tensor> corrs;
    for (std::size_t v = 1; v < images.size(); ++v) {
      PairwiseCorrelation pc = warp_and_correlate(pyramids[v].levels[s], ref, cams[v], st.hypotheses, ref_feat,
                                                  config_.groups[s], st.intrinsic_scale);
      st.view_weights.push_back(view_weights(pc.corr, config_.temperature));
      corrs.push_back(pc.corr);
    }
    st.cost = aggregate(corrs, st.view_weights, static_cast<int>(s));
    CostVolume updated = (s == 0 || !config_.cross_view_aggregation) ? st.cost : cva_guidance(&out.stages[s - 1].cost, st.cost, cva_[s], mode);
    st.prob = (*regularizers_[s])(updated.data, mode);
    st.depth = wta_depth(st.prob, st.hypotheses);
  }
  return out;
}

}  // namespace icgmvs
