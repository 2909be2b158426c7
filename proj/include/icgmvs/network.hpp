#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <vector>

#include "icgmvs/camera.hpp"
#include "icgmvs/cost_volume.hpp"
#include "icgmvs/feature_net.hpp"
#include "icgmvs/regularizer.hpp"

namespace icgmvs {

struct NetworkConfig {
  std::array<std::size_t, kNumStages> depth_counts{8, 8, 4, 4};
  std::array<std::size_t, kNumStages> groups{8, 8, 4, 4};
  std::array<std::size_t, kNumStages> channels{32, 16, 8, 8};
  double temperature = 2.0;
  std::size_t num_prev = 1;  // CVA channels from the previous stage
  std::size_t num_curr = 1;  // CVA channels from the current stage
  std::size_t reduction = 4;
  std::size_t regularizer_base = 8;
  bool intra_view_fusion = true;
  bool cross_view_aggregation = true;  // false bypasses the guidance step entirely

  void validate() const;
};

struct StageOutput {
  HypothesisSet hypotheses;
  CostVolume cost;  // aggregated, before cross-view guidance
  std::vector<Tensor> view_weights;
  Tensor prob;      // (D, H, W)
  DepthMap depth;
  double intrinsic_scale = 1.0;
};

struct NetworkOutput {
  std::array<StageOutput, kNumStages> stages;
};

// Four-stage coarse-to-fine MVS network. View 0 is the reference.
class IcgMvsNet {
 public:
  IcgMvsNet(const NetworkConfig& config, std::uint64_t seed);
  IcgMvsNet(const IcgMvsNet&) = delete;
  IcgMvsNet& operator=(const IcgMvsNet&) = delete;

  // images: (3, H, W) each, H and W divisible by 8; cams: full-resolution.
  // The reference camera's depth range bounds every stage.
  NetworkOutput forward(const std::vector<Tensor>& images, const std::vector<Camera>& cams, Mode mode);

  ParameterStore& parameters() { return store_; }
  const ParameterStore& parameters() const { return store_; }
  const NetworkConfig& config() const { return config_; }

 private:
  NetworkConfig config_;
  ParameterStore store_;
  std::unique_ptr<FeatureNet> features_;
  std::array<CvaParams, kNumStages> cva_;  // stage 0 unused
  std::vector<std::unique_ptr<Regularizer>> regularizers_;
};

}  // namespace icgmvs
