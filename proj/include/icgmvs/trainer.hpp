#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "icgmvs/network.hpp"

namespace icgmvs {

// Per-stage training target.
struct GroundTruthStage {
  Tensor gt_depth;                   // (H, W)
  std::vector<unsigned char> valid;  // pixels with GT inside the hypothesis window
  std::vector<int> index;            // nearest hypothesis per pixel
  std::size_t valid_count() const;
};

// Nearest-neighbour downsampling: out(y, x) = gt(y * factor, x * factor).
Tensor downsample_nearest(const Tensor& gt, std::size_t factor);

// GT depths <= 0 or non-finite count as missing.
GroundTruthStage encode_gt(const Tensor& gt_depth, const HypothesisSet& hyp);

// Mean over valid pixels of -log P at the GT bin. Empty masks give 0 and bump
// a process-wide warning counter.
Tensor pixelwise_ce(const Tensor& prob, const GroundTruthStage& gt);
std::size_t empty_mask_warning_count();

Tensor total_loss(const std::vector<Tensor>& stage_losses, const std::array<double, kNumStages>& weights);

struct TrainConfig {
  double learning_rate = 1e-3;
  std::size_t epochs = 1;
  std::size_t iterations = 0;  // when > 0, overrides epochs
  std::size_t batch_size = 1;
  std::array<double, kNumStages> stage_weights{1.0, 1.0, 1.0, 1.0};
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t seed = 0;

  void validate() const;
};

class Adam {
 public:
  Adam(std::vector<Tensor> params, double lr, double beta1, double beta2, double eps);
  // Applies one update from the accumulated gradients, then clears them.
  void step();
  std::size_t steps() const { return t_; }

 private:
  std::vector<Tensor> params_;
  std::vector<std::vector<double>> m_, v_;
  double lr_, beta1_, beta2_, eps_;
  std::size_t t_ = 0;
};

// One reference view with its source views; views[0] is the reference.
struct MvsSample {
  std::string id;
  std::vector<Tensor> images;
  std::vector<Camera> cams;
  Tensor gt_depth;  // full resolution, reference view
};

struct LossRecord {
  std::size_t iteration = 0;
  std::array<double, kNumStages> stage{};
  double total = 0.0;
};

// Forward pass plus per-stage losses for one sample.
struct SampleLoss {
  std::array<Tensor, kNumStages> stage;
  Tensor total;
};
SampleLoss sample_loss(IcgMvsNet& net, const MvsSample& sample, const std::array<double, kNumStages>& weights,
                       Mode mode);

struct TrainHooks {
  // Called after each epoch with the epoch index (0-based).
  std::function<void(std::size_t)> on_epoch;
};

// Iterates over samples in a fixed cyclic order; every iteration is one
// optimizer step on `batch_size` consecutive samples (mean loss).
std::vector<LossRecord> train(IcgMvsNet& net, const std::vector<MvsSample>& samples, const TrainConfig& config,
                              const TrainHooks& hooks = {});

// CSV: iteration, loss_stage0..3, total.
void write_loss_csv(const std::string& path, const std::vector<LossRecord>& trace);

// Trailing moving average of `values` over `window` (first value at window-1).
std::vector<double> moving_average(const std::vector<double>& values, std::size_t window);

}  // namespace icgmvs
