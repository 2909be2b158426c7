#include "icgmvs/trainer.hpp"

#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace icgmvs {

namespace {
std::atomic<std::size_t> g_empty_mask_warnings{0};
}

std::size_t GroundTruthStage::valid_count() const {
  std::size_t n = 0;
  for (unsigned char v : valid) n += v ? 1 : 0;
  return n;
}

Tensor downsample_nearest(const Tensor& gt, std::size_t factor) {
  if (gt.rank() != 2) throw DimensionError("depth map must be (H,W), got " + shape_str(gt.shape()));
  if (factor == 0) throw ParameterError("downsampling factor must be positive");
  const std::size_t H = gt.dim(0), W = gt.dim(1);
  if (H % factor || W % factor) throw DimensionError("depth map not divisible by downsampling factor");
  const std::size_t h = H / factor, w = W / factor;
  std::vector<double> out(h * w);
  auto src = gt.data();
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) out[y * w + x] = src[(y * factor) * W + x * factor];
  return Tensor(Shape{h, w}, std::move(out));
}

GroundTruthStage encode_gt(const Tensor& gt_depth, const HypothesisSet& hyp) {
  if (gt_depth.rank() != 2) throw DimensionError("GT depth must be (H,W)");
  const std::size_t H = gt_depth.dim(0), W = gt_depth.dim(1), D = hyp.count;
  if (!hyp.uniform && (hyp.height != H || hyp.width != W))
    throw DimensionError("GT resolution does not match the hypothesis field");
  GroundTruthStage out;
  out.gt_depth = gt_depth;
  out.valid.assign(H * W, 0);
  out.index.assign(H * W, 0);
  auto g = gt_depth.data();
  for (std::size_t y = 0; y < H; ++y)
    for (std::size_t x = 0; x < W; ++x) {
      const std::size_t i = y * W + x;
      const double d = g[i];
      if (!std::isfinite(d) || d <= 0.0) continue;
      if (d < hyp.at(0, y, x) || d > hyp.at(D - 1, y, x)) continue;
      std::size_t best = 0;
      double best_dist = std::abs(hyp.at(0, y, x) - d);
      for (std::size_t k = 1; k < D; ++k) {
        const double dist = std::abs(hyp.at(k, y, x) - d);
        if (dist < best_dist) {
          best_dist = dist;
          best = k;
        }
      }
      out.valid[i] = 1;
      out.index[i] = static_cast<int>(best);
    }
  return out;
}

Tensor pixelwise_ce(const Tensor& prob, const GroundTruthStage& gt) {
  if (prob.rank() != 3 || prob.dim(1) * prob.dim(2) != gt.valid.size())
    throw DimensionError("probability volume " + shape_str(prob.shape()) + " does not match GT");
  if (gt.valid_count() == 0) ++g_empty_mask_warnings;
  return nll_loss(prob, gt.index, gt.valid);
}

std::size_t empty_mask_warning_count() { return g_empty_mask_warnings.load(); }

Tensor total_loss(const std::vector<Tensor>& stage_losses, const std::array<double, kNumStages>& weights) {
  if (stage_losses.size() != kNumStages) throw ParameterError("total loss needs one loss per stage");
  Tensor acc = Tensor::scalar(0.0);
  for (std::size_t s = 0; s < kNumStages; ++s) {
    if (weights[s] < 0.0) throw ParameterError("stage weights must be non-negative");
    if (weights[s] == 0.0) continue;
    acc = add(acc, scale(stage_losses[s], weights[s]));
  }
  return acc;
}

void TrainConfig::validate() const {
  if (!(learning_rate >= 0.0)) throw ParameterError("learning rate must be non-negative");
  if (batch_size == 0) throw ParameterError("batch size must be positive");
  if (epochs == 0 && iterations == 0) throw ParameterError("nothing to train: epochs and iterations are both 0");
  for (double w : stage_weights)
    if (!(w >= 0.0)) throw ParameterError("stage weights must be non-negative");
  if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0)) throw ParameterError("Adam betas must be in [0,1)");
  if (!(adam_eps > 0.0)) throw ParameterError("Adam epsilon must be positive");
}

Adam::Adam(std::vector<Tensor> params, double lr, double beta1, double beta2, double eps)
    : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
  for (const auto& p : params_) {
    m_.emplace_back(p.numel(), 0.0);
    v_.emplace_back(p.numel(), 0.0);
  }
}

void Adam::step() {
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Tensor& p = params_[i];
    if (!p.has_grad()) continue;
    auto g = p.grad();
    auto w = p.mutable_data();
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t j = 0; j < w.size(); ++j) {
      m[j] = beta1_ * m[j] + (1.0 - beta1_) * g[j];
      v[j] = beta2_ * v[j] + (1.0 - beta2_) * g[j] * g[j];
      if (lr_ != 0.0) w[j] -= lr_ * (m[j] / c1) / (std::sqrt(v[j] / c2) + eps_);
    }
    p.zero_grad();
  }
}

SampleLoss sample_loss(IcgMvsNet& net, const MvsSample& sample, const std::array<double, kNumStages>& weights,
                       Mode mode) {
  NetworkOutput out = net.forward(sample.images, sample.cams, mode);
  SampleLoss res;
  std::vector<Tensor> losses;
  for (std::size_t s = 0; s < kNumStages; ++s) {
    const std::size_t factor = std::size_t{1} << (kNumStages - 1 - s);
    GroundTruthStage gt = encode_gt(downsample_nearest(sample.gt_depth, factor), out.stages[s].hypotheses);
    res.stage[s] = pixelwise_ce(out.stages[s].prob, gt);
    losses.push_back(res.stage[s]);
  }
  res.total = total_loss(losses, weights);
  return res;
}

std::vector<LossRecord> train(IcgMvsNet& net, const std::vector<MvsSample>& samples, const TrainConfig& config,
                              const TrainHooks& hooks) {
  config.validate();
  if (samples.empty()) throw DatasetError("training set is empty");
  std::vector<Tensor> params;
  for (const auto& p : net.parameters().parameters()) params.push_back(p.tensor);
  Adam opt(params, config.learning_rate, config.beta1, config.beta2, config.adam_eps);
  net.parameters().zero_grad();

  const std::size_t per_epoch = (samples.size() + config.batch_size - 1) / config.batch_size;
  const std::size_t total_iters = config.iterations > 0 ? config.iterations : config.epochs * per_epoch;
  std::vector<LossRecord> trace;
  trace.reserve(total_iters);
  std::size_t cursor = 0;
  for (std::size_t it = 0; it < total_iters; ++it) {
    LossRecord rec;
    rec.iteration = it;
    const double inv = 1.0 / static_cast<double>(config.batch_size);
    for (std::size_t b = 0; b < config.batch_size; ++b) {
      const MvsSample& sample = samples[cursor];
      cursor = (cursor + 1) % samples.size();
      try {
        SampleLoss sl = sample_loss(net, sample, config.stage_weights, Mode::Train);
        const double total = sl.total.item();
        if (!std::isfinite(total)) throw NumericError("non-finite loss");
        for (std::size_t s = 0; s < kNumStages; ++s) rec.stage[s] += sl.stage[s].item() * inv;
        rec.total += total * inv;
        if (sl.total.requires_grad()) scale(sl.total, inv).backward();
      } catch (const NumericError& e) {
        std::ostringstream msg;
        msg << "training diverged at iteration " << it << " on sample '" << sample.id << "' (lr "
            << config.learning_rate << ", step " << opt.steps() << "): " << e.what();
        throw NumericError(msg.str());
      }
    }
    opt.step();
    trace.push_back(rec);
    if (hooks.on_epoch && (it + 1) % per_epoch == 0) hooks.on_epoch((it + 1) / per_epoch - 1);
  }
  return trace;
}

void write_loss_csv(const std::string& path, const std::vector<LossRecord>& trace) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot write " + path);
  f << "iteration,loss_stage0,loss_stage1,loss_stage2,loss_stage3,total\n";
  f << std::setprecision(17);
  for (const auto& r : trace) {
    f << r.iteration;
    for (double s : r.stage) f << ',' << s;
    f << ',' << r.total << '\n';
  }
  if (!f) throw IoError("write failed: " + path);
}

std::vector<double> moving_average(const std::vector<double>& values, std::size_t window) {
  if (window == 0) throw ParameterError("window must be positive");
  std::vector<double> out;
  if (values.size() < window) return out;
  for (std::size_t i = window - 1; i < values.size(); ++i) {
    double s = 0.0;
    for (std::size_t j = i + 1 - window; j <= i; ++j) s += values[j];
    out.push_back(s / static_cast<double>(window));
  }
  return out;
}

}  // namespace icgmvs
