#include <cmath>
#include <filesystem>

#include "doctest.h"
#include "icgmvs/io.hpp"
#include "icgmvs/synth.hpp"
#include "icgmvs/trainer.hpp"

using namespace icgmvs;
namespace fs = std::filesystem;

namespace {

MvsSample tiny_sample(std::uint64_t seed, std::size_t size = 16) {
  DatasetSpec spec;
  spec.views_per_scene = 2;
  spec.height = size;
  spec.width = size;
  spec.seed = seed;
  SyntheticScene sc = make_scene(spec, 0);
  MvsSample s;
  s.id = sc.name;
  for (const auto& v : sc.views) {
    s.images.push_back(v.image);
    s.cams.push_back(v.cam);
  }
  s.gt_depth = sc.views[0].depth;
  return s;
}

}  // namespace

TEST_CASE("nearest downsampling samples the top-left of each block") {
  Tensor gt(Shape{4, 4});
  for (std::size_t i = 0; i < 16; ++i) gt.mutable_data()[i] = static_cast<double>(i);
  Tensor d = downsample_nearest(gt, 2);
  CHECK(d.shape() == Shape({2, 2}));
  CHECK(d[0] == 0.0);
  CHECK(d[1] == 2.0);
  CHECK(d[2] == 8.0);
  CHECK(d[3] == 10.0);
  CHECK_THROWS_AS(downsample_nearest(gt, 3), DimensionError);
}

TEST_CASE("GT encoding matches a brute-force nearest bin") {
  Rng rng(1);
  const HypothesisSet h0 = initial_hypotheses(1.0, 5.0, 8);
  Tensor center = random_uniform({3, 3}, rng, 1.0, 5.0);
  const HypothesisSet h = refine_hypotheses(center, h0, 4, 1.0, 5.0);
  Tensor gt = random_uniform({6, 6}, rng, 0.5, 5.5);
  gt.mutable_data()[0] = -1.0;
  gt.mutable_data()[1] = 0.0;
  GroundTruthStage g = encode_gt(gt, h);
  for (std::size_t y = 0; y < 6; ++y)
    for (std::size_t x = 0; x < 6; ++x) {
      const std::size_t i = y * 6 + x;
      const double d = gt[i];
      const bool inside = d > 0.0 && d >= h.at(0, y, x) && d <= h.at(3, y, x);
      CHECK(static_cast<bool>(g.valid[i]) == inside);
      if (!inside) continue;
      std::size_t best = 0;
      for (std::size_t k = 1; k < 4; ++k)
        if (std::abs(h.at(k, y, x) - d) < std::abs(h.at(best, y, x) - d)) best = k;
      CHECK(g.index[i] == static_cast<int>(best));
    }
  CHECK_FALSE(g.valid[0]);
  CHECK_FALSE(g.valid[1]);
}

TEST_CASE("cross entropy gradient w.r.t. logits is (softmax - onehot) / |valid|") {
  Rng rng(2);
  Tensor logits = random_uniform({4, 2, 3}, rng, -2, 2);
  logits.set_requires_grad(true);
  const HypothesisSet h = initial_hypotheses(1.0, 4.0, 4);
  Tensor gt(Shape{2, 3}, std::vector<double>{1.0, 2.2, 3.9, 0.0, 2.6, 1.4});
  GroundTruthStage g = encode_gt(gt, h);
  REQUIRE(g.valid_count() == 5);
  Tensor p = softmax_axis(logits, 0);
  pixelwise_ce(p, g).backward();
  for (std::size_t k = 0; k < 4; ++k)
    for (std::size_t i = 0; i < 6; ++i) {
      const double expected = g.valid[i] ? (p[k * 6 + i] - (g.index[i] == static_cast<int>(k) ? 1.0 : 0.0)) / 5.0 : 0.0;
      CHECK(logits.grad()[k * 6 + i] == doctest::Approx(expected).epsilon(1e-10));
    }
}

TEST_CASE("an all-invalid mask gives zero loss and a warning") {
  const std::size_t before = empty_mask_warning_count();
  GroundTruthStage g = encode_gt(Tensor(Shape{1, 2}, 0.0), initial_hypotheses(1.0, 2.0, 4));
  CHECK(pixelwise_ce(Tensor(Shape{4, 1, 2}, 0.25), g).item() == 0.0);
  CHECK(empty_mask_warning_count() == before + 1);
}

TEST_CASE("total loss weights stages") {
  std::vector<Tensor> l{Tensor::scalar(1), Tensor::scalar(2), Tensor::scalar(3), Tensor::scalar(4)};
  CHECK(total_loss(l, {0.5, 1, 0, 2}).item() == 10.5);
  CHECK_THROWS_AS(total_loss(l, {1, -1, 1, 1}), ParameterError);
}

TEST_CASE("adam follows the bias-corrected update") {
  Tensor w = Tensor::from({1.0});
  w.set_requires_grad(true);
  Adam opt({w}, 0.1, 0.9, 0.999, 1e-8);
  square(w).backward();  // g = 2
  opt.step();
  // first step: m_hat = g, v_hat = g^2 -> w -= lr * g / (|g| + eps)
  CHECK(w[0] == doctest::Approx(1.0 - 0.1 * 2.0 / (2.0 + 1e-8)).epsilon(1e-14));
  CHECK(w.grad()[0] == 0.0);
  Tensor untouched = Tensor::from({3.0});
  untouched.set_requires_grad(true);
  Adam idle({untouched}, 0.1, 0.9, 0.999, 1e-8);
  idle.step();
  CHECK(untouched[0] == 3.0);
}

TEST_CASE("training config validation") {
  TrainConfig c;
  CHECK_NOTHROW(c.validate());
  c.batch_size = 0;
  CHECK_THROWS_AS(c.validate(), ParameterError);
  c = TrainConfig{};
  c.epochs = 0;
  CHECK_THROWS_AS(c.validate(), ParameterError);
  c.iterations = 3;
  CHECK_NOTHROW(c.validate());
  c.beta1 = 1.0;
  CHECK_THROWS_AS(c.validate(), ParameterError);
}

TEST_CASE("moving average") {
  CHECK(moving_average({1, 2, 3, 4}, 2) == std::vector<double>{1.5, 2.5, 3.5});
  CHECK(moving_average({1, 2}, 3).empty());
  CHECK_THROWS_AS(moving_average({1}, 0), ParameterError);
}

TEST_CASE("training is deterministic, lowers the loss and writes a loss trace") {
  const std::vector<MvsSample> samples{tiny_sample(1)};
  TrainConfig cfg;
  cfg.iterations = 6;
  cfg.learning_rate = 1e-2;
  std::vector<std::vector<LossRecord>> runs;
  for (int r = 0; r < 2; ++r) {
    IcgMvsNet net(NetworkConfig{}, 4);
    runs.push_back(train(net, samples, cfg));
  }
  REQUIRE(runs[0].size() == 6);
  for (std::size_t i = 0; i < 6; ++i) CHECK(runs[0][i].total == runs[1][i].total);
  CHECK(runs[0].back().total < runs[0].front().total);

  std::size_t epochs = 0;
  TrainConfig by_epoch;
  by_epoch.epochs = 2;
  by_epoch.batch_size = 2;
  IcgMvsNet net(NetworkConfig{}, 4);
  auto trace = train(net, {tiny_sample(1), tiny_sample(2), tiny_sample(3)}, by_epoch,
                     TrainHooks{[&](std::size_t) { ++epochs; }});
  CHECK(trace.size() == 4);
  CHECK(epochs == 2);

  const fs::path dir = fs::temp_directory_path() / "icgmvs_trainer_test";
  fs::create_directories(dir);
  write_loss_csv((dir / "loss.csv").string(), runs[0]);
  const std::string csv = read_file((dir / "loss.csv").string());
  CHECK(csv.rfind("iteration,loss_stage0,loss_stage1,loss_stage2,loss_stage3,total\n", 0) == 0);
  fs::remove_all(dir);
  CHECK_THROWS_AS(train(net, {}, cfg), DatasetError);
}
