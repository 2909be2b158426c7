#include "icgmvs/selftest.hpp"

#include <cmath>
#include <filesystem>
#include <functional>
#include <sstream>

#include "icgmvs/pipeline.hpp"

namespace icgmvs {

namespace {

struct Failure {
  std::string what;
};

void expect(bool cond, const std::string& what) {
  if (!cond) throw Failure{what};
}

bool close(double a, double b, double tol) { return std::abs(a - b) <= tol; }

template <typename E>
void expect_throw(const std::function<void()>& f, const std::string& what) {
  try {
    f();
  } catch (const E&) {
    return;
  }
  throw Failure{what + ": expected exception"};
}

}  // namespace

std::vector<SelftestCase> run_selftest(const std::string& scratch_dir) {
  namespace fs = std::filesystem;
  std::vector<std::pair<std::string, std::function<void()>>> cases;

  cases.emplace_back("relu", [] {
    Tensor y = relu(Tensor::from({-1, 0, 2}));
    expect(y[0] == 0 && y[1] == 0 && y[2] == 2, "relu([-1,0,2])");
  });
  cases.emplace_back("softmax", [] {
    Tensor a = softmax_axis(Tensor::from({0, 0}), 0);
    expect(a[0] == 0.5 && a[1] == 0.5, "softmax([0,0])");
    Tensor b = softmax_axis(Tensor::from({0.0, std::log(3.0)}), 0);
    expect(close(b[0], 0.25, 1e-12) && close(b[1], 0.75, 1e-12), "softmax([ln1,ln3])");
    Tensor c = softmax_axis(Tensor::from({1000, 1000}), 0);
    expect(c[0] == 0.5 && c[1] == 0.5, "softmax([1000,1000])");
  });
  cases.emplace_back("grid_sample", [] {
    Tensor src(Shape{1, 1, 2}, std::vector<double>{0, 10});
    Tensor coords(Shape{2, 1, 1}, std::vector<double>{0.25, 0.0});
    expect(close(grid_sample_bilinear(src, coords)[0], 2.5, 1e-12), "x=0.25 -> 2.5");
    std::vector<unsigned char> valid;
    Tensor out = grid_sample_bilinear(src, Tensor(Shape{2, 1, 1}, std::vector<double>{-1, -1}), &valid);
    expect(out[0] == 0.0 && valid[0] == 0, "(-1,-1) -> 0, invalid");
  });
  cases.emplace_back("broadcast_mul", [] {
    Tensor y = mul(mul(Tensor(Shape{2, 3, 1}, 1.0), Tensor(Shape{2, 1, 4}, 1.0)), Tensor(Shape{2, 3, 4}, 1.0));
    expect(y.shape() == Shape({2, 3, 4}), "(C,H,1)x(C,1,W)x(C,H,W)");
  });
  cases.emplace_back("backward_square", [] {
    Tensor x = Tensor::from({1, 2});
    x.set_requires_grad(true);
    sum(square(x)).backward();
    expect(x.grad()[0] == 2 && x.grad()[1] == 4, "grad of sum(x^2)");
    expect_throw<UsageError>([&] { x.detach().backward(); }, "backward on detached tensor");
  });
  cases.emplace_back("homography_identity", [] {
    Camera c;
    c.K << 50, 0, 20, 0, 50, 15, 0, 0, 1;
    const Eigen::Matrix3d H = homography(c, c, 3.0);
    expect((H - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() <= 1e-12, "ref=src homography");
    expect_throw<ParameterError>([&] { homography(c, c, 0.0); }, "depth 0");
  });
  cases.emplace_back("hypotheses", [] {
    HypothesisSet h = initial_hypotheses(1.0, 8.0, 8);
    expect(h.values.front() == 1.0 && h.values.back() == 8.0 && close(h.spacing, 1.0, 1e-12), "linspace");
    expect_throw<ParameterError>([] { initial_hypotheses(1.0, 2.0, 1); }, "count 1");
  });
  cases.emplace_back("group_correlation", [] {
    expect_throw<ParameterError>(
        [] { group_correlation(Tensor(Shape{6, 1, 1}, 1.0), Tensor(Shape{6, 2, 1, 1}, 1.0), 4); }, "C % G != 0");
  });
  cases.emplace_back("encode_gt", [] {
    HypothesisSet h = initial_hypotheses(1.0, 8.0, 8);
    GroundTruthStage g = encode_gt(Tensor(Shape{1, 3}, std::vector<double>{4.0, 2.5, 9.0}), h);
    expect(g.index[0] == 3 && g.valid[0], "gt on hyp[3]");
    expect(g.index[1] == 1 && g.valid[1], "tie to smaller index");
    expect(!g.valid[2], "outside window excluded");
  });
  cases.emplace_back("pixelwise_ce", [] {
    HypothesisSet h = initial_hypotheses(1.0, 8.0, 8);
    GroundTruthStage g = encode_gt(Tensor(Shape{1, 1}, 3.0), h);
    Tensor uniform(Shape{8, 1, 1}, 1.0 / 8.0);
    expect(close(pixelwise_ce(uniform, g).item(), std::log(8.0), 1e-12), "uniform -> ln 8");
    std::vector<double> onehot(8, 0.0);
    onehot[2] = 1.0;
    expect(pixelwise_ce(Tensor(Shape{8, 1, 1}, onehot), g).item() == 0.0, "one-hot -> 0");
  });
  cases.emplace_back("total_loss", [] {
    std::vector<Tensor> l{Tensor::scalar(1), Tensor::scalar(2), Tensor::scalar(3), Tensor::scalar(4)};
    expect(total_loss(l, {1, 1, 1, 1}).item() == 10.0, "sum");
    expect(total_loss(l, {0, 0, 0, 1}).item() == 4.0, "stage 3 only");
    expect(total_loss(l, {0, 0, 0, 0}).item() == 0.0, "all zero");
  });
  cases.emplace_back("photometric_filter", [] {
    Tensor c(Shape{1, 2}, std::vector<double>{0.3, 0.7});
    auto m = photometric_filter(c, 0.5);
    expect(!m[0] && m[1], "threshold 0.5");
    auto all = photometric_filter(c, 0.0);
    expect(all[0] && all[1], "threshold 0");
    auto none = photometric_filter(c, 1.0 + 1e-9);
    expect(!none[0] && !none[1], "threshold 1+eps");
  });
  cases.emplace_back("depth_errors", [] {
    Tensor gt(Shape{1, 3}, 0.0);
    Tensor pred(Shape{1, 3}, std::vector<double>{0.5, 3.0, 20.0});
    DepthErrorReport r = depth_errors(pred, gt, {1, 1, 1});
    expect(close(r.ade, 23.5 / 3.0, 1e-12), "ade");
    expect(close(r.tde[0], 200.0 / 3.0, 1e-9) && close(r.tde[2], 100.0 / 3.0, 1e-9), "tde");
    DepthErrorReport same = depth_errors(gt, gt, {1, 1, 1});
    expect(same.ade == 0.0 && same.tde[0] == 0.0, "pred = gt");
  });
  cases.emplace_back("cloud_metrics", [] {
    std::vector<Eigen::Vector3d> a{{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {0, 0, 1}};
    CloudMetricsReport r = cloud_distance_metrics(a, a);
    expect(r.acc == 0 && r.comp == 0 && r.overall == 0, "recon = gt");
    ThresholdReport t = threshold_metrics(a, a, 0.5);
    expect(t.precision == 100 && t.recall == 100 && t.fscore == 100, "100/100/100");
    expect(close(scene_mean({81.73, 68.92, 56.59, 66.10, 64.86, 64.41, 62.33, 59.26}), 65.525, 1e-9), "scene mean");
    expect(fscore(0, 0) == 0.0, "fscore 0");
  });
  cases.emplace_back("synth_plane", [] {
    Scene s;
    s.primitives.push_back(Primitive::rectangle({0, 0, 3.0}, Eigen::Vector3d::UnitX(), Eigen::Vector3d::UnitY(), 100,
                                                100, Texture{}));
    Camera c;
    c.K = default_intrinsics(16, 16);
    Render r = render(s, c, 16, 16);
    for (double d : r.depth.data()) expect(d == 3.0, "fronto-parallel depth");
  });
  cases.emplace_back("file_round_trips", [scratch_dir] {
    fs::create_directories(scratch_dir);
    Tensor d(Shape{3, 5});
    auto v = d.mutable_data();
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<float>(0.37 * static_cast<double>(i) + 0.1);
    const std::string pfm = (fs::path(scratch_dir) / "rt.pfm").string();
    write_pfm(pfm, d);
    Tensor back = read_pfm(pfm);
    for (std::size_t i = 0; i < v.size(); ++i) expect(back[i] == v[i], "PFM round trip");
    PointCloud pc;
    pc.points.push_back(Eigen::Vector3d::Zero());
    pc.colors.push_back({1.0, 1.0, 1.0});
    for (bool binary : {false, true}) {
      PointCloud q = decode_ply(encode_ply(pc, binary));
      expect(q.size() == 1 && q.points[0] == Eigen::Vector3d::Zero() && q.colors[0][0] == 1.0, "PLY round trip");
    }
  });
  cases.emplace_back("config_unknown_key", [] {
    PipelineConfig cfg;
    expect_throw<UsageError>([&] { apply_config(cfg, parse_ini("[network]\nbogus = 1\n")); }, "unknown key");
  });

  std::vector<SelftestCase> out;
  for (auto& [name, fn] : cases) {
    SelftestCase c;
    c.name = name;
    try {
      fn();
      c.passed = true;
    } catch (const Failure& f) {
      c.detail = f.what;
    } catch (const std::exception& e) {
      c.detail = std::string("unexpected exception: ") + e.what();
    }
    out.push_back(std::move(c));
  }
  return out;
}

}  // namespace icgmvs
