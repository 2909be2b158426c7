// Command-line front end: dataset synthesis, training, inference, fusion,
// evaluation and self checks.

#include <CLI11.hpp>
#include <filesystem>
#include <iostream>

#include "icgmvs/gradcheck.hpp"
#include "icgmvs/parallel.hpp"
#include "icgmvs/pipeline.hpp"
#include "icgmvs/selftest.hpp"

namespace fs = std::filesystem;
using namespace icgmvs;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitError = 1;
constexpr int kExitValidation = 2;

struct Globals {
  std::string config_path;
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::string out = "out";
  int threads = 0;
};

PipelineConfig resolve_config(const Globals& g) {
  PipelineConfig cfg = g.config_path.empty() ? PipelineConfig{} : load_config(g.config_path);
  if (g.seed_set) {
    cfg.seed = g.seed;
    cfg.train.seed = g.seed;
    cfg.data.synth.seed = g.seed;
  }
  if (g.threads > 0) cfg.threads = g.threads;
  cfg.validate();
  set_num_threads(cfg.threads);
  return cfg;
}

fs::path make_out(const Globals& g) {
  fs::path p(g.out);
  std::error_code ec;
  fs::create_directories(p, ec);
  if (ec) throw IoError("cannot create output directory " + p.string() + ": " + ec.message());
  return p;
}

std::vector<MvsSample> load_samples(const std::string& dataset, std::size_t num_views) {
  std::vector<MvsSample> all;
  for (const auto& dir : list_scenes(dataset)) {
    auto s = build_samples(load_scene(dir, true), num_views, true);
    all.insert(all.end(), s.begin(), s.end());
  }
  if (all.empty()) throw DatasetError("no scenes found under " + dataset);
  return all;
}

int cmd_synth(const Globals& g) {
  PipelineConfig cfg = resolve_config(g);
  const fs::path out = make_out(g);
  make_dataset(out.string(), cfg.data.synth);
  std::cout << "wrote " << cfg.data.synth.num_scenes << " scenes x " << cfg.data.synth.views_per_scene
            << " views to " << out.string() << "\n";
  return kExitOk;
}

int cmd_train(const Globals& g, const std::string& data) {
  PipelineConfig cfg = resolve_config(g);
  const fs::path out = make_out(g);
  std::vector<MvsSample> samples = load_samples(data.empty() ? cfg.data.dataset : data, cfg.data.num_views);
  IcgMvsNet net(cfg.network, cfg.seed);
  TrainHooks hooks;
  hooks.on_epoch = [&](std::size_t epoch) {
    save_checkpoint((out / ("checkpoint_epoch" + std::to_string(epoch) + ".icgw")).string(), net.parameters().all());
  };
  std::vector<LossRecord> trace = train(net, samples, cfg.train, hooks);
  save_checkpoint((out / "model.icgw").string(), net.parameters().all());
  write_loss_csv((out / "loss.csv").string(), trace);
  std::cout << "trained " << trace.size() << " iterations on " << samples.size() << " samples; final loss "
            << trace.back().total << "\n";
  return kExitOk;
}

int cmd_infer(const Globals& g, const std::string& data, const std::string& checkpoint) {
  PipelineConfig cfg = resolve_config(g);
  const fs::path out = make_out(g);
  IcgMvsNet net(cfg.network, cfg.seed);
  const std::string ckpt = checkpoint.empty() ? cfg.checkpoint : checkpoint;
  if (!ckpt.empty() && fs::exists(ckpt)) {
    load_checkpoint(ckpt, net.parameters());
  } else if (!checkpoint.empty()) {
    throw IoError("checkpoint not found: " + checkpoint);
  } else {
    std::cerr << "warning: no checkpoint, using seeded initialization\n";
  }
  auto results = run_inference(net, data.empty() ? cfg.data.dataset : data, cfg.data.num_views, out.string());
  std::cout << "wrote " << results.size() << " depth maps to " << out.string() << "\n";
  return kExitOk;
}

int cmd_fuse(const Globals& g, const std::string& data, const std::string& depth_dir, bool ascii) {
  PipelineConfig cfg = resolve_config(g);
  const fs::path out = make_out(g);
  for (const auto& dir : list_scenes(data.empty() ? cfg.data.dataset : data)) {
    SceneRecord scene = load_scene(dir, false);
    std::vector<FusionView> views;
    for (std::size_t v = 0; v < scene.views.size(); ++v) {
      const fs::path base = fs::path(depth_dir) / scene.name;
      const fs::path d = base / "depth" / (view_name(v) + ".pfm");
      const fs::path c = base / "confidence" / (view_name(v) + ".pfm");
      if (!fs::exists(d)) throw DatasetError("missing depth estimate " + d.string());
      Tensor depth = read_pfm(d.string());
      Tensor conf = fs::exists(c) ? read_pfm(c.string()) : Tensor(depth.shape(), 1.0);
      views.push_back({depth, conf, scene.views[v].image, scene.views[v].cam});
    }
    PointCloud cloud = fuse(views, cfg.fusion);
    const fs::path ply = out / (scene.name + ".ply");
    write_ply(ply.string(), cloud, !ascii);
    std::cout << scene.name << ": " << cloud.size() << " points -> " << ply.string() << "\n";
  }
  return kExitOk;
}

int cmd_eval_depth(const Globals& g, const std::string& data, const std::string& pred_dir) {
  PipelineConfig cfg = resolve_config(g);
  const fs::path out = make_out(g);
  std::vector<std::string> names;
  std::vector<DepthErrorReport> rows;
  for (const auto& dir : list_scenes(data.empty() ? cfg.data.dataset : data)) {
    SceneRecord scene = load_scene(dir, true);
    for (std::size_t v = 0; v < scene.views.size(); ++v) {
      const fs::path p = fs::path(pred_dir) / scene.name / "depth" / (view_name(v) + ".pfm");
      if (!fs::exists(p)) continue;
      const Tensor& gt = scene.views[v].depth;
      std::vector<unsigned char> mask(gt.numel());
      for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = gt[i] > 0.0 ? 1 : 0;
      names.push_back(scene.name + "/" + view_name(v));
      rows.push_back(depth_errors(read_pfm(p.string()), gt, mask));
    }
  }
  if (rows.empty()) throw DatasetError("no predicted depth maps found under " + pred_dir);
  write_file((out / "depth_report.csv").string(), depth_report_csv(names, rows));
  std::cout << depth_report_table(names, rows);
  return kExitOk;
}

int cmd_eval_cloud(const Globals& g, const std::string& recon, const std::string& gt, double tau) {
  PipelineConfig cfg = resolve_config(g);
  const fs::path out = make_out(g);
  const PointCloud a = read_ply(recon), b = read_ply(gt);
  const double t = tau > 0.0 ? tau : cfg.eval.tau;
  CloudMetricsReport c = cloud_distance_metrics(a.points, b.points, cfg.eval.outlier_cap);
  ThresholdReport th = threshold_metrics(a.points, b.points, t);
  write_file((out / "cloud_report.csv").string(), cloud_report_csv(c, th));
  std::cout << cloud_report_table(c, th);
  return kExitOk;
}

int cmd_gradcheck(const Globals& g, const std::string& ops, std::size_t instances, bool pipeline) {
  PipelineConfig cfg = resolve_config(g);
  std::vector<std::string> names;
  if (ops == "all") {
    names = gradcheck_op_names();
  } else {
    std::stringstream ss(ops);
    std::string item;
    while (std::getline(ss, item, ',')) names.push_back(item);
  }
  bool ok = true;
  auto print = [&](const GradcheckResult& r) {
    std::cout << (r.passed ? "PASS " : "FAIL ") << r.op << " max_rel_error=" << r.max_rel_error
              << " max_abs_error=" << r.max_abs_error << " coords=" << r.coordinates << "\n";
    ok = ok && r.passed;
  };
  for (const auto& n : names) print(gradcheck_op(n, cfg.seed, instances));
  if (pipeline) print(gradcheck_pipeline(cfg.seed));
  return ok ? kExitOk : kExitValidation;
}

int cmd_selftest(const Globals& g) {
  resolve_config(g);
  const fs::path out = make_out(g);
  bool ok = true;
  for (const auto& c : run_selftest((out / "selftest").string())) {
    std::cout << (c.passed ? "PASS " : "FAIL ") << c.name << (c.detail.empty() ? "" : ": " + c.detail) << "\n";
    ok = ok && c.passed;
  }
  return ok ? kExitOk : kExitValidation;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-view stereo depth estimation, fusion and evaluation"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--config", g.config_path, "Configuration file")->check(CLI::ExistingFile);
  app.add_option_function<std::uint64_t>(
      "--seed", [&](std::uint64_t s) { g.seed = s, g.seed_set = true; }, "Random seed");
  app.add_option("--out", g.out, "Output directory")->capture_default_str();
  app.add_option("--threads", g.threads, "Worker threads")->check(CLI::PositiveNumber);

  std::string data, depth_dir, checkpoint, recon, gt, ops = "all";
  double tau = 0.0;
  std::size_t instances = 20;
  bool ascii = false, pipeline = false;

  auto* synth = app.add_subcommand("synth", "Render a synthetic dataset into --out");
  auto* train = app.add_subcommand("train", "Train on a dataset; writes checkpoints and loss.csv");
  train->add_option("--data", data, "Dataset root (defaults to data.dataset)");
  auto* infer = app.add_subcommand("infer", "Estimate depth for every view of a dataset");
  infer->add_option("--data", data, "Dataset root");
  infer->add_option("--checkpoint", checkpoint, "Parameter file");
  auto* fuse = app.add_subcommand("fuse", "Fuse estimated depth maps into point clouds");
  fuse->add_option("--data", data, "Dataset root (images and cameras)");
  fuse->add_option("--depth", depth_dir, "Output directory of `infer`")->required();
  fuse->add_flag("--ascii", ascii, "Write ASCII PLY");
  auto* eval_depth = app.add_subcommand("eval-depth", "Depth error report against GT depth");
  eval_depth->add_option("--data", data, "Dataset root with GT depth");
  eval_depth->add_option("--pred", depth_dir, "Output directory of `infer`")->required();
  auto* eval_cloud = app.add_subcommand("eval-cloud", "Point cloud accuracy/completeness report");
  eval_cloud->add_option("--recon", recon, "Reconstructed PLY")->required()->check(CLI::ExistingFile);
  eval_cloud->add_option("--gt", gt, "Ground-truth PLY")->required()->check(CLI::ExistingFile);
  eval_cloud->add_option("--tau", tau, "Distance threshold (defaults to eval.tau)");
  auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference gradient checks");
  gradcheck->add_option("--ops", ops, "'all' or a comma-separated operator list")->capture_default_str();
  gradcheck->add_option("--instances", instances, "Random instances per operator")->capture_default_str();
  gradcheck->add_flag("--pipeline", pipeline, "Also check the full network loss");
  auto* selftest = app.add_subcommand("selftest", "Run contract examples as assertions");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitValidation;
  }

  try {
    if (*synth) return cmd_synth(g);
    if (*train) return cmd_train(g, data);
    if (*infer) return cmd_infer(g, data, checkpoint);
    if (*fuse) return cmd_fuse(g, data, depth_dir, ascii);
    if (*eval_depth) return cmd_eval_depth(g, data, depth_dir);
    if (*eval_cloud) return cmd_eval_cloud(g, recon, gt, tau);
    if (*gradcheck) return cmd_gradcheck(g, ops, instances, pipeline);
    if (*selftest) return cmd_selftest(g);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const ParameterError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitError;
  }
  return kExitError;
}
