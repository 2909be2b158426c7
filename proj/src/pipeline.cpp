#include "icgmvs/pipeline.hpp"

#include <filesystem>

namespace icgmvs {

std::vector<MvsSample> build_samples(const SceneRecord& scene, std::size_t num_views, bool require_depth) {
  if (num_views < 2) throw ParameterError("a sample needs a reference and at least one source view");
  std::vector<MvsSample> out;
  for (const auto& entry : scene.pairs) {
    if (entry.sources.size() < num_views - 1)
      throw DatasetError(scene.name + ": view " + view_name(entry.ref) + " lists " +
                         std::to_string(entry.sources.size()) + " sources, need " + std::to_string(num_views - 1));
    MvsSample s;
    s.id = scene.name + "/" + view_name(entry.ref);
    std::vector<std::size_t> ids{entry.ref};
    for (std::size_t k = 0; k + 1 < num_views; ++k) ids.push_back(entry.sources[k].first);
    for (std::size_t id : ids) {
      if (id >= scene.views.size()) throw DatasetError(scene.name + ": view " + view_name(id) + " is missing");
      s.images.push_back(scene.views[id].image);
      s.cams.push_back(scene.views[id].cam);
    }
    s.gt_depth = scene.views[entry.ref].depth;
    if (require_depth && !s.gt_depth.defined()) throw DatasetError(s.id + ": no GT depth");
    out.push_back(std::move(s));
  }
  return out;
}

InferenceResult infer_sample(IcgMvsNet& net, const MvsSample& sample) {
  NoGradGuard guard;
  NetworkOutput out = net.forward(sample.images, sample.cams, Mode::Eval);
  InferenceResult r;
  r.depth = out.stages[kNumStages - 1].depth;
  return r;
}

std::vector<InferenceResult> run_inference(IcgMvsNet& net, const std::string& dataset, std::size_t num_views,
                                           const std::string& out_dir) {
  namespace fs = std::filesystem;
  std::vector<InferenceResult> results;
  for (const std::string& dir : list_scenes(dataset)) {
    SceneRecord scene = load_scene(dir, false);
    const fs::path root = fs::path(out_dir) / scene.name;
    std::error_code ec;
    fs::create_directories(root / "depth", ec);
    fs::create_directories(root / "confidence", ec);
    if (ec) throw IoError("cannot create output directories under " + root.string());
    std::vector<MvsSample> samples = build_samples(scene, num_views, false);
    for (std::size_t i = 0; i < samples.size(); ++i) {
      InferenceResult r = infer_sample(net, samples[i]);
      r.scene = scene.name;
      r.view = scene.pairs[i].ref;
      write_pfm((root / "depth" / (view_name(r.view) + ".pfm")).string(), r.depth.depth);
      write_pfm((root / "confidence" / (view_name(r.view) + ".pfm")).string(), r.depth.confidence);
      results.push_back(std::move(r));
    }
  }
  return results;
}

}  // namespace icgmvs
