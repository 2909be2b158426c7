#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "icgmvs/evaluation.hpp"
#include "icgmvs/fusion.hpp"
#include "icgmvs/io.hpp"
#include "icgmvs/network.hpp"
#include "icgmvs/synth.hpp"
#include "icgmvs/trainer.hpp"

namespace icgmvs {

struct DataConfig {
  std::string dataset = "data";
  std::size_t num_views = 3;  // reference + sources per sample
  DatasetSpec synth;
};

struct EvalConfig {
  double outlier_cap = 20.0;
  double tau = 0.5;
};

// Everything tunable, loadable from one INI-style file.
struct PipelineConfig {
  NetworkConfig network;
  TrainConfig train;
  FusionConfig fusion;
  DataConfig data;
  EvalConfig eval;
  std::string checkpoint = "model.icgw";
  std::uint64_t seed = 1;
  int threads = 1;

  void validate() const;
};

// "[section]" headers, "key = value" lines, '#' comments. Returns
// "section.key" -> value in file order of last assignment.
std::map<std::string, std::string> parse_ini(const std::string& text);

// Applies parsed entries; unknown keys raise UsageError listing the valid ones.
void apply_config(PipelineConfig& cfg, const std::map<std::string, std::string>& entries);
PipelineConfig load_config(const std::string& path);
std::vector<std::string> config_keys();
// Round-trippable text form of a config.
std::string dump_config(const PipelineConfig& cfg);

// One sample per reference view listed in the pair file, using its first
// num_views - 1 ranked sources.
std::vector<MvsSample> build_samples(const SceneRecord& scene, std::size_t num_views, bool require_depth);

struct InferenceResult {
  std::string scene;
  std::size_t view = 0;
  DepthMap depth;  // final-stage depth and confidence at full resolution
};

// Runs the cascade in eval mode without recording gradients.
InferenceResult infer_sample(IcgMvsNet& net, const MvsSample& sample);

// Processes every scene under `dataset`; writes
// out/<scene>/depth/<id>.pfm and out/<scene>/confidence/<id>.pfm.
std::vector<InferenceResult> run_inference(IcgMvsNet& net, const std::string& dataset, std::size_t num_views,
                                           const std::string& out_dir);

}  // namespace icgmvs
