#include <filesystem>

#include "doctest.h"
#include "icgmvs/pipeline.hpp"

using namespace icgmvs;

namespace fs = std::filesystem;

TEST_CASE("ini parsing: sections, comments and last assignment") {
  auto m = parse_ini("seed = 3\n# comment\n[train]\niterations = 5 # trailing\niterations=7\n\n[fusion]\ndynamic = true\n");
  CHECK(m.at("seed") == "3");
  CHECK(m.at("train.iterations") == "7");
  CHECK(m.at("fusion.dynamic") == "true");
  CHECK_THROWS_AS(parse_ini("[train\n"), ParseError);
  CHECK_THROWS_AS(parse_ini("novalue\n"), ParseError);
}

TEST_CASE("unknown keys list the valid ones") {
  PipelineConfig c;
  try {
    apply_config(c, {{"train.nonsense", "1"}});
    FAIL("expected UsageError");
  } catch (const UsageError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("train.nonsense") != std::string::npos);
    CHECK(msg.find("train.iterations") != std::string::npos);
  }
}

TEST_CASE("config seed propagates and dump round trips") {
  PipelineConfig c;
  apply_config(c, parse_ini("seed = 42\n[network]\ntemperature = 1.5\n[fusion]\nmin_consistent_views = 2\n"));
  CHECK(c.seed == 42);
  CHECK(c.train.seed == 42);
  CHECK(c.data.synth.seed == 42);
  CHECK(c.network.temperature == 1.5);
  PipelineConfig d;
  apply_config(d, parse_ini(dump_config(c)));
  CHECK(dump_config(d) == dump_config(c));
  CHECK_FALSE(config_keys().empty());
}

TEST_CASE("bad values are rejected") {
  PipelineConfig c;
  CHECK_THROWS(apply_config(c, {{"network.temperature", "abc"}}));
}

TEST_CASE("samples need enough ranked sources") {
  SceneRecord s;
  s.name = "scene";
  s.views.resize(2);
  s.pairs = {{0, {{1, 1.0}}}, {1, {{0, 1.0}}}};
  CHECK(build_samples(s, 2, false).size() == 2);
  CHECK_THROWS_AS(build_samples(s, 3, false), DatasetError);
  CHECK_THROWS_AS(build_samples(s, 1, false), ParameterError);
  CHECK_THROWS_AS(build_samples(s, 2, true), DatasetError);
}

TEST_CASE("inference writes depth and confidence for every view") {
  const fs::path dir = fs::temp_directory_path() / "icgmvs_pipeline_test";
  fs::remove_all(dir);
  DatasetSpec spec;
  spec.num_scenes = 1;
  spec.views_per_scene = 3;
  spec.height = 32;
  spec.width = 40;
  make_dataset((dir / "data").string(), spec);
  IcgMvsNet net(NetworkConfig{}, 1);
  for (std::size_t nv : {2, 3}) {
    auto results = run_inference(net, (dir / "data").string(), nv, (dir / "out").string());
    CHECK(results.size() == 3);
    for (const auto& r : results) {
      CHECK(r.depth.depth.dim(0) == 32);
      CHECK(r.depth.depth.dim(1) == 40);
      CHECK(fs::exists(dir / "out" / r.scene / "depth" / (view_name(r.view) + ".pfm")));
      CHECK(fs::exists(dir / "out" / r.scene / "confidence" / (view_name(r.view) + ".pfm")));
    }
  }
  fs::remove_all(dir);
}
