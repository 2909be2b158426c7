#pragma once

#include <string>
#include <utility>
#include <vector>

#include "icgmvs/camera.hpp"
#include "icgmvs/fusion.hpp"

namespace icgmvs {

// Zero-padded 8-digit view id, e.g. "00000003".
std::string view_name(std::size_t id);

std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& bytes);

// PFM greyscale ("Pf"): little-endian f32 written with scale -1, rows
// bottom-up. Reading accepts either byte order. Tensor is (H, W).
std::string encode_pfm(const Tensor& depth);
Tensor decode_pfm(const std::string& bytes);
void write_pfm(const std::string& path, const Tensor& depth);
Tensor read_pfm(const std::string& path);

// Binary PPM (P6, maxval 255). Tensor is (3, H, W) in [0, 1]; values are
// rounded to the nearest of 256 levels on write.
std::string encode_ppm(const Tensor& image);
Tensor decode_ppm(const std::string& bytes);
void write_ppm(const std::string& path, const Tensor& image);
Tensor read_ppm(const std::string& path);

// PLY vertices with float x, y, z and uchar red, green, blue.
std::string encode_ply(const PointCloud& cloud, bool binary);
PointCloud decode_ply(const std::string& bytes);
void write_ply(const std::string& path, const PointCloud& cloud, bool binary = true);
PointCloud read_ply(const std::string& path);

// Camera text: "extrinsic", 4x4 world-to-camera matrix, blank line,
// "intrinsic", 3x3 K, blank line, "dmin dmax".
std::string encode_camera(const Camera& cam);
Camera decode_camera(const std::string& text);
void write_camera(const std::string& path, const Camera& cam);
Camera read_camera(const std::string& path);

// View selection list: count, then per view its id and a line
// "k src score src score ...".
struct PairEntry {
  std::size_t ref = 0;
  std::vector<std::pair<std::size_t, double>> sources;
};
std::string encode_pair_file(const std::vector<PairEntry>& pairs);
std::vector<PairEntry> decode_pair_file(const std::string& text);
void write_pair_file(const std::string& path, const std::vector<PairEntry>& pairs);
std::vector<PairEntry> read_pair_file(const std::string& path);

struct ViewRecord {
  Tensor image;  // (3, H, W)
  Camera cam;
  Tensor depth;  // (H, W), undefined when the dataset has no GT
};

struct SceneRecord {
  std::string name;
  std::string path;
  std::vector<ViewRecord> views;
  std::vector<PairEntry> pairs;
};

// Sorted scene directories (those containing pair.txt) under `root`.
std::vector<std::string> list_scenes(const std::string& root);
SceneRecord load_scene(const std::string& scene_dir, bool require_depth);

}  // namespace icgmvs
