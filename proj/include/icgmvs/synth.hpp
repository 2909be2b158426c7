#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "icgmvs/camera.hpp"

namespace icgmvs {

// Solid (3D) textures, so a surface point has the same albedo from every view.
struct Texture {
  enum class Kind { Flat, Checker, Noise, CheckerNoise };
  Kind kind = Kind::Noise;
  Eigen::Vector3d color_a{0.9, 0.9, 0.9};
  Eigen::Vector3d color_b{0.1, 0.1, 0.1};
  double frequency = 4.0;  // cells or noise lattice points per scene unit
  std::uint64_t seed = 0;

  Eigen::Vector3d albedo(const Eigen::Vector3d& p) const;
};

// Smooth 3D value noise in [0, 1] with `octaves` halving amplitudes.
double value_noise(const Eigen::Vector3d& p, std::uint64_t seed, int octaves = 3);

struct Primitive {
  enum class Kind { Rectangle, Box, Sphere };
  Kind kind = Kind::Rectangle;
  // Rectangle: center, unit in-plane axes, half extents (may be infinite).
  // Box: axis-aligned [lo, hi]. Sphere: center, radius.
  Eigen::Vector3d center = Eigen::Vector3d::Zero();
  Eigen::Vector3d axis_u = Eigen::Vector3d::UnitX();
  Eigen::Vector3d axis_v = Eigen::Vector3d::UnitY();
  double half_u = std::numeric_limits<double>::infinity();
  double half_v = std::numeric_limits<double>::infinity();
  Eigen::Vector3d lo = Eigen::Vector3d::Zero();
  Eigen::Vector3d hi = Eigen::Vector3d::Zero();
  double radius = 0.0;
  Texture texture;

  static Primitive rectangle(const Eigen::Vector3d& center, const Eigen::Vector3d& u, const Eigen::Vector3d& v,
                             double half_u, double half_v, const Texture& tex);
  static Primitive box(const Eigen::Vector3d& lo, const Eigen::Vector3d& hi, const Texture& tex);
  static Primitive sphere(const Eigen::Vector3d& center, double radius, const Texture& tex);
};

struct Hit {
  double t = std::numeric_limits<double>::infinity();
  Eigen::Vector3d normal = Eigen::Vector3d::Zero();
  int primitive = -1;
};

// Nearest intersection with t > 0 along origin + t * dir.
Hit intersect(const Primitive& prim, const Eigen::Vector3d& origin, const Eigen::Vector3d& dir);

struct Scene {
  std::vector<Primitive> primitives;
  Eigen::Vector3d light_dir{0.3, -0.5, -0.8};  // direction towards the light
  double ambient = 0.35;

  Hit trace(const Eigen::Vector3d& origin, const Eigen::Vector3d& dir) const;
};

struct Render {
  Tensor image;                      // (3, H, W) in [0, 1]
  Tensor depth;                      // (H, W), 0 where the ray misses
  std::vector<unsigned char> valid;  // (H, W)
};

// One ray per pixel center; depth is the camera z of the nearest hit.
Render render(const Scene& scene, const Camera& cam, std::size_t H, std::size_t W);

// Rotation (world to camera) looking from `eye` towards `target`, image y down.
Camera look_at(const Eigen::Vector3d& eye, const Eigen::Vector3d& target, const Eigen::Matrix3d& K);

Eigen::Matrix3d default_intrinsics(std::size_t H, std::size_t W, double focal_scale = 1.0);

struct SceneOptions {
  std::size_t num_objects = 4;
  bool textureless_patch = true;
  double wall_depth = 2.0;  // wall plane z in world units
};

// Textured back wall, random boxes and spheres, and an optional flat patch.
Scene random_scene(std::uint64_t seed, const SceneOptions& opt = {});

struct RigOptions {
  double radius = 5.0;     // camera distance to the look-at point
  double arc_deg = 40.0;   // total angular span of the arc
  double height = -0.4;    // camera y offset (y points down)
  double focal_scale = 1.0;
};

// Cameras evenly spaced on a horizontal arc facing the origin.
std::vector<Camera> arc_cameras(std::size_t n, std::size_t H, std::size_t W, const RigOptions& rig = {});

// Sets dmin/dmax from the valid GT depths with a relative margin.
void fit_depth_range(Camera& cam, const Tensor& depth, double margin = 0.05);

// Fraction of `ref` pixels with GT that are visible (inside, not occluded)
// in `src`, using both GT depth maps.
double view_overlap(const Camera& ref, const Tensor& ref_depth, const Camera& src, const Tensor& src_depth);

struct DatasetSpec {
  std::size_t num_scenes = 4;
  std::size_t views_per_scene = 5;
  std::size_t height = 64;
  std::size_t width = 80;
  std::uint64_t seed = 1;
  SceneOptions scene;
  RigOptions rig;
};

struct SyntheticView {
  Tensor image;
  Tensor depth;
  Camera cam;
};

struct SyntheticScene {
  std::string name;
  std::vector<SyntheticView> views;
  std::vector<std::vector<std::pair<std::size_t, double>>> pairs;  // per view: ranked (source, score)
};

SyntheticScene make_scene(const DatasetSpec& spec, std::size_t index);

// Writes scene_NNN/{images/*.ppm, cams/*_cam.txt, depths/*.pfm, pair.txt}.
void make_dataset(const std::string& dir, const DatasetSpec& spec);

}  // namespace icgmvs
