#pragma once

#include <Eigen/Dense>
#include <array>
#include <vector>

#include "icgmvs/camera.hpp"

namespace icgmvs {

struct FusionConfig {
  double conf_thresh = 0.5;
  double thresh_c = 1.0;   // pixels
  double thresh_d = 0.01;  // relative depth
  std::size_t min_consistent_views = 3;
  bool dynamic = false;
  bool average_points = true;

  void validate() const;
};

struct PointCloud {
  std::vector<Eigen::Vector3d> points;
  std::vector<std::array<double, 3>> colors;  // in [0, 1]
  std::vector<int> view;                      // source reference view
  std::vector<std::size_t> pixel;             // y * W + x in that view

  std::size_t size() const { return points.size(); }
  void append(const PointCloud& other);
};

// One depth map with everything fusion needs.
struct FusionView {
  Tensor depth;       // (H, W); <= 0 means no estimate
  Tensor confidence;  // (H, W)
  Tensor image;       // (3, H, W) in [0, 1]
  Camera cam;
};

std::vector<unsigned char> photometric_filter(const Tensor& confidence, double conf_thresh);

// Forward-backward reprojection of every reference pixel through a source
// depth map. `ok` is 0 where the source lookup is impossible (outside the
// image, behind the camera, or touching missing source depth); err_c and
// err_d are +inf there. `src_points` holds the 3D point lifted from the
// source depth.
struct GeometricCheck {
  std::vector<double> err_c;
  std::vector<double> err_d;
  std::vector<unsigned char> ok;
  std::vector<Eigen::Vector3d> src_points;
};

GeometricCheck geometric_check(const Camera& ref_cam, const Tensor& ref_depth, const Camera& src_cam,
                               const Tensor& src_depth);

// Fuses view `ref` against `sources` (indices into views).
PointCloud fuse_view(const std::vector<FusionView>& views, std::size_t ref, const std::vector<std::size_t>& sources,
                     const FusionConfig& cfg);

// Every view is a reference, checked against all others, or against
// sources[v] when given. Output is ordered by view id.
PointCloud fuse(const std::vector<FusionView>& views, const FusionConfig& cfg,
                const std::vector<std::vector<std::size_t>>* sources = nullptr);

}  // namespace icgmvs
