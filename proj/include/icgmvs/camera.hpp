#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <vector>

#include "icgmvs/tensor.hpp"

namespace icgmvs {

// Pinhole camera. Extrinsics map world to camera: X_cam = R * X_world + t.
// Pixel coordinates put integer values at pixel centers.
struct Camera {
  Eigen::Matrix3d K = Eigen::Matrix3d::Identity();
  Eigen::Matrix3d R = Eigen::Matrix3d::Identity();
  Eigen::Vector3d t = Eigen::Vector3d::Zero();
  double dmin = 0.1;
  double dmax = 10.0;

  // Throws ParameterError unless R is a rotation, K is a valid intrinsic
  // matrix, and 0 < dmin < dmax.
  void validate() const;

  // Intrinsics for an image resampled by `s` (focal lengths and principal point scale).
  Camera scaled(double s) const;

  Eigen::Vector3d center() const { return -R.transpose() * t; }
  // World point seen at pixel (u, v) with z-depth `depth` in this camera.
  Eigen::Vector3d unproject(double u, double v, double depth) const;
  // (u, v, depth) of a world point.
  Eigen::Vector3d project(const Eigen::Vector3d& world) const;

  bool operator==(const Camera& o) const {
    return K == o.K && R == o.R && t == o.t && dmin == o.dmin && dmax == o.dmax;
  }
};

// Plane-induced homography for the fronto-parallel plane z = depth of the
// reference camera: maps homogeneous reference pixels to source pixels.
//   H = K_s (R_s R_r^T + (t_s - R_s R_r^T t_r) n^T / depth) K_r^{-1},  n = (0, 0, 1)
Eigen::Matrix3d homography(const Camera& ref, const Camera& src, double depth);

// Depth candidates of one cascade stage: either one shared list (stage 0) or
// a (D, H, W) per-pixel field.
struct HypothesisSet {
  int stage = 0;
  double spacing = 0.0;
  std::size_t count = 0;
  std::size_t height = 1, width = 1;
  bool uniform = true;
  std::vector<double> values;  // count, or count * height * width (depth-major)

  double at(std::size_t k, std::size_t y, std::size_t x) const {
    return uniform ? values[k] : values[(k * height + y) * width + x];
  }
  // Dense (D, H, W) tensor at the given resolution; per-pixel sets must match it.
  Tensor as_tensor(std::size_t H, std::size_t W) const;
};

// Inclusive linspace over [dmin, dmax].
HypothesisSet initial_hypotheses(double dmin, double dmax, std::size_t count);

// Narrows the set around a (H, W) depth map: the map is bilinearly upsampled
// 2x (fine pixel y reads coarse y / 2, matching the scaled-intrinsics pixel
// grid), spacing halves, and each window is shifted to stay in [dmin, dmax].
HypothesisSet refine_hypotheses(const Tensor& center, const HypothesisSet& previous, std::size_t count, double dmin,
                                double dmax);

// Source-image sampling coordinates (2, D, H, W) for every reference pixel and
// hypothesis, with both cameras' intrinsics scaled by `intrinsic_scale`.
// Points behind the source camera get coordinates far outside the image.
Tensor warp_coords(const Camera& ref, const Camera& src, const HypothesisSet& hyp, std::size_t H, std::size_t W,
                   double intrinsic_scale = 1.0);

}  // namespace icgmvs
