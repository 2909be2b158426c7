#include "icgmvs/camera.hpp"

#include <algorithm>
#include <cmath>


namespace icgmvs {

void Camera::validate() const {
  const double tol = 1e-9;
  if (!K.allFinite() || !R.allFinite() || !t.allFinite()) throw ParameterError("camera has non-finite entries");
  if ((R * R.transpose() - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() > tol ||
      std::abs(R.determinant() - 1.0) > tol)
    throw ParameterError("camera rotation is not orthonormal with det 1");
  if (K(1, 0) != 0.0 || K(2, 0) != 0.0 || K(2, 1) != 0.0 || K(2, 2) != 1.0)
    throw ParameterError("intrinsic matrix must be upper triangular with K(2,2) = 1");
  if (!(K(0, 0) > 0.0 && K(1, 1) > 0.0)) throw ParameterError("focal lengths must be positive");
  if (!(dmin > 0.0 && dmin < dmax)) throw ParameterError("depth range must satisfy 0 < dmin < dmax");
}

Camera Camera::scaled(double s) const {
  Camera c = *this;
  c.K.row(0) *= s;
  c.K.row(1) *= s;
  return c;
}

Eigen::Vector3d Camera::unproject(double u, double v, double depth) const {
  Eigen::Vector3d ray = K.triangularView<Eigen::Upper>().solve(Eigen::Vector3d(u, v, 1.0));
  Eigen::Vector3d cam = ray * depth;
  return R.transpose() * (cam - t);
}

Eigen::Vector3d Camera::project(const Eigen::Vector3d& world) const {
  Eigen::Vector3d cam = R * world + t;
  Eigen::Vector3d px = K * cam;
  return {px.x() / px.z(), px.y() / px.z(), cam.z()};
}

namespace {
void check_intrinsics(const Eigen::Matrix3d& K) {
  if (!(std::abs(K.determinant()) > 1e-300) || !(K(0, 0) > 0.0) || !(K(1, 1) > 0.0))
    throw ParameterError("singular intrinsic matrix");
}
}  // namespace

Eigen::Matrix3d homography(const Camera& ref, const Camera& src, double depth) {
  if (!(depth > 0.0)) throw ParameterError("homography depth must be positive");
  check_intrinsics(ref.K);
  check_intrinsics(src.K);
  const Eigen::Matrix3d rel_R = src.R * ref.R.transpose();
  const Eigen::Vector3d rel_t = src.t - rel_R * ref.t;
  const Eigen::RowVector3d n(0.0, 0.0, 1.0);
  Eigen::Matrix3d plane = rel_R + rel_t * n / depth;
  return src.K * plane * ref.K.inverse();
}

Tensor HypothesisSet::as_tensor(std::size_t H, std::size_t W) const {
  std::vector<double> v(count * H * W);
  if (!uniform && (H != height || W != width))
    throw DimensionError("per-pixel hypotheses do not match requested resolution");
  for (std::size_t k = 0; k < count; ++k)
    for (std::size_t y = 0; y < H; ++y)
      for (std::size_t x = 0; x < W; ++x) v[(k * H + y) * W + x] = at(k, y, x);
  return Tensor(Shape{count, H, W}, std::move(v));
}

HypothesisSet initial_hypotheses(double dmin, double dmax, std::size_t count) {
  if (count < 2) throw ParameterError("need at least 2 depth hypotheses");
  if (!(dmin > 0.0) || !(dmax > dmin)) throw ParameterError("invalid depth range");
  HypothesisSet h;
  h.stage = 0;
  h.count = count;
  h.uniform = true;
  h.spacing = (dmax - dmin) / static_cast<double>(count - 1);
  h.values.resize(count);
  for (std::size_t k = 0; k < count; ++k) h.values[k] = dmin + static_cast<double>(k) * h.spacing;
  h.values.back() = dmax;
  return h;
}

HypothesisSet refine_hypotheses(const Tensor& center, const HypothesisSet& previous, std::size_t count, double dmin,
                                double dmax) {
  if (center.rank() != 2) throw DimensionError("hypothesis center must be (H,W)");
  if (count < 2) throw ParameterError("need at least 2 depth hypotheses");
  // Fine pixel (y, x) samples the coarse map at (y / 2, x / 2), clamped at the last row and column.
  const std::size_t ch = center.dim(0), cw = center.dim(1);
  const auto cd = center.data();
  std::vector<double> c(4 * ch * cw);
  for (std::size_t y = 0; y < 2 * ch; ++y) {
    const std::size_t y0 = std::min(y / 2, ch - 1), y1 = std::min(y0 + 1, ch - 1);
    const double fy = y % 2 == 1 && y0 + 1 < ch ? 0.5 : 0.0;
    for (std::size_t x = 0; x < 2 * cw; ++x) {
      const std::size_t x0 = std::min(x / 2, cw - 1), x1 = std::min(x0 + 1, cw - 1);
      const double fx = x % 2 == 1 && x0 + 1 < cw ? 0.5 : 0.0;
      c[y * 2 * cw + x] = (1.0 - fy) * ((1.0 - fx) * cd[y0 * cw + x0] + fx * cd[y0 * cw + x1]) +
                          fy * ((1.0 - fx) * cd[y1 * cw + x0] + fx * cd[y1 * cw + x1]);
    }
  }
  HypothesisSet h;
  h.stage = previous.stage + 1;
  h.count = count;
  h.uniform = false;
  h.height = 2 * ch;
  h.width = 2 * cw;
  h.spacing = previous.spacing / 2.0;
  const double half = 0.5 * static_cast<double>(count - 1) * h.spacing;
  const double span = 2.0 * half;
  const std::size_t HW = h.height * h.width;
  h.values.resize(count * HW);
  for (std::size_t p = 0; p < HW; ++p) {
    double start = c[p] - half;
    if (start + span > dmax) start = dmax - span;
    if (start < dmin) start = dmin;
    for (std::size_t k = 0; k < count; ++k) h.values[k * HW + p] = start + static_cast<double>(k) * h.spacing;
  }
  return h;
}

Tensor warp_coords(const Camera& ref, const Camera& src, const HypothesisSet& hyp, std::size_t H, std::size_t W,
                   double intrinsic_scale) {
  if (!hyp.uniform && (hyp.height != H || hyp.width != W))
    throw DimensionError("hypothesis resolution does not match warp resolution");
  const Camera r = ref.scaled(intrinsic_scale);
  const Camera s = src.scaled(intrinsic_scale);
  check_intrinsics(r.K);
  check_intrinsics(s.K);
  const Eigen::Matrix3d rel_R = s.R * r.R.transpose();
  const Eigen::Vector3d rel_t = s.t - rel_R * r.t;
  // Source pixel of depth d along the ray of p: K_s (rel_R * ray(p) * d + rel_t).
  // Dividing by d: a(p) + b / d with a = K_s rel_R ray(p), b = K_s rel_t.
  const Eigen::Matrix3d A = s.K * rel_R * r.K.inverse();
  const Eigen::Vector3d b = s.K * rel_t;
  const std::size_t D = hyp.count;
  const std::size_t N = D * H * W;
  constexpr double kOutside = -1.0e6;
  std::vector<double> out(2 * N);
  for (std::size_t y = 0; y < H; ++y)
    for (std::size_t x = 0; x < W; ++x) {
      const Eigen::Vector3d a = A * Eigen::Vector3d(static_cast<double>(x), static_cast<double>(y), 1.0);
      for (std::size_t k = 0; k < D; ++k) {
        const double d = hyp.at(k, y, x);
        const Eigen::Vector3d q = a + b / d;
        const std::size_t i = (k * H + y) * W + x;
        if (q.z() > 1e-12) {
          out[i] = q.x() / q.z();
          out[N + i] = q.y() / q.z();
        } else {
          out[i] = kOutside;
          out[N + i] = kOutside;
        }
      }
    }
  return Tensor(Shape{2, D, H, W}, std::move(out));
}

}  // namespace icgmvs
