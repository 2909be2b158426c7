#include "icgmvs/fusion.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "icgmvs/parallel.hpp"

namespace icgmvs {

void FusionConfig::validate() const {
  if (!(conf_thresh >= 0.0 && conf_thresh <= 1.0)) throw ParameterError("conf_thresh must be in [0,1]");
  if (!(thresh_c > 0.0) || !(thresh_d > 0.0)) throw ParameterError("thresh_c and thresh_d must be positive");
  if (min_consistent_views < 1) throw ParameterError("min_consistent_views must be at least 1");
}

void PointCloud::append(const PointCloud& other) {
  points.insert(points.end(), other.points.begin(), other.points.end());
  colors.insert(colors.end(), other.colors.begin(), other.colors.end());
  view.insert(view.end(), other.view.begin(), other.view.end());
  pixel.insert(pixel.end(), other.pixel.begin(), other.pixel.end());
}

std::vector<unsigned char> photometric_filter(const Tensor& confidence, double conf_thresh) {
  auto c = confidence.data();
  std::vector<unsigned char> mask(c.size());
  for (std::size_t i = 0; i < c.size(); ++i) mask[i] = c[i] >= conf_thresh ? 1 : 0;
  return mask;
}

namespace {

bool same_data(const Tensor& a, const Tensor& b) {
  if (a.impl() == b.impl()) return true;
  if (a.shape() != b.shape()) return false;
  auto x = a.data(), y = b.data();
  for (std::size_t i = 0; i < x.size(); ++i)
    if (x[i] != y[i]) return false;
  return true;
}

void check_depth(const Tensor& d) {
  if (d.rank() != 2) throw DimensionError("depth map must be (H,W), got " + shape_str(d.shape()));
}

}  // namespace

GeometricCheck geometric_check(const Camera& ref_cam, const Tensor& ref_depth, const Camera& src_cam,
                               const Tensor& src_depth) {
  check_depth(ref_depth);
  check_depth(src_depth);
  const std::size_t H = ref_depth.dim(0), W = ref_depth.dim(1);
  const std::size_t Hs = src_depth.dim(0), Ws = src_depth.dim(1);
  const double inf = std::numeric_limits<double>::infinity();
  GeometricCheck g;
  g.err_c.assign(H * W, inf);
  g.err_d.assign(H * W, inf);
  g.ok.assign(H * W, 0);
  g.src_points.assign(H * W, Eigen::Vector3d::Zero());
  auto rd = ref_depth.data();
  auto sd = src_depth.data();
  const bool identical = ref_cam == src_cam && same_data(ref_depth, src_depth);

  parallel_for(0, H, [&](std::size_t y) {
    for (std::size_t x = 0; x < W; ++x) {
      const std::size_t i = y * W + x;
      const double d = rd[i];
      if (!(d > 0.0)) continue;
      const Eigen::Vector3d X = ref_cam.unproject(static_cast<double>(x), static_cast<double>(y), d);
      if (identical) {
        g.err_c[i] = 0.0;
        g.err_d[i] = 0.0;
        g.ok[i] = 1;
        g.src_points[i] = X;
        continue;
      }
      const Eigen::Vector3d q = src_cam.project(X);
      if (!(q.z() > 0.0)) continue;
      const double u = q.x(), v = q.y();
      if (!(u >= 0.0 && v >= 0.0 && u <= static_cast<double>(Ws - 1) && v <= static_cast<double>(Hs - 1))) continue;
      const std::size_t x0 = std::min(static_cast<std::size_t>(u), Ws - 1);
      const std::size_t y0 = std::min(static_cast<std::size_t>(v), Hs - 1);
      const std::size_t x1 = std::min(x0 + 1, Ws - 1), y1 = std::min(y0 + 1, Hs - 1);
      const double fx = u - static_cast<double>(x0), fy = v - static_cast<double>(y0);
      const double d00 = sd[y0 * Ws + x0], d01 = sd[y0 * Ws + x1], d10 = sd[y1 * Ws + x0], d11 = sd[y1 * Ws + x1];
      if (!(d00 > 0.0 && d01 > 0.0 && d10 > 0.0 && d11 > 0.0)) continue;
      const double ds = (1 - fy) * ((1 - fx) * d00 + fx * d01) + fy * ((1 - fx) * d10 + fx * d11);
      const Eigen::Vector3d Xs = src_cam.unproject(u, v, ds);
      const Eigen::Vector3d p = ref_cam.project(Xs);
      if (!(p.z() > 0.0)) continue;
      g.err_c[i] = std::hypot(p.x() - static_cast<double>(x), p.y() - static_cast<double>(y));
      g.err_d[i] = std::abs(p.z() - d) / d;
      g.ok[i] = 1;
      g.src_points[i] = Xs;
    }
  });
  return g;
}

PointCloud fuse_view(const std::vector<FusionView>& views, std::size_t ref, const std::vector<std::size_t>& sources,
                     const FusionConfig& cfg) {
  cfg.validate();
  if (ref >= views.size()) throw ParameterError("reference view out of range");
  const FusionView& rv = views[ref];
  check_depth(rv.depth);
  const std::size_t H = rv.depth.dim(0), W = rv.depth.dim(1);
  if (rv.confidence.shape() != rv.depth.shape()) throw DimensionError("confidence must match depth");
  if (rv.image.rank() != 3 || rv.image.dim(0) != 3 || rv.image.dim(1) != H || rv.image.dim(2) != W)
    throw DimensionError("reference image must be (3,H,W) at depth resolution");

  std::vector<GeometricCheck> checks;
  for (std::size_t s : sources) {
    if (s >= views.size()) throw ParameterError("source view out of range");
    checks.push_back(geometric_check(rv.cam, rv.depth, views[s].cam, views[s].depth));
  }
  const std::vector<unsigned char> photo = photometric_filter(rv.confidence, cfg.conf_thresh);
  auto depth = rv.depth.data();
  auto img = rv.image.data();
  const std::size_t HW = H * W;
  const std::size_t S = checks.size();

  PointCloud cloud;
  std::vector<std::size_t> consistent;
  for (std::size_t i = 0; i < HW; ++i) {
    if (!photo[i] || !(depth[i] > 0.0)) continue;
    auto passes = [&](std::size_t k, double mult) {
      return checks[k].ok[i] && checks[k].err_c[i] < mult * cfg.thresh_c && checks[k].err_d[i] < mult * cfg.thresh_d;
    };
    consistent.clear();
    bool keep = false;
    if (!cfg.dynamic) {
      for (std::size_t k = 0; k < S; ++k)
        if (passes(k, 1.0)) consistent.push_back(k);
      keep = consistent.size() >= cfg.min_consistent_views;
    } else {
      for (std::size_t n = cfg.min_consistent_views; n <= S && !keep; ++n) {
        consistent.clear();
        for (std::size_t k = 0; k < S; ++k)
          if (passes(k, static_cast<double>(n))) consistent.push_back(k);
        keep = consistent.size() >= n;
      }
    }
    if (!keep) continue;
    const std::size_t y = i / W, x = i % W;
    Eigen::Vector3d X = rv.cam.unproject(static_cast<double>(x), static_cast<double>(y), depth[i]);
    if (cfg.average_points) {
      for (std::size_t k : consistent) X += checks[k].src_points[i];
      X /= static_cast<double>(consistent.size() + 1);
    }
    cloud.points.push_back(X);
    cloud.colors.push_back({img[i], img[HW + i], img[2 * HW + i]});
    cloud.view.push_back(static_cast<int>(ref));
    cloud.pixel.push_back(i);
  }
  return cloud;
}

PointCloud fuse(const std::vector<FusionView>& views, const FusionConfig& cfg,
                const std::vector<std::vector<std::size_t>>* sources) {
  cfg.validate();
  if (sources && sources->size() != views.size()) throw ParameterError("one source list per view required");
  PointCloud out;
  for (std::size_t v = 0; v < views.size(); ++v) {
    std::vector<std::size_t> src;
    if (sources) {
      src = (*sources)[v];
    } else {
      for (std::size_t s = 0; s < views.size(); ++s)
        if (s != v) src.push_back(s);
    }
    out.append(fuse_view(views, v, src, cfg));
  }
  return out;
}

}  // namespace icgmvs
