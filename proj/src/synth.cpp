#include "icgmvs/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>

#include "icgmvs/io.hpp"
#include "icgmvs/nn.hpp"
#include "icgmvs/parallel.hpp"
#include "icgmvs/util.hpp"

namespace icgmvs {

namespace {

double lattice(std::int64_t x, std::int64_t y, std::int64_t z, std::uint64_t seed) {
  std::uint64_t h = splitmix64(seed ^ static_cast<std::uint64_t>(x));
  h = splitmix64(h ^ static_cast<std::uint64_t>(y));
  h = splitmix64(h ^ static_cast<std::uint64_t>(z));
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

double smooth(double t) { return t * t * (3.0 - 2.0 * t); }

double noise_octave(const Eigen::Vector3d& p, std::uint64_t seed) {
  const double fx = std::floor(p.x()), fy = std::floor(p.y()), fz = std::floor(p.z());
  const auto ix = static_cast<std::int64_t>(fx), iy = static_cast<std::int64_t>(fy), iz = static_cast<std::int64_t>(fz);
  const double tx = smooth(p.x() - fx), ty = smooth(p.y() - fy), tz = smooth(p.z() - fz);
  double acc = 0.0;
  for (int dz = 0; dz < 2; ++dz)
    for (int dy = 0; dy < 2; ++dy)
      for (int dx = 0; dx < 2; ++dx) {
        const double w = (dx ? tx : 1 - tx) * (dy ? ty : 1 - ty) * (dz ? tz : 1 - tz);
        acc += w * lattice(ix + dx, iy + dy, iz + dz, seed);
      }
  return acc;
}

}  // namespace

double value_noise(const Eigen::Vector3d& p, std::uint64_t seed, int octaves) {
  double acc = 0.0, amp = 1.0, norm = 0.0, freq = 1.0;
  for (int o = 0; o < octaves; ++o) {
    acc += amp * noise_octave(p * freq, splitmix64(seed + static_cast<std::uint64_t>(o)));
    norm += amp;
    amp *= 0.5;
    freq *= 2.0;
  }
  return acc / norm;
}

Eigen::Vector3d Texture::albedo(const Eigen::Vector3d& p) const {
  const Eigen::Vector3d q = p * frequency;
  switch (kind) {
    case Kind::Flat:
      return color_a;
    case Kind::Checker: {
      const auto s = static_cast<std::int64_t>(std::floor(q.x()) + std::floor(q.y()) + std::floor(q.z()));
      return (s & 1) ? color_b : color_a;
    }
    case Kind::Noise: {
      const double n = value_noise(q, seed);
      return color_a + (color_b - color_a) * n;
    }
    case Kind::CheckerNoise: {
      const auto s = static_cast<std::int64_t>(std::floor(q.x()) + std::floor(q.y()) + std::floor(q.z()));
      const double n = value_noise(q * 2.0, seed);
      const Eigen::Vector3d base = color_a + (color_b - color_a) * n;
      return (s & 1) ? base * 0.6 : base;
    }
  }
  return color_a;
}

Primitive Primitive::rectangle(const Eigen::Vector3d& center, const Eigen::Vector3d& u, const Eigen::Vector3d& v,
                               double half_u, double half_v, const Texture& tex) {
  Primitive p;
  p.kind = Kind::Rectangle;
  p.center = center;
  p.axis_u = u.normalized();
  p.axis_v = v.normalized();
  p.half_u = half_u;
  p.half_v = half_v;
  p.texture = tex;
  return p;
}

Primitive Primitive::box(const Eigen::Vector3d& lo, const Eigen::Vector3d& hi, const Texture& tex) {
  Primitive p;
  p.kind = Kind::Box;
  p.lo = lo.cwiseMin(hi);
  p.hi = lo.cwiseMax(hi);
  p.texture = tex;
  return p;
}

Primitive Primitive::sphere(const Eigen::Vector3d& center, double radius, const Texture& tex) {
  if (!(radius > 0.0)) throw ParameterError("sphere radius must be positive");
  Primitive p;
  p.kind = Kind::Sphere;
  p.center = center;
  p.radius = radius;
  p.texture = tex;
  return p;
}

Hit intersect(const Primitive& prim, const Eigen::Vector3d& o, const Eigen::Vector3d& d) {
  Hit h;
  switch (prim.kind) {
    case Primitive::Kind::Rectangle: {
      const Eigen::Vector3d n = prim.axis_u.cross(prim.axis_v);
      const double den = n.dot(d);
      if (den == 0.0) return h;
      const double t = n.dot(prim.center - o) / den;
      if (!(t > 0.0)) return h;
      const Eigen::Vector3d rel = o + t * d - prim.center;
      if (std::abs(rel.dot(prim.axis_u)) > prim.half_u || std::abs(rel.dot(prim.axis_v)) > prim.half_v) return h;
      h.t = t;
      h.normal = den < 0.0 ? n : Eigen::Vector3d(-n);
      return h;
    }
    case Primitive::Kind::Box: {
      double tmin = -std::numeric_limits<double>::infinity(), tmax = std::numeric_limits<double>::infinity();
      int enter_axis = -1, exit_axis = -1;
      for (int a = 0; a < 3; ++a) {
        if (d[a] == 0.0) {
          if (o[a] < prim.lo[a] || o[a] > prim.hi[a]) return h;
          continue;
        }
        double t0 = (prim.lo[a] - o[a]) / d[a], t1 = (prim.hi[a] - o[a]) / d[a];
        if (t0 > t1) std::swap(t0, t1);
        if (t0 > tmin) {
          tmin = t0;
          enter_axis = a;
        }
        if (t1 < tmax) {
          tmax = t1;
          exit_axis = a;
        }
      }
      if (tmin > tmax || tmax <= 0.0) return h;
      const bool inside = tmin <= 0.0;
      const int axis = inside ? exit_axis : enter_axis;
      h.t = inside ? tmax : tmin;
      h.normal = Eigen::Vector3d::Zero();
      h.normal[axis] = d[axis] > 0.0 ? -1.0 : 1.0;
      return h;
    }
    case Primitive::Kind::Sphere: {
      const Eigen::Vector3d oc = o - prim.center;
      const double a = d.squaredNorm(), b = oc.dot(d), c = oc.squaredNorm() - prim.radius * prim.radius;
      const double disc = b * b - a * c;
      if (disc < 0.0) return h;
      const double sq = std::sqrt(disc);
      double t = (-b - sq) / a;
      if (!(t > 0.0)) t = (-b + sq) / a;
      if (!(t > 0.0)) return h;
      h.t = t;
      h.normal = (o + t * d - prim.center) / prim.radius;
      return h;
    }
  }
  return h;
}

Hit Scene::trace(const Eigen::Vector3d& origin, const Eigen::Vector3d& dir) const {
  Hit best;
  for (std::size_t i = 0; i < primitives.size(); ++i) {
    Hit h = intersect(primitives[i], origin, dir);
    if (h.t < best.t) {
      best = h;
      best.primitive = static_cast<int>(i);
    }
  }
  return best;
}

Render render(const Scene& scene, const Camera& cam, std::size_t H, std::size_t W) {
  if (H == 0 || W == 0 || H % 8 || W % 8) throw ParameterError("render size must be a positive multiple of 8");
  const std::size_t HW = H * W;
  std::vector<double> img(3 * HW, 0.0), depth(HW, 0.0);
  Render out;
  out.valid.assign(HW, 0);
  const Eigen::Vector3d origin = cam.center();
  const Eigen::Matrix3d Kinv = cam.K.inverse();
  const Eigen::Vector3d light = scene.light_dir.normalized();
  parallel_for(0, H, [&](std::size_t y) {
    for (std::size_t x = 0; x < W; ++x) {
      const std::size_t i = y * W + x;
      Eigen::Vector3d ray_cam = Kinv * Eigen::Vector3d(static_cast<double>(x), static_cast<double>(y), 1.0);
      ray_cam /= ray_cam.z();
      const Eigen::Vector3d dir = cam.R.transpose() * ray_cam;
      const Hit hit = scene.trace(origin, dir);
      if (hit.primitive < 0) continue;
      const Eigen::Vector3d p = origin + hit.t * dir;
      const Eigen::Vector3d alb = scene.primitives[static_cast<std::size_t>(hit.primitive)].texture.albedo(p);
      const double shade = scene.ambient + (1.0 - scene.ambient) * std::max(0.0, hit.normal.dot(light));
      for (int c = 0; c < 3; ++c) img[static_cast<std::size_t>(c) * HW + i] = std::clamp(alb[c] * shade, 0.0, 1.0);
      depth[i] = hit.t;
      out.valid[i] = 1;
    }
  });
  out.image = Tensor(Shape{3, H, W}, std::move(img));
  out.depth = Tensor(Shape{H, W}, std::move(depth));
  return out;
}

Camera look_at(const Eigen::Vector3d& eye, const Eigen::Vector3d& target, const Eigen::Matrix3d& K) {
  const Eigen::Vector3d z = (target - eye).normalized();
  Eigen::Vector3d down(0.0, 1.0, 0.0);
  if (std::abs(z.dot(down)) > 0.999) down = Eigen::Vector3d(0.0, 0.0, 1.0);
  const Eigen::Vector3d x = down.cross(z).normalized();
  const Eigen::Vector3d y = z.cross(x);
  Camera c;
  c.K = K;
  c.R.row(0) = x.transpose();
  c.R.row(1) = y.transpose();
  c.R.row(2) = z.transpose();
  c.t = -c.R * eye;
  return c;
}

Eigen::Matrix3d default_intrinsics(std::size_t H, std::size_t W, double focal_scale) {
  Eigen::Matrix3d K = Eigen::Matrix3d::Identity();
  K(0, 0) = K(1, 1) = focal_scale * static_cast<double>(W);
  K(0, 2) = (static_cast<double>(W) - 1.0) / 2.0;
  K(1, 2) = (static_cast<double>(H) - 1.0) / 2.0;
  return K;
}

namespace {

Texture random_texture(Rng& rng, bool flat) {
  Texture t;
  auto color = [&]() { return Eigen::Vector3d(rng.uniform(0.1, 1.0), rng.uniform(0.1, 1.0), rng.uniform(0.1, 1.0)); };
  t.color_a = color();
  t.color_b = color();
  if ((t.color_a - t.color_b).norm() < 0.5) t.color_b = Eigen::Vector3d::Ones() - t.color_a;
  t.seed = rng.next();
  if (flat) {
    t.kind = Texture::Kind::Flat;
    return t;
  }
  const double r = rng.uniform();
  t.kind = r < 0.5 ? Texture::Kind::Noise : (r < 0.8 ? Texture::Kind::CheckerNoise : Texture::Kind::Checker);
  t.frequency = rng.uniform(2.0, 4.0);
  return t;
}

}  // namespace

Scene random_scene(std::uint64_t seed, const SceneOptions& opt) {
  Rng rng(mix_seed(seed, "scene"));
  Scene s;
  Texture wall = random_texture(rng, false);
  wall.kind = Texture::Kind::Noise;
  wall.frequency = 3.0;
  s.primitives.push_back(Primitive::rectangle(Eigen::Vector3d(0, 0, opt.wall_depth), Eigen::Vector3d::UnitX(),
                                              Eigen::Vector3d::UnitY(), 20.0, 20.0, wall));
  for (std::size_t i = 0; i < opt.num_objects; ++i) {
    const Eigen::Vector3d c(rng.uniform(-1.3, 1.3), rng.uniform(-0.9, 0.9), rng.uniform(-1.2, opt.wall_depth - 0.8));
    const double size = rng.uniform(0.3, 0.7);
    Texture tex = random_texture(rng, false);
    if (rng.uniform() < 0.5) {
      const Eigen::Vector3d half(size * rng.uniform(0.6, 1.0), size * rng.uniform(0.6, 1.0), size * rng.uniform(0.6, 1.0));
      s.primitives.push_back(Primitive::box(c - half, c + half, tex));
    } else {
      s.primitives.push_back(Primitive::sphere(c, size, tex));
    }
  }
  if (opt.textureless_patch) {
    const Eigen::Vector3d c(rng.uniform(-1.0, 1.0), rng.uniform(-0.8, 0.8), opt.wall_depth - 0.01);
    s.primitives.push_back(Primitive::rectangle(c, Eigen::Vector3d::UnitX(), Eigen::Vector3d::UnitY(), 0.35, 0.25,
                                                random_texture(rng, true)));
  }
  s.light_dir = Eigen::Vector3d(rng.uniform(-0.5, 0.5), rng.uniform(-0.8, -0.3), -1.0);
  return s;
}

std::vector<Camera> arc_cameras(std::size_t n, std::size_t H, std::size_t W, const RigOptions& rig) {
  if (n == 0) throw ParameterError("need at least one camera");
  const Eigen::Matrix3d K = default_intrinsics(H, W, rig.focal_scale);
  const double pi = std::acos(-1.0);
  std::vector<Camera> cams;
  for (std::size_t i = 0; i < n; ++i) {
    const double frac = n == 1 ? 0.5 : static_cast<double>(i) / static_cast<double>(n - 1);
    const double theta = (frac - 0.5) * rig.arc_deg * pi / 180.0;
    const Eigen::Vector3d eye(rig.radius * std::sin(theta), rig.height, -rig.radius * std::cos(theta));
    cams.push_back(look_at(eye, Eigen::Vector3d::Zero(), K));
  }
  return cams;
}

void fit_depth_range(Camera& cam, const Tensor& depth, double margin) {
  double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
  for (double d : depth.data())
    if (d > 0.0) {
      lo = std::min(lo, d);
      hi = std::max(hi, d);
    }
  if (!(hi > 0.0)) throw DatasetError("view has no valid depth");
  const double pad = margin * (hi - lo) + 1e-3;
  cam.dmin = std::max(lo - pad, 1e-3);
  cam.dmax = hi + pad;
}

double view_overlap(const Camera& ref, const Tensor& ref_depth, const Camera& src, const Tensor& src_depth) {
  const std::size_t H = ref_depth.dim(0), W = ref_depth.dim(1);
  const std::size_t Hs = src_depth.dim(0), Ws = src_depth.dim(1);
  auto rd = ref_depth.data(), sd = src_depth.data();
  std::size_t total = 0, seen = 0;
  for (std::size_t y = 0; y < H; ++y)
    for (std::size_t x = 0; x < W; ++x) {
      const double d = rd[y * W + x];
      if (!(d > 0.0)) continue;
      ++total;
      const Eigen::Vector3d q = src.project(ref.unproject(static_cast<double>(x), static_cast<double>(y), d));
      const double u = std::round(q.x()), v = std::round(q.y());
      if (!(q.z() > 0.0) || u < 0 || v < 0 || u > static_cast<double>(Ws - 1) || v > static_cast<double>(Hs - 1))
        continue;
      const double ds = sd[static_cast<std::size_t>(v) * Ws + static_cast<std::size_t>(u)];
      if (ds > 0.0 && std::abs(ds - q.z()) < 0.05 * q.z()) ++seen;
    }
  return total ? static_cast<double>(seen) / static_cast<double>(total) : 0.0;
}

SyntheticScene make_scene(const DatasetSpec& spec, std::size_t index) {
  const std::uint64_t seed = mix_seed(spec.seed, "scene" + std::to_string(index));
  Scene scene = random_scene(seed, spec.scene);
  SyntheticScene out;
  char name[32];
  std::snprintf(name, sizeof(name), "scene_%03zu", index);
  out.name = name;
  for (Camera& cam : arc_cameras(spec.views_per_scene, spec.height, spec.width, spec.rig)) {
    Render r = render(scene, cam, spec.height, spec.width);
    fit_depth_range(cam, r.depth);
    out.views.push_back({r.image, r.depth, cam});
  }
  const std::size_t n = out.views.size();
  out.pairs.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      const double score = view_overlap(out.views[i].cam, out.views[i].depth, out.views[j].cam, out.views[j].depth);
      out.pairs[i].emplace_back(j, score);
    }
    std::stable_sort(out.pairs[i].begin(), out.pairs[i].end(),
                     [](const auto& a, const auto& b) { return a.second > b.second; });
  }
  return out;
}

void make_dataset(const std::string& dir, const DatasetSpec& spec) {
  namespace fs = std::filesystem;
  if (spec.num_scenes == 0 || spec.views_per_scene == 0) throw ParameterError("dataset needs scenes and views");
  for (std::size_t s = 0; s < spec.num_scenes; ++s) {
    SyntheticScene scene = make_scene(spec, s);
    const fs::path root = fs::path(dir) / scene.name;
    std::error_code ec;
    for (const char* sub : {"images", "cams", "depths"}) {
      fs::create_directories(root / sub, ec);
      if (ec) throw IoError("cannot create " + (root / sub).string() + ": " + ec.message());
    }
    std::vector<PairEntry> pairs;
    for (std::size_t v = 0; v < scene.views.size(); ++v) {
      const std::string id = view_name(v);
      write_ppm((root / "images" / (id + ".ppm")).string(), scene.views[v].image);
      write_camera((root / "cams" / (id + "_cam.txt")).string(), scene.views[v].cam);
      write_pfm((root / "depths" / (id + ".pfm")).string(), scene.views[v].depth);
      pairs.push_back({v, scene.pairs[v]});
    }
    write_pair_file((root / "pair.txt").string(), pairs);
  }
}

}  // namespace icgmvs
