#include "icgmvs/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <numeric>
#include <sstream>

#include "icgmvs/parallel.hpp"

namespace icgmvs {

DepthErrorReport depth_errors(const Tensor& pred, const Tensor& gt, const std::vector<unsigned char>& mask) {
  if (pred.shape() != gt.shape())
    throw DimensionError("prediction " + shape_str(pred.shape()) + " vs GT " + shape_str(gt.shape()));
  if (mask.size() != gt.numel()) throw DimensionError("mask size does not match depth map");
  auto p = pred.data(), g = gt.data();
  DepthErrorReport r;
  std::array<std::size_t, 5> above{};
  double total = 0.0;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (!mask[i]) continue;
    const double e = std::abs(p[i] - g[i]);
    total += e;
    ++r.valid_count;
    for (std::size_t k = 0; k < kTdeThresholds.size(); ++k)
      if (e > kTdeThresholds[k]) ++above[k];
  }
  if (r.valid_count == 0) return r;
  r.empty = false;
  const double n = static_cast<double>(r.valid_count);
  r.ade = total / n;
  for (std::size_t k = 0; k < above.size(); ++k) r.tde[k] = 100.0 * static_cast<double>(above[k]) / n;
  return r;
}

namespace {
double dist2(const Eigen::Vector3d& a, const Eigen::Vector3d& b) {
  const double dx = a.x() - b.x(), dy = a.y() - b.y(), dz = a.z() - b.z();
  return dx * dx + dy * dy + dz * dz;
}
}  // namespace

KdTree::KdTree(std::vector<Eigen::Vector3d> points) : pts_(std::move(points)) {
  if (pts_.empty()) throw ParameterError("cannot index an empty point cloud");
  order_.resize(pts_.size());
  std::iota(order_.begin(), order_.end(), std::size_t{0});
  nodes_.reserve(pts_.size());
  root_ = build(0, pts_.size(), 0);
}

int KdTree::build(std::size_t begin, std::size_t end, int depth) {
  if (begin >= end) return -1;
  const int axis = depth % 3;
  const std::size_t mid = begin + (end - begin) / 2;
  std::nth_element(order_.begin() + static_cast<std::ptrdiff_t>(begin),
                   order_.begin() + static_cast<std::ptrdiff_t>(mid),
                   order_.begin() + static_cast<std::ptrdiff_t>(end), [&](std::size_t a, std::size_t b) {
                     if (pts_[a][axis] != pts_[b][axis]) return pts_[a][axis] < pts_[b][axis];
                     return a < b;
                   });
  const int id = static_cast<int>(nodes_.size());
  nodes_.push_back({order_[mid], axis});
  const int l = build(begin, mid, depth + 1);
  const int r = build(mid + 1, end, depth + 1);
  nodes_[static_cast<std::size_t>(id)].left = l;
  nodes_[static_cast<std::size_t>(id)].right = r;
  return id;
}

void KdTree::search(int node, const Eigen::Vector3d& q, std::size_t& best, double& best_d2) const {
  if (node < 0) return;
  const Node& n = nodes_[static_cast<std::size_t>(node)];
  const Eigen::Vector3d& p = pts_[n.point];
  const double d2 = dist2(q, p);
  if (d2 < best_d2 || (d2 == best_d2 && n.point < best)) {
    best_d2 = d2;
    best = n.point;
  }
  const double diff = q[n.axis] - p[n.axis];
  const int near = diff < 0 ? n.left : n.right;
  const int far = diff < 0 ? n.right : n.left;
  search(near, q, best, best_d2);
  if (diff * diff <= best_d2) search(far, q, best, best_d2);
}

std::size_t KdTree::nearest(const Eigen::Vector3d& q) const {
  std::size_t best = std::numeric_limits<std::size_t>::max();
  double best_d2 = std::numeric_limits<double>::infinity();
  search(root_, q, best, best_d2);
  return best;
}

double KdTree::nearest_distance(const Eigen::Vector3d& q) const { return std::sqrt(dist2(q, pts_[nearest(q)])); }

std::vector<double> nearest_distances(const std::vector<Eigen::Vector3d>& query,
                                      const std::vector<Eigen::Vector3d>& target) {
  KdTree tree(target);
  std::vector<double> out(query.size());
  parallel_for(0, query.size(), [&](std::size_t i) { out[i] = tree.nearest_distance(query[i]); });
  return out;
}

std::vector<double> nearest_distances_brute(const std::vector<Eigen::Vector3d>& query,
                                            const std::vector<Eigen::Vector3d>& target) {
  if (target.empty()) throw ParameterError("cannot search an empty point cloud");
  std::vector<double> out(query.size());
  for (std::size_t i = 0; i < query.size(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& t : target) best = std::min(best, dist2(query[i], t));
    out[i] = std::sqrt(best);
  }
  return out;
}

namespace {
double capped_mean(const std::vector<double>& d, double cap, std::size_t& inliers) {
  double s = 0.0;
  inliers = 0;
  for (double v : d)
    if (v <= cap) {
      s += v;
      ++inliers;
    }
  return inliers ? s / static_cast<double>(inliers) : cap;
}
}  // namespace

CloudMetricsReport cloud_distance_metrics(const std::vector<Eigen::Vector3d>& recon,
                                          const std::vector<Eigen::Vector3d>& gt, double outlier_cap,
                                          bool brute_force) {
  if (recon.empty() || gt.empty()) throw ParameterError("cloud metrics need non-empty clouds");
  if (!(outlier_cap > 0.0)) throw ParameterError("outlier cap must be positive");
  auto nn = brute_force ? nearest_distances_brute : nearest_distances;
  CloudMetricsReport r;
  r.outlier_cap = outlier_cap;
  r.acc = capped_mean(nn(recon, gt), outlier_cap, r.acc_inliers);
  r.comp = capped_mean(nn(gt, recon), outlier_cap, r.comp_inliers);
  r.overall = (r.acc + r.comp) / 2.0;
  return r;
}

double fscore(double precision, double recall) {
  const double s = precision + recall;
  return s > 0.0 ? 2.0 * precision * recall / s : 0.0;
}

ThresholdReport threshold_metrics(const std::vector<Eigen::Vector3d>& recon, const std::vector<Eigen::Vector3d>& gt,
                                  double tau) {
  if (!(tau > 0.0)) throw ParameterError("tau must be positive");
  if (recon.empty() || gt.empty()) throw ParameterError("threshold metrics need non-empty clouds");
  auto within = [tau](const std::vector<double>& d) {
    std::size_t n = 0;
    for (double v : d) n += v <= tau ? 1 : 0;
    return 100.0 * static_cast<double>(n) / static_cast<double>(d.size());
  };
  ThresholdReport r;
  r.tau = tau;
  r.precision = within(nearest_distances(recon, gt));
  r.recall = within(nearest_distances(gt, recon));
  r.fscore = fscore(r.precision, r.recall);
  return r;
}

double scene_mean(const std::vector<double>& values) {
  if (values.empty()) throw ParameterError("mean of an empty list");
  return std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
}

std::string depth_report_csv(const std::vector<std::string>& names, const std::vector<DepthErrorReport>& rows) {
  if (names.size() != rows.size()) throw ParameterError("one name per report row required");
  std::ostringstream s;
  s << "name,ade,tde1,tde2,tde4,tde8,tde16,valid\n" << std::setprecision(10);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    s << names[i] << ',' << rows[i].ade;
    for (double t : rows[i].tde) s << ',' << t;
    s << ',' << rows[i].valid_count << '\n';
  }
  return s.str();
}

std::string depth_report_table(const std::vector<std::string>& names, const std::vector<DepthErrorReport>& rows) {
  if (names.size() != rows.size()) throw ParameterError("one name per report row required");
  std::size_t w = 4;
  for (const auto& n : names) w = std::max(w, n.size());
  std::ostringstream s;
  s << std::left << std::setw(static_cast<int>(w)) << "name" << std::right;
  for (const char* h : {"ade", "tde(1)", "tde(2)", "tde(4)", "tde(8)", "tde(16)", "valid"}) s << std::setw(10) << h;
  s << '\n' << std::fixed;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    s << std::left << std::setw(static_cast<int>(w)) << names[i] << std::right << std::setprecision(4) << std::setw(10)
      << rows[i].ade << std::setprecision(2);
    for (double t : rows[i].tde) s << std::setw(10) << t;
    s << std::setw(10) << rows[i].valid_count << '\n';
  }
  return s.str();
}

std::string cloud_report_csv(const CloudMetricsReport& c, const ThresholdReport& t) {
  std::ostringstream s;
  s << "acc,comp,overall,outlier_cap,tau,precision,recall,fscore\n" << std::setprecision(10) << c.acc << ','
    << c.comp << ',' << c.overall << ',' << c.outlier_cap << ',' << t.tau << ',' << t.precision << ',' << t.recall
    << ',' << t.fscore << '\n';
  return s.str();
}

std::string cloud_report_table(const CloudMetricsReport& c, const ThresholdReport& t) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(4);
  s << std::left << std::setw(14) << "acc" << std::right << std::setw(12) << c.acc << '\n';
  s << std::left << std::setw(14) << "comp" << std::right << std::setw(12) << c.comp << '\n';
  s << std::left << std::setw(14) << "overall" << std::right << std::setw(12) << c.overall << '\n';
  s << std::left << std::setw(14) << "outlier_cap" << std::right << std::setw(12) << c.outlier_cap << '\n';
  s << std::setprecision(2);
  s << std::left << std::setw(14) << "tau" << std::right << std::setw(12) << t.tau << '\n';
  s << std::left << std::setw(14) << "precision" << std::right << std::setw(12) << t.precision << '\n';
  s << std::left << std::setw(14) << "recall" << std::right << std::setw(12) << t.recall << '\n';
  s << std::left << std::setw(14) << "fscore" << std::right << std::setw(12) << t.fscore << '\n';
  return s.str();
}

}  // namespace icgmvs
