#pragma once

#include <Eigen/Dense>
#include <array>
#include <string>
#include <vector>

#include "icgmvs/tensor.hpp"

namespace icgmvs {

inline constexpr std::array<double, 5> kTdeThresholds{1.0, 2.0, 4.0, 8.0, 16.0};

struct DepthErrorReport {
  double ade = 0.0;
  std::array<double, 5> tde{};  // percentages for kTdeThresholds
  std::size_t valid_count = 0;
  bool empty = true;
};

// Errors over pixels with mask != 0. tde counts errors strictly above X.
DepthErrorReport depth_errors(const Tensor& pred, const Tensor& gt, const std::vector<unsigned char>& mask);

// Exact nearest-neighbour index over 3D points.
class KdTree {
 public:
  explicit KdTree(std::vector<Eigen::Vector3d> points);
  std::size_t nearest(const Eigen::Vector3d& q) const;
  double nearest_distance(const Eigen::Vector3d& q) const;
  std::size_t size() const { return pts_.size(); }

 private:
  struct Node {
    std::size_t point;
    int axis;
    int left = -1, right = -1;
  };
  int build(std::size_t begin, std::size_t end, int depth);
  void search(int node, const Eigen::Vector3d& q, std::size_t& best, double& best_d2) const;
  std::vector<Eigen::Vector3d> pts_;
  std::vector<std::size_t> order_;
  std::vector<Node> nodes_;
  int root_ = -1;
};

// Distances from every query point to its nearest neighbour in `target`.
std::vector<double> nearest_distances(const std::vector<Eigen::Vector3d>& query,
                                      const std::vector<Eigen::Vector3d>& target);
std::vector<double> nearest_distances_brute(const std::vector<Eigen::Vector3d>& query,
                                            const std::vector<Eigen::Vector3d>& target);

struct CloudMetricsReport {
  double acc = 0.0;
  double comp = 0.0;
  double overall = 0.0;
  double outlier_cap = 20.0;
  std::size_t acc_inliers = 0;   // recon points at distance <= cap
  std::size_t comp_inliers = 0;  // GT points at distance <= cap
};

// Mean nearest distances with distances above the cap excluded. If every
// distance exceeds the cap, the mean is reported as the cap itself.
CloudMetricsReport cloud_distance_metrics(const std::vector<Eigen::Vector3d>& recon,
                                          const std::vector<Eigen::Vector3d>& gt, double outlier_cap = 20.0,
                                          bool brute_force = false);

struct ThresholdReport {
  double tau = 0.0;
  double precision = 0.0;  // percent
  double recall = 0.0;     // percent
  double fscore = 0.0;     // percent
};

double fscore(double precision, double recall);
ThresholdReport threshold_metrics(const std::vector<Eigen::Vector3d>& recon, const std::vector<Eigen::Vector3d>& gt,
                                  double tau);

double scene_mean(const std::vector<double>& values);

// Reports as CSV (header + rows) and as aligned text tables.
std::string depth_report_csv(const std::vector<std::string>& names, const std::vector<DepthErrorReport>& rows);
std::string depth_report_table(const std::vector<std::string>& names, const std::vector<DepthErrorReport>& rows);
std::string cloud_report_csv(const CloudMetricsReport& c, const ThresholdReport& t);
std::string cloud_report_table(const CloudMetricsReport& c, const ThresholdReport& t);

}  // namespace icgmvs
