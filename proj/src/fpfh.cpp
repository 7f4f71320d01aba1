#include "symlabel/fpfh.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "symlabel/error.hpp"

namespace symlabel {
namespace {

int to_bin(double value, double lo, double hi) {
  const int b = static_cast<int>(std::floor(kFpfhBins * (value - lo) / (hi - lo)));
  return std::clamp(b, 0, kFpfhBins - 1);
}

}  // namespace

bool pair_features(const Eigen::Vector3d& p1, const Eigen::Vector3d& n1, const Eigen::Vector3d& p2,
                   const Eigen::Vector3d& n2, double& theta, double& alpha, double& phi) {
  Eigen::Vector3d dp = p2 - p1;
  const double dist = dp.norm();
  if (dist == 0.0) {
    theta = alpha = phi = 0.0;
    return false;
  }
  Eigen::Vector3d u = n1, other = n2;
  const double a1 = n1.dot(dp) / dist;
  const double a2 = n2.dot(dp) / dist;
  // The source of the Darboux frame is the point whose normal makes the
  // smaller angle with the connecting line.
  if (std::abs(a1) < std::abs(a2)) {
    u = n2;
    other = n1;
    dp = -dp;
    phi = -a2;
  } else {
    phi = a1;
  }
  Eigen::Vector3d v = dp.cross(u);
  const double vn = v.norm();
  if (vn == 0.0) {
    theta = alpha = 0.0;
    return true;
  }
  v /= vn;
  const Eigen::Vector3d w = u.cross(v);
  alpha = v.dot(other);
  theta = std::atan2(w.dot(other), u.dot(other));
  return true;
}

FpfhDescriptorSet compute_fpfh(const PointCloud& cloud, double radius, double min_normal_dot) {
  require(cloud.has_normals(), "compute_fpfh needs normals");
  require(radius > 0.0, "fpfh radius must be positive");
  cloud.validate();
  const auto n = static_cast<int>(cloud.size());
  const Points& pts = cloud.points;
  const Points& nrm = *cloud.normals;
  const KdTree tree(pts);

  using Hist = Eigen::Matrix<double, kFpfhSize, Eigen::Dynamic>;
  Hist spfh = Hist::Zero(kFpfhSize, n);
  std::vector<std::vector<KdTree::Hit>> neighbours(n);
  std::vector<KdTree::Hit> hits;
  bool any = false;
  for (int i = 0; i < n; ++i) {
    tree.radius_search(pts[i], radius, hits);
    auto& nb = neighbours[i];
    for (const auto& h : hits) {
      if (h.index != i && h.dist_sq > 0.0 && nrm[i].dot(nrm[h.index]) >= min_normal_dot) nb.push_back(h);
    }
    if (nb.empty()) continue;
    any = true;
    const double inc = 1.0 / static_cast<double>(nb.size());
    for (const auto& h : nb) {
      double theta, alpha, phi;
      if (!pair_features(pts[i], nrm[i], pts[h.index], nrm[h.index], theta, alpha, phi)) continue;
      spfh(to_bin(theta, -std::numbers::pi, std::numbers::pi), i) += inc;
      spfh(kFpfhBins + to_bin(alpha, -1.0, 1.0), i) += inc;
      spfh(2 * kFpfhBins + to_bin(phi, -1.0, 1.0), i) += inc;
    }
  }
  if (!any) fail(ErrorKind::kInvalidArgument, "fpfh radius yields no neighbours for any point");

  FpfhDescriptorSet out;
  out.histograms = Hist::Zero(kFpfhSize, n);
  const double min_dist = 1e-6 * radius;
  for (int i = 0; i < n; ++i) {
    const auto& nb = neighbours[i];
    if (nb.empty()) continue;
    Eigen::Matrix<double, kFpfhSize, 1> acc = Eigen::Matrix<double, kFpfhSize, 1>::Zero();
    for (const auto& h : nb) acc += spfh.col(h.index) / std::max(std::sqrt(h.dist_sq), min_dist);
    Eigen::Matrix<double, kFpfhSize, 1> f = spfh.col(i) + acc / static_cast<double>(nb.size());
    const double s = f.sum();
    if (s > 0.0) out.histograms.col(i) = f / s;
  }
  return out;
}

}  // namespace symlabel
