#pragma once

#include <Eigen/Core>

#include "symlabel/geom.hpp"

namespace symlabel {

inline constexpr int kFpfhBins = 11;
inline constexpr int kFpfhSize = 3 * kFpfhBins;

/// One 33-bin histogram per point, stored column-wise. Each column sums to 1,
/// or is all zero for points without neighbours inside the radius.
struct FpfhDescriptorSet {
  Eigen::Matrix<double, kFpfhSize, Eigen::Dynamic> histograms;

  std::size_t size() const { return static_cast<std::size_t>(histograms.cols()); }
};

/// Darboux-frame angle triple (theta, alpha, phi) of an oriented point pair.
/// Returns false for coincident points.
bool pair_features(const Eigen::Vector3d& p1, const Eigen::Vector3d& n1, const Eigen::Vector3d& p2,
                   const Eigen::Vector3d& n2, double& theta, double& alpha, double& phi);

/// Fast Point Feature Histograms. Requires normals; throws when no point has
/// a neighbour inside `radius`. Neighbours whose normal makes a dot product
/// below `min_normal_dot` with the query normal are ignored, which keeps the
/// two walls of a thin shell apart.
FpfhDescriptorSet compute_fpfh(const PointCloud& cloud, double radius, double min_normal_dot = -2.0);

}  // namespace symlabel
