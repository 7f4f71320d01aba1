#pragma once

#include <cstdint>
#include <vector>

#include "symlabel/fpfh.hpp"
#include "symlabel/geom.hpp"
#include "symlabel/so3.hpp"

namespace symlabel {

struct RegistrationResult {
  Pose pose;              // maps source into the target frame
  double fitness = 0.0;   // fraction of source points with a target point within max_corr_dist
  double inlier_rmse = 0.0;
  int iterations = 0;
  std::vector<double> objective;  // ICP: truncated objective after every accepted step, starting at init
};

struct GlobalRegistrationConfig {
  double max_corr_dist = 0.0;  // final robust scale and fitness threshold; 0 = 2.5x target spacing
  double tuple_scale = 0.9;    // edge-length ratio must lie in [tuple_scale, 1/tuple_scale]
  int max_tuples = 300;
  int trials_per_corr = 100;
  int gnc_iters = 64;
  int anneal_every = 4;
  double anneal_factor = 2.0;
  int min_correspondences = 10;
  /// >0: rescale descriptor distances by the mean distance to the hub_k
  /// nearest descriptors of the other cloud before the mutual test.
  int hub_k = 0;
  std::uint64_t seed = 0;
};

struct IcpConfig {
  double max_corr_dist = 0.0;  // 0 = 2.5x target spacing
  int max_iter = 50;
  double convergence = 1e-6;   // rotation (rad) + translation (m) step norm
};

/// Mutual nearest neighbours in descriptor space. Points with an all-zero
/// histogram take no part. Pairs are (source index, target index), sorted.
std::vector<std::pair<int, int>> mutual_feature_matches(const FpfhDescriptorSet& feats_s,
                                                        const FpfhDescriptorSet& feats_t, int hub_k = 0);

/// Least-squares rigid transform taking src[i] onto dst[i] under weights w.
/// Returns false when the weighted point set is degenerate.
bool weighted_kabsch(std::span<const Eigen::Vector3d> src, std::span<const Eigen::Vector3d> dst,
                     std::span<const double> w, Pose& out);

/// Fast global registration over FPFH matches. Throws kNoCorrespondences when
/// fewer than min_correspondences survive the tuple test.
RegistrationResult global_register(const PointCloud& source, const PointCloud& target,
                                   const FpfhDescriptorSet& feats_s, const FpfhDescriptorSet& feats_t,
                                   const GlobalRegistrationConfig& cfg = {});

/// ICP minimising the truncated point-to-point objective sum min(d^2, dmax^2).
/// Steps are point-to-plane when the target has normals, with a
/// point-to-point step as fallback whenever the objective would rise.
/// Throws kNoOverlap if no source point has a correspondence at init.
RegistrationResult icp_refine(const PointCloud& source, const PointCloud& target, const Pose& init,
                              const IcpConfig& cfg = {});

/// Same, reusing a tree already built over target.points.
RegistrationResult icp_refine(const PointCloud& source, const PointCloud& target, const KdTree& target_tree,
                              const Pose& init, const IcpConfig& cfg = {});

}  // namespace symlabel
