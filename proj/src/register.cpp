#include "symlabel/register.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include <Eigen/Cholesky>
#include <Eigen/SVD>

#include "symlabel/error.hpp"
#include "symlabel/rng.hpp"

namespace symlabel {
namespace {

double auto_corr_dist(const PointCloud& target, double configured) {
  if (configured > 0.0) return configured;
  return 2.5 * mean_spacing(target);
}

double max_radius(const Points& pts) {
  Eigen::Vector3d c = Eigen::Vector3d::Zero();
  for (const auto& p : pts) c += p;
  c /= static_cast<double>(pts.size());
  double r = 0.0;
  for (const auto& p : pts) r = std::max(r, (p - c).norm());
  return r;
}

struct Correspondences {
  std::vector<int> src, dst;  // indices, parallel
  std::vector<double> dist_sq;
};

// Nearest target point within `max_dist` for every transformed source point.
Correspondences find_correspondences(const PointCloud& source, const KdTree& tree, const Pose& pose,
                                     double max_dist, double& truncated_objective) {
  Correspondences c;
  const double max_sq = max_dist * max_dist;
  truncated_objective = 0.0;
  for (std::size_t i = 0; i < source.size(); ++i) {
    const KdTree::Hit h = tree.nearest(pose * source.points[i]);
    if (h.dist_sq <= max_sq) {
      c.src.push_back(static_cast<int>(i));
      c.dst.push_back(h.index);
      c.dist_sq.push_back(h.dist_sq);
      truncated_objective += h.dist_sq;
    } else {
      truncated_objective += max_sq;
    }
  }
  return c;
}

// One point-to-plane Gauss-Newton step, linearised about the centroid of the
// transformed inliers so the step does not depend on the world origin.
bool point_to_plane_step(const PointCloud& source, const PointCloud& target, const Correspondences& c,
                         const Pose& pose, Pose& step) {
  const Points& normals = *target.normals;
  Eigen::Vector3d centroid = Eigen::Vector3d::Zero();
  for (int i : c.src) centroid += pose * source.points[i];
  centroid /= static_cast<double>(c.src.size());

  Eigen::Matrix<double, 6, 6> A = Eigen::Matrix<double, 6, 6>::Zero();
  Eigen::Matrix<double, 6, 1> b = Eigen::Matrix<double, 6, 1>::Zero();
  for (std::size_t k = 0; k < c.src.size(); ++k) {
    const Eigen::Vector3d x = pose * source.points[c.src[k]];
    const Eigen::Vector3d& q = target.points[c.dst[k]];
    const Eigen::Vector3d& n = normals[c.dst[k]];
    Eigen::Matrix<double, 6, 1> J;
    J.head<3>() = (x - centroid).cross(n);
    J.tail<3>() = n;
    A.noalias() += J * J.transpose();
    b.noalias() += J * (q - x).dot(n);
  }
  // Light damping keeps directions the surface cannot constrain (sliding
  // along a plane, spinning about a symmetry axis) from blowing up.
  const double damp = 1e-6 * A.trace() / 6.0 + 1e-12;
  A.diagonal().array() += damp;
  const Eigen::Matrix<double, 6, 1> x = A.ldlt().solve(b);
  if (!x.allFinite()) return false;
  const Rotation dr = exp_map(x.head<3>());
  step = Pose(dr, centroid + x.tail<3>() - (dr * centroid));
  return true;
}

bool point_to_point_step(const PointCloud& source, const PointCloud& target, const Correspondences& c,
                         const Pose& pose, Pose& step) {
  Points src(c.src.size()), dst(c.src.size());
  for (std::size_t k = 0; k < c.src.size(); ++k) {
    src[k] = pose * source.points[c.src[k]];
    dst[k] = target.points[c.dst[k]];
  }
  const std::vector<double> w(c.src.size(), 1.0);
  return weighted_kabsch(src, dst, w, step);
}

double step_size(const Pose& step) { return step.rotation.angle() + step.translation.norm(); }

}  // namespace

bool weighted_kabsch(std::span<const Eigen::Vector3d> src, std::span<const Eigen::Vector3d> dst,
                     std::span<const double> w, Pose& out) {
  require(src.size() == dst.size() && src.size() == w.size(), "weighted_kabsch: size mismatch");
  double wsum = 0.0;
  Eigen::Vector3d ps = Eigen::Vector3d::Zero(), pd = Eigen::Vector3d::Zero();
  for (std::size_t i = 0; i < src.size(); ++i) {
    wsum += w[i];
    ps += w[i] * src[i];
    pd += w[i] * dst[i];
  }
  if (!(wsum > 1e-300)) return false;
  ps /= wsum;
  pd /= wsum;
  Eigen::Matrix3d H = Eigen::Matrix3d::Zero();
  for (std::size_t i = 0; i < src.size(); ++i) H.noalias() += w[i] * (src[i] - ps) * (dst[i] - pd).transpose();
  if (!H.allFinite() || H.norm() < 1e-300) return false;
  Eigen::JacobiSVD<Eigen::Matrix3d> svd(H, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Eigen::Matrix3d D = Eigen::Matrix3d::Identity();
  if ((svd.matrixV() * svd.matrixU().transpose()).determinant() < 0.0) D(2, 2) = -1.0;
  const Eigen::Matrix3d R = svd.matrixV() * D * svd.matrixU().transpose();
  const Rotation rot = Rotation::from_matrix(R);
  out = Pose(rot, pd - rot * ps);
  return true;
}

std::vector<std::pair<int, int>> mutual_feature_matches(const FpfhDescriptorSet& feats_s,
                                                        const FpfhDescriptorSet& feats_t, int hub_k) {
  auto nonzero = [](const FpfhDescriptorSet& f) {
    std::vector<int> idx;
    for (Eigen::Index i = 0; i < f.histograms.cols(); ++i)
      if (f.histograms.col(i).squaredNorm() > 0.0) idx.push_back(static_cast<int>(i));
    return idx;
  };
  const std::vector<int> is = nonzero(feats_s), it = nonzero(feats_t);
  if (is.empty() || it.empty()) return {};

  Eigen::MatrixXd S(kFpfhSize, is.size()), T(kFpfhSize, it.size());
  for (std::size_t k = 0; k < is.size(); ++k) S.col(k) = feats_s.histograms.col(is[k]);
  for (std::size_t k = 0; k < it.size(); ++k) T.col(k) = feats_t.histograms.col(it[k]);
  // Squared distances up to the per-row constant |s|^2, which does not change
  // the argmin along a row; columns need the full expression.
  const Eigen::VectorXd sn = S.colwise().squaredNorm().transpose();
  const Eigen::VectorXd tn = T.colwise().squaredNorm().transpose();
  Eigen::MatrixXd D = -2.0 * S.transpose() * T;
  D.colwise() += sn;
  D.rowwise() += tn.transpose();
  if (hub_k > 0) {
    D = D.cwiseMax(0.0).cwiseSqrt();
    auto mean_k = [&](auto vec) {
      std::vector<double> v(vec.begin(), vec.end());
      const std::size_t k = std::min<std::size_t>(static_cast<std::size_t>(hub_k), v.size());
      std::partial_sort(v.begin(), v.begin() + k, v.end());
      double sum = 0.0;
      for (std::size_t i = 0; i < k; ++i) sum += v[i];
      return sum / static_cast<double>(k);
    };
    Eigen::VectorXd rs(D.rows()), rt(D.cols());
    for (Eigen::Index i = 0; i < D.rows(); ++i) rs[i] = mean_k(D.row(i));
    for (Eigen::Index j = 0; j < D.cols(); ++j) rt[j] = mean_k(D.col(j));
    D *= 2.0;
    D.colwise() -= rs;
    D.rowwise() -= rt.transpose();
  }

  std::vector<int> best_t(is.size()), best_s(it.size());
  for (Eigen::Index i = 0; i < D.rows(); ++i) {
    Eigen::Index j;
    D.row(i).minCoeff(&j);
    best_t[i] = static_cast<int>(j);
  }
  for (Eigen::Index j = 0; j < D.cols(); ++j) {
    Eigen::Index i;
    D.col(j).minCoeff(&i);
    best_s[j] = static_cast<int>(i);
  }
  std::vector<std::pair<int, int>> out;
  for (std::size_t i = 0; i < is.size(); ++i)
    if (best_s[best_t[i]] == static_cast<int>(i)) out.emplace_back(is[i], it[best_t[i]]);
  return out;
}

RegistrationResult global_register(const PointCloud& source, const PointCloud& target,
                                   const FpfhDescriptorSet& feats_s, const FpfhDescriptorSet& feats_t,
                                   const GlobalRegistrationConfig& cfg) {
  require(feats_s.size() == source.size() && feats_t.size() == target.size(),
          "global_register: descriptor count must match point count");
  require(!source.empty() && !target.empty(), "global_register: empty cloud");
  require(cfg.tuple_scale > 0.0 && cfg.tuple_scale < 1.0, "tuple_scale must be in (0, 1)");
  const double delta = auto_corr_dist(target, cfg.max_corr_dist);

  const auto matches = mutual_feature_matches(feats_s, feats_t, cfg.hub_k);
  std::vector<std::pair<int, int>> corr;
  if (matches.size() >= 3) {
    Rng rng(cfg.seed);
    std::set<std::pair<int, int>> kept;
    const std::size_t n = matches.size();
    const std::size_t trials = n * static_cast<std::size_t>(cfg.trials_per_corr);
    const double lo = cfg.tuple_scale, hi = 1.0 / cfg.tuple_scale;
    int tuples = 0;
    for (std::size_t t = 0; t < trials && tuples < cfg.max_tuples; ++t) {
      const std::size_t a = rng.below(n), b = rng.below(n), c = rng.below(n);
      if (a == b || b == c || a == c) continue;
      const std::size_t idx[3] = {a, b, c};
      bool ok = true;
      for (int e = 0; e < 3 && ok; ++e) {
        const auto& m0 = matches[idx[e]];
        const auto& m1 = matches[idx[(e + 1) % 3]];
        const double ls = (source.points[m0.first] - source.points[m1.first]).norm();
        const double lt = (target.points[m0.second] - target.points[m1.second]).norm();
        ok = lt >= lo * ls && lt <= hi * ls;
      }
      if (!ok) continue;
      ++tuples;
      for (std::size_t k : idx) kept.insert(matches[k]);
    }
    corr.assign(kept.begin(), kept.end());
  }
  if (static_cast<int>(corr.size()) < cfg.min_correspondences) {
    fail(ErrorKind::kNoCorrespondences,
         "only " + std::to_string(corr.size()) + " feature correspondences survived the tuple test");
  }

  Points src(corr.size()), dst(corr.size());
  for (std::size_t k = 0; k < corr.size(); ++k) {
    src[k] = source.points[corr[k].first];
    dst[k] = target.points[corr[k].second];
  }
  const double scale = 2.0 * std::max(max_radius(source.points), max_radius(target.points));
  double mu = scale * scale;
  const double mu_min = delta * delta;

  Pose pose;
  std::vector<double> w(corr.size());
  int iter = 0;
  for (; iter < cfg.gnc_iters; ++iter) {
    if (iter > 0 && iter % cfg.anneal_every == 0 && mu > mu_min) mu = std::max(mu / cfg.anneal_factor, mu_min);
    for (std::size_t k = 0; k < corr.size(); ++k) {
      const double r2 = (pose * src[k] - dst[k]).squaredNorm();
      const double s = mu / (mu + r2);
      w[k] = s * s;
    }
    Pose next;
    if (!weighted_kabsch(src, dst, w, next)) break;
    pose = next;
  }

  RegistrationResult result;
  result.pose = pose;
  result.iterations = iter;
  const KdTree tree(target.points);
  double obj = 0.0;
  const Correspondences c = find_correspondences(source, tree, pose, delta, obj);
  result.fitness = static_cast<double>(c.src.size()) / static_cast<double>(source.size());
  double sq = 0.0;
  for (double d : c.dist_sq) sq += d;
  result.inlier_rmse = c.src.empty() ? 0.0 : std::sqrt(sq / static_cast<double>(c.src.size()));
  return result;
}

RegistrationResult icp_refine(const PointCloud& source, const PointCloud& target, const Pose& init,
                              const IcpConfig& cfg) {
  require(!target.empty(), "icp_refine: empty target");
  const KdTree tree(target.points);
  return icp_refine(source, target, tree, init, cfg);
}

RegistrationResult icp_refine(const PointCloud& source, const PointCloud& target, const KdTree& tree,
                              const Pose& init, const IcpConfig& cfg) {
  require(!source.empty() && !target.empty(), "icp_refine: empty cloud");
  require(tree.size() == target.size(), "icp_refine: tree does not match target");
  require(cfg.max_iter >= 0, "icp_refine: max_iter must be non-negative");
  if (target.has_normals()) target.validate();
  const double dmax = auto_corr_dist(target, cfg.max_corr_dist);

  Pose pose = init;
  double energy = 0.0;
  Correspondences c = find_correspondences(source, tree, pose, dmax, energy);
  if (c.src.empty()) fail(ErrorKind::kNoOverlap, "icp_refine: no correspondences within max_corr_dist at init");

  RegistrationResult result;
  result.objective.push_back(energy);
  int iter = 0;
  for (; iter < cfg.max_iter; ++iter) {
    if (c.src.size() < 3) break;
    Pose step;
    bool accepted = false;
    double step_norm = 0.0;
    for (int kind = target.has_normals() ? 0 : 1; kind < 2 && !accepted; ++kind) {
      const bool ok = kind == 0 ? point_to_plane_step(source, target, c, pose, step)
                                : point_to_point_step(source, target, c, pose, step);
      if (!ok) continue;
      const Pose candidate = step * pose;
      double e = 0.0;
      Correspondences cc = find_correspondences(source, tree, candidate, dmax, e);
      if (e <= energy) {
        pose = candidate;
        energy = e;
        c = std::move(cc);
        step_norm = step_size(step);
        accepted = true;
      }
    }
    if (!accepted) break;
    result.objective.push_back(energy);
    if (step_norm < cfg.convergence) {
      ++iter;
      break;
    }
  }

  result.pose = pose;
  result.iterations = iter;
  result.fitness = static_cast<double>(c.src.size()) / static_cast<double>(source.size());
  double sq = 0.0;
  for (double d : c.dist_sq) sq += d;
  result.inlier_rmse = c.src.empty() ? 0.0 : std::sqrt(sq / static_cast<double>(c.src.size()));
  return result;
}

}  // namespace symlabel
