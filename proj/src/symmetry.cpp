#include "symlabel/symmetry.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>

#include <Eigen/Cholesky>

#include "symlabel/error.hpp"

namespace symlabel {
namespace {

constexpr double kPi = std::numbers::pi;

Eigen::Vector3d canonical_axis(Eigen::Vector3d a) {
  int i;
  a.cwiseAbs().maxCoeff(&i);
  return a[i] < 0.0 ? Eigen::Vector3d(-a) : a;
}

double axis_angle_between(const Eigen::Vector3d& a, const Eigen::Vector3d& b) {
  return std::acos(std::clamp(std::abs(a.dot(b)), 0.0, 1.0));
}

/// True when r is (close to) a rotation about `axis` or the identity.
bool about_axis(const Rotation& r, const Eigen::Vector3d& axis, double axis_tol, double angle_tol) {
  if (r.angle() < angle_tol) return true;
  return axis_angle_between(r.axis(), axis) < axis_tol;
}

}  // namespace

std::string to_string(SymmetryKind kind) {
  switch (kind) {
    case SymmetryKind::kDiscrete: return "discrete";
    case SymmetryKind::kContinuousAxis: return "continuous-axis";
    case SymmetryKind::kMixed: return "mixed";
  }
  return "discrete";
}

SymmetryKind symmetry_kind_from_string(const std::string& s) {
  if (s == "discrete") return SymmetryKind::kDiscrete;
  if (s == "continuous-axis") return SymmetryKind::kContinuousAxis;
  if (s == "mixed") return SymmetryKind::kMixed;
  fail(ErrorKind::kData, "unknown symmetry kind '" + s + "'");
}

SymmetryScorer::SymmetryScorer(const TriangleMesh& mesh, int sample_count, std::uint64_t seed)
    : surface_(centered(mesh)) {
  require(sample_count >= 10, "symmetry scorer needs at least 10 samples");
  samples_ = sample_surface(surface_.mesh(), sample_count, seed).points;
  bounding_radius_ = surface_.mesh().bounding_radius();
  if (!(bounding_radius_ > 0.0)) fail(ErrorKind::kInvalidArgument, "degenerate mesh");
  for (const auto& p : samples_) mean_radius_ += p.norm();
  mean_radius_ /= static_cast<double>(samples_.size());
}

double SymmetryScorer::residual(const Rotation& r) const {
  const Eigen::Matrix3d m = r.matrix();
  double sum = 0.0;
  for (const auto& p : samples_) sum += surface_.distance(m * p);
  return sum / static_cast<double>(samples_.size());
}

double SymmetryScorer::residual_bounded(const Rotation& r, double bound) const {
  const Eigen::Matrix3d m = r.matrix();
  const auto n = samples_.size();
  const double total_bound = bound * static_cast<double>(n);
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sum += surface_.distance(m * samples_[i]);
    // The sample is i.i.d. over the surface, so an early partial mean far
    // above the bound rejects; past n * bound the rejection is exact.
    if ((i + 1 == 50 && sum > 4.0 * bound * 50) || (i + 1 == 200 && sum > 2.0 * bound * 200) ||
        sum > total_bound) {
      return std::numeric_limits<double>::infinity();
    }
  }
  return sum / static_cast<double>(n);
}

Rotation SymmetryScorer::refine(const Rotation& start, int max_iter) const {
  Rotation r = start;
  for (int it = 0; it < max_iter; ++it) {
    const Eigen::Matrix3d m = r.matrix();
    Eigen::Matrix3d h = Eigen::Matrix3d::Zero();
    Eigen::Vector3d g = Eigen::Vector3d::Zero();
    for (const auto& p : samples_) {
      const Eigen::Vector3d y = m * p;
      const auto c = surface_.closest(y);
      const Eigen::Vector3d& nrm = surface_.normal(c.triangle);
      const double res = (y - c.point).dot(nrm);
      const Eigen::Vector3d j = y.cross(nrm);
      h += j * j.transpose();
      g += j * res;
    }
    // Continuous symmetries make h rank deficient; damping keeps the step
    // inside the well-determined subspace.
    h += (1e-9 * h.trace() + 1e-30) * Eigen::Matrix3d::Identity();
    const Eigen::Vector3d step = -h.ldlt().solve(g);
    if (!step.allFinite()) break;
    r = exp_map(step) * r;
    if (step.norm() < 1e-12) break;
  }
  return r;
}

SymmetrySet detect_symmetries(const TriangleMesh& mesh, int grid_level, double tol) {
  SymmetryOptions opt;
  opt.grid_level = grid_level;
  opt.tolerance = tol;
  return detect_symmetries(mesh, opt);
}

SymmetrySet detect_symmetries(const TriangleMesh& mesh, const SymmetryOptions& options) {
  mesh.validate();
  if (mesh.triangles.empty() || !(mesh.surface_area() > 0.0)) {
    fail(ErrorKind::kInvalidArgument, "degenerate mesh");
  }
  const SymmetryScorer scorer(mesh, options.sample_count, options.seed);
  const double tol = options.tolerance > 0.0 ? options.tolerance : 0.005 * scorer.bounding_radius();
  const EquivolumetricGrid grid = generate_grid(options.grid_level);

  // Radius of a ball with the volume of one grid cell (Haar volume pi^2 / N
  // is ~ pi r^3 / 6 for small r); the nearest grid point to any rotation is
  // within a small multiple of it.
  const double cell_radius = std::cbrt(6.0 * kPi / static_cast<double>(grid.size()));
  const double candidate_bound = tol + scorer.mean_radius() * 1.5 * cell_radius;

  struct Candidate {
    int index;
    double residual;
  };
  std::vector<Candidate> candidates;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const double res = scorer.residual_bounded(grid.rotations[i], candidate_bound);
    if (res <= candidate_bound) candidates.push_back({static_cast<int>(i), res});
  }

  // Seeds: candidates that are the lowest residual in their neighbourhood.
  const double neighbourhood = 2.0 * cell_radius;
  std::vector<Rotation> seeds;
  for (const auto& c : candidates) {
    bool is_min = true;
    for (const auto& o : candidates) {
      if (o.index == c.index) continue;
      if (o.residual < c.residual || (o.residual == c.residual && o.index < c.index)) {
        if (geodesic_distance(grid.rotations[o.index], grid.rotations[c.index]) < neighbourhood) {
          is_min = false;
          break;
        }
      }
    }
    if (is_min) seeds.push_back(grid.rotations[c.index]);
  }

  struct Accepted {
    Rotation rotation;
    double residual;
  };
  std::vector<Accepted> accepted{{Rotation::identity(), 0.0}};
  const double merge = 1.0 * kPi / 180.0;
  for (const auto& s : seeds) {
    const Rotation r = scorer.refine(s);
    const double res = scorer.residual(r);
    if (res > tol) continue;
    const bool dup = std::any_of(accepted.begin(), accepted.end(), [&](const Accepted& a) {
      return geodesic_distance(a.rotation, r) < merge;
    });
    if (!dup) accepted.push_back({r, res});
  }
  std::stable_sort(accepted.begin() + 1, accepted.end(),
                   [](const Accepted& a, const Accepted& b) { return a.residual < b.residual; });

  // Continuous axes: clusters of at least ring_min co-axial rotations.
  const double axis_tol = options.axis_tolerance_deg * kPi / 180.0;
  SymmetrySet out;
  out.tolerance = tol;
  std::vector<Eigen::Vector3d> axes;
  {
    std::vector<Eigen::Vector3d> member_axes;
    for (std::size_t i = 1; i < accepted.size(); ++i) {
      if (accepted[i].rotation.angle() > merge) member_axes.push_back(canonical_axis(accepted[i].rotation.axis()));
    }
    std::vector<bool> used(member_axes.size(), false);
    for (std::size_t i = 0; i < member_axes.size(); ++i) {
      if (used[i]) continue;
      std::vector<std::size_t> cluster;
      for (std::size_t j = i; j < member_axes.size(); ++j) {
        if (!used[j] && axis_angle_between(member_axes[i], member_axes[j]) < axis_tol) cluster.push_back(j);
      }
      if (static_cast<int>(cluster.size()) < options.ring_min) continue;
      Eigen::Vector3d mean = Eigen::Vector3d::Zero();
      for (std::size_t j : cluster) {
        used[j] = true;
        mean += member_axes[j].dot(member_axes[i]) < 0 ? Eigen::Vector3d(-member_axes[j]) : member_axes[j];
      }
      axes.push_back(canonical_axis(mean.normalized()));
    }
  }
  out.axes = axes;

  // Discrete representatives, modulo the continuous subgroup when present.
  out.rotations = {Rotation::identity()};
  for (std::size_t i = 1; i < accepted.size(); ++i) {
    const Rotation& r = accepted[i].rotation;
    bool known = false;
    for (const Rotation& rep : out.rotations) {
      const Rotation rel = r * rep.inverse();
      if (rel.angle() < merge) {
        known = true;
      } else {
        for (const auto& a : axes) known = known || about_axis(rel, a, axis_tol, merge);
      }
      if (known) break;
    }
    if (!known) out.rotations.push_back(r);
  }

  if (axes.empty()) {
    out.kind = SymmetryKind::kDiscrete;
  } else {
    out.kind = out.rotations.size() > 1 ? SymmetryKind::kMixed : SymmetryKind::kContinuousAxis;
  }
  return out;
}

std::vector<Rotation> discretize(const SymmetrySet& set, int n_per_axis) {
  require(n_per_axis >= 1, "n_per_axis must be >= 1");
  std::vector<Rotation> family{Rotation::identity()};
  for (const auto& axis : set.axes) {
    std::vector<Rotation> next;
    next.reserve(family.size() * n_per_axis);
    for (int k = 0; k < n_per_axis; ++k) {
      const Rotation ring = Rotation::from_axis_angle(axis, 2.0 * kPi * k / n_per_axis);
      for (const Rotation& f : family) next.push_back(ring * f);
    }
    family = std::move(next);
  }
  std::vector<Rotation> all;
  all.reserve(family.size() * set.rotations.size());
  for (const Rotation& m : set.rotations)
    for (const Rotation& f : family) all.push_back(f * m);

  const double merge = kPi / static_cast<double>(n_per_axis);
  std::vector<Rotation> out;
  for (const Rotation& r : all) {
    const bool dup = std::any_of(out.begin(), out.end(),
                                 [&](const Rotation& o) { return geodesic_distance(o, r) < merge; });
    if (!dup) out.push_back(r);
  }
  return out;
}

std::vector<Rotation> symmetric_orientations(const Rotation& pose_rotation,
                                             const std::vector<Rotation>& discretized) {
  std::vector<Rotation> out;
  out.reserve(discretized.size());
  for (const Rotation& m : discretized) out.push_back(pose_rotation * m);
  return out;
}

nlohmann::json to_json(const SymmetrySet& set) {
  nlohmann::json j;
  j["kind"] = to_string(set.kind);
  j["quaternions"] = nlohmann::json::array();
  for (const Rotation& r : set.rotations) {
    const auto& q = r.quaternion();
    j["quaternions"].push_back({q.w(), q.x(), q.y(), q.z()});
  }
  j["axes"] = nlohmann::json::array();
  for (const auto& a : set.axes) j["axes"].push_back({a.x(), a.y(), a.z()});
  j["tolerance"] = set.tolerance;
  return j;
}

SymmetrySet symmetry_from_json(const nlohmann::json& j) {
  try {
    SymmetrySet set;
    set.kind = symmetry_kind_from_string(j.at("kind").get<std::string>());
    set.rotations.clear();
    for (const auto& q : j.at("quaternions")) {
      set.rotations.push_back(Rotation::from_wxyz(q.at(0), q.at(1), q.at(2), q.at(3)));
    }
    for (const auto& a : j.at("axes")) {
      set.axes.push_back(Eigen::Vector3d(a.at(0), a.at(1), a.at(2)).normalized());
    }
    set.tolerance = j.at("tolerance").get<double>();
    if (set.rotations.empty()) fail(ErrorKind::kData, "symmetry set without rotations");
    return set;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kData, std::string("bad symmetry json: ") + e.what());
  }
}

void write_symmetry_file(const std::filesystem::path& path, const SymmetrySet& set) {
  std::ofstream os(path);
  if (!os) fail(ErrorKind::kIo, "cannot write " + path.string());
  os << to_json(set).dump(2) << '\n';
}

SymmetrySet read_symmetry_file(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) fail(ErrorKind::kIo, "cannot read " + path.string());
  try {
    return symmetry_from_json(nlohmann::json::parse(is));
  } catch (const nlohmann::json::parse_error& e) {
    fail(ErrorKind::kData, path.string() + ": " + e.what());
  }
}

}  // namespace symlabel
