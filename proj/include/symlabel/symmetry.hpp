#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "symlabel/geom.hpp"
#include "symlabel/so3.hpp"

namespace symlabel {

enum class SymmetryKind { kDiscrete, kContinuousAxis, kMixed };

std::string to_string(SymmetryKind kind);
SymmetryKind symmetry_kind_from_string(const std::string& s);

/// Proper rotational symmetries of a centered mesh. `rotations` is the
/// discrete part (identity first); each axis contributes a continuous family
/// of rotations composed on the left of every discrete member.
struct SymmetrySet {
  SymmetryKind kind = SymmetryKind::kDiscrete;
  std::vector<Rotation> rotations{Rotation::identity()};
  std::vector<Eigen::Vector3d> axes;
  double tolerance = 0.0;
};

struct SymmetryOptions {
  int grid_level = 3;
  /// Residual threshold in meters; <= 0 selects 0.5% of the bounding radius.
  double tolerance = 0.0;
  int sample_count = 2000;
  /// Co-axial accepted rotations needed to report a continuous axis.
  int ring_min = 16;
  double axis_tolerance_deg = 2.0;
  std::uint64_t seed = 0x5e1f5eedULL;
};

/// Evaluates the symmetry residual: mean distance from the rotated surface
/// sample to the mesh surface, for a mesh re-centered at its centroid.
class SymmetryScorer {
 public:
  SymmetryScorer(const TriangleMesh& mesh, int sample_count, std::uint64_t seed);

  double residual(const Rotation& r) const;
  /// Residual with early rejection: returns +inf as soon as the residual is
  /// known (or, after a partial sample, very likely) to exceed `bound`.
  double residual_bounded(const Rotation& r, double bound) const;
  /// Rotation-only point-to-plane Gauss-Newton towards a local residual minimum.
  Rotation refine(const Rotation& start, int max_iter = 40) const;

  const TriangleMesh& mesh() const { return surface_.mesh(); }
  const Points& samples() const { return samples_; }
  double bounding_radius() const { return bounding_radius_; }
  double mean_radius() const { return mean_radius_; }

 private:
  MeshSurface surface_;
  Points samples_;
  double bounding_radius_ = 0.0;
  double mean_radius_ = 0.0;
};

SymmetrySet detect_symmetries(const TriangleMesh& mesh, const SymmetryOptions& options = {});
SymmetrySet detect_symmetries(const TriangleMesh& mesh, int grid_level, double tol);

/// Continuous axes expanded into n_per_axis equally spaced rotations and
/// composed with each discrete member; near-duplicates (closer than
/// pi / n_per_axis) merged.
std::vector<Rotation> discretize(const SymmetrySet& set, int n_per_axis = 200);

/// The GT orientation set of an object observed at `pose_rotation`.
std::vector<Rotation> symmetric_orientations(const Rotation& pose_rotation,
                                             const std::vector<Rotation>& discretized);

nlohmann::json to_json(const SymmetrySet& set);
SymmetrySet symmetry_from_json(const nlohmann::json& j);
void write_symmetry_file(const std::filesystem::path& path, const SymmetrySet& set);
SymmetrySet read_symmetry_file(const std::filesystem::path& path);

}  // namespace symlabel
