#pragma once

#include <string>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "symlabel/ipdf.hpp"
#include "symlabel/so3.hpp"

namespace symlabel {

inline constexpr double kRecallThreshold = 1e-3;

/// Mean metrics over an evaluation set. Angles in degrees, llh in nats.
struct MetricsReport {
  double llh = 0.0;
  double maad = 0.0;
  double recall_maad = 0.0;
  int n_frames = 0;
  int grid_level = 0;
  double threshold = kRecallThreshold;
  int recall_empty_frames = 0;  // frames where no cell passed the threshold
};

nlohmann::json to_json(const MetricsReport& r);

/// E_{R~P}[min_{R' in gt} d(R, R')] in degrees. Throws on an empty gt set.
double maad(const OrientationDistribution& dist, const std::vector<Rotation>& gt);

struct RecallResult {
  double degrees = 180.0;
  bool empty = true;  // no cell above threshold; degrees is then the 180 sentinel
};

/// Mean over gt of the distance to the nearest cell whose probability mass
/// (density x cell volume) exceeds threshold.
RecallResult recall_maad(const OrientationDistribution& dist, const std::vector<Rotation>& gt,
                         double threshold = kRecallThreshold);

struct FrameMetrics {
  std::string frame_id;
  double llh = 0.0;
  double maad = 0.0;
  double recall_maad = 0.0;
  bool recall_empty = false;
};

/// llh appends every GT rotation to the eval grid on its own (as in training).
MetricsReport evaluate(const ImplicitModel& model, const std::vector<ValidationSample>& samples, int grid_level,
                       double threshold = kRecallThreshold, int jobs = 1,
                       std::vector<FrameMetrics>* per_frame = nullptr);

/// Mollweide projection of (longitude, latitude) in radians; x in
/// [-2 sqrt2, 2 sqrt2], y in [-sqrt2, sqrt2].
Eigen::Vector2d mollweide(double longitude, double latitude);

struct ProjectedRotation {
  double longitude = 0.0, latitude = 0.0;
  Eigen::Vector2d xy = Eigen::Vector2d::Zero();
  double tilt = 0.0;  // radians in [0, 2 pi)
};

/// Direction R ez on the sphere, plus the tilt about it measured against
/// Rz(longitude) Ry(colatitude).
ProjectedRotation project_rotation(const Rotation& r);

/// Hue in degrees for a tilt angle; 0 at tilt 0.
double tilt_hue(double tilt);

struct SvgOptions {
  double threshold = kRecallThreshold;
  int width = 800;
  double max_marker = 10.0;  // px radius of the most probable cell
  std::string title;
};

/// Scatter of every cell above threshold, area proportional to probability,
/// colour from tilt; GT rotations as outlined circles.
std::string mollweide_svg(const OrientationDistribution& dist, const std::vector<Rotation>& gt = {},
                          const SvgOptions& options = {});

}  // namespace symlabel
