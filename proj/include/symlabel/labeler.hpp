#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "symlabel/fpfh.hpp"
#include "symlabel/register.hpp"
#include "symlabel/render.hpp"
#include "symlabel/scenegen.hpp"

namespace symlabel {

struct PoseLabel {
  Pose pose;
  double score = kMaxScore;
  std::uint64_t seed = 0;
};

struct PoseLabelSet {
  std::string frame_id;
  std::string mesh_id;
  std::vector<PoseLabel> labels;  // ascending score
};

struct LabelerConfig {
  int attempts = 10;
  double accept_score = 0.01;        // meters
  double voxel_size = 0.0;           // 0 = bounding radius / 15
  double fpfh_radius = 0.0;          // 0 = 4 voxels
  int normal_neighbours = 10;
  double fpfh_min_normal_dot = -0.5;
  double icp_corr_voxels = 1.5;      // ICP max correspondence distance, in voxels
  double silhouette_penalty = kDefaultSilhouettePenalty;
  GlobalRegistrationConfig global;
  IcpConfig icp;
};

/// Object-frame data shared by every attempt on one mesh.
class LabelModel {
 public:
  LabelModel(const TriangleMesh& mesh, const LabelerConfig& config);

  const TriangleMesh& mesh() const { return mesh_; }
  double voxel() const { return voxel_; }
  double fpfh_radius() const { return fpfh_radius_; }
  const PointCloud& dense() const { return dense_; }
  const KdTree& dense_tree() const { return dense_tree_; }
  /// Model cloud for global registration, posed at `pose` and processed
  /// like an observation: voxel filter, then PCA normals (oriented by the
  /// face normals). Seeded per attempt.
  PointCloud registration_cloud(std::uint64_t seed, const Pose& pose, int normal_neighbours) const;

 private:
  TriangleMesh mesh_;
  double voxel_ = 0.0;
  double fpfh_radius_ = 0.0;
  int sample_count_ = 0;
  PointCloud dense_;
  KdTree dense_tree_;
};

/// Observed-side data for one frame.
struct ObservedCloud {
  PointCloud cloud;  // downsampled, normals facing the camera
  FpfhDescriptorSet features;
  DepthImage depth;  // masked observed depth
};

ObservedCloud prepare_observation(const RgbdFrame& frame, const LabelModel& model, const LabelerConfig& config);

/// One P0 -> FGR -> ICP -> render-and-compare attempt. Registration failures
/// come back as kMaxScore.
PoseLabel label_attempt(const RgbdFrame& frame, const ObservedCloud& obs, const LabelModel& model,
                        const LabelerConfig& config, std::uint64_t attempt_seed);

/// Best of config.attempts attempts (attempt a uses mix_seed(seed, a)).
/// Throws kLabelRejected when nothing reaches config.accept_score.
/// `all_attempts` (optional) receives every attempt in order.
PoseLabel label_frame(const RgbdFrame& frame, const LabelModel& model, const LabelerConfig& config,
                      std::uint64_t seed, std::vector<PoseLabel>* all_attempts = nullptr);
PoseLabel label_frame(const RgbdFrame& frame, const TriangleMesh& mesh, int attempts, double accept_score,
                      std::uint64_t seed);

std::uint64_t label_seed(std::uint64_t global_seed, const std::string& frame_id, int label_index);

struct LabelRunSummary {
  int frames = 0;
  int labeled_frames = 0;
  int labels = 0;
  int rejected = 0;
  std::vector<std::string> skipped;  // frames without any accepted label
};

/// labels_per_frame labels for each listed frame. Output is ordered by
/// frame id and does not depend on `jobs`.
std::vector<PoseLabelSet> build_label_set(const Dataset& dataset, const std::vector<FrameRecord>& frames,
                                          const TriangleMesh& mesh, int labels_per_frame,
                                          const LabelerConfig& config, std::uint64_t seed, int jobs,
                                          LabelRunSummary* summary = nullptr);

void write_labels(const std::filesystem::path& path, const std::vector<PoseLabelSet>& sets);
std::vector<PoseLabelSet> read_labels(const std::filesystem::path& path);

}  // namespace symlabel
