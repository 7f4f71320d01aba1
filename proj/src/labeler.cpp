#include "symlabel/labeler.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <json.hpp>

#include "symlabel/error.hpp"
#include "symlabel/parallel.hpp"
#include "symlabel/rng.hpp"

namespace symlabel {
namespace {

double resolve_voxel(const TriangleMesh& mesh, const LabelerConfig& config) {
  if (config.voxel_size > 0.0) return config.voxel_size;
  return mesh.bounding_radius() / 15.0;
}

int clamp_count(double n, int lo, int hi) {
  return static_cast<int>(std::clamp(std::lround(n), static_cast<long>(lo), static_cast<long>(hi)));
}

PointCloud dense_sample(const TriangleMesh& mesh, double voxel) {
  const int n = clamp_count(mesh.surface_area() / (voxel * voxel) * 9.0, 2000, 30000);
  return sample_surface(mesh, n, 0xde75eULL);
}

}  // namespace

LabelModel::LabelModel(const TriangleMesh& mesh, const LabelerConfig& config)
    : mesh_(mesh),
      voxel_(resolve_voxel(mesh, config)),
      fpfh_radius_(config.fpfh_radius > 0.0 ? config.fpfh_radius : 4.0 * voxel_),
      sample_count_(clamp_count(mesh.surface_area() / (voxel_ * voxel_) * 9.0, 2000, 30000)),
      dense_(dense_sample(mesh, voxel_)),
      dense_tree_(dense_.points) {
  mesh_.validate();
}

PointCloud LabelModel::registration_cloud(std::uint64_t seed, const Pose& pose, int normal_neighbours) const {
  const PointCloud sample = transform(sample_surface(mesh_, sample_count_, seed), pose);
  return refine_normals(voxel_downsample(sample, voxel_, true), normal_neighbours);
}

ObservedCloud prepare_observation(const RgbdFrame& frame, const LabelModel& model, const LabelerConfig& config) {
  if (frame.mask.count() == 0) fail(ErrorKind::kLabelRejected, frame.frame_id + ": empty object mask");
  ObservedCloud obs;
  obs.depth = frame.depth;
  for (std::size_t i = 0; i < obs.depth.depth.size(); ++i)
    if (!frame.mask.data[i]) obs.depth.depth[i] = 0.0f;
  const PointCloud raw = unproject(frame.depth, frame.intrinsics, &frame.mask);
  PointCloud down = voxel_downsample(raw, model.voxel());
  if (down.size() < static_cast<std::size_t>(config.normal_neighbours) + 1) {
    fail(ErrorKind::kLabelRejected, frame.frame_id + ": too few observed points");
  }
  obs.cloud = estimate_normals(down, config.normal_neighbours);
  obs.features = compute_fpfh(obs.cloud, model.fpfh_radius(), config.fpfh_min_normal_dot);
  return obs;
}

PoseLabel label_attempt(const RgbdFrame& frame, const ObservedCloud& obs, const LabelModel& model,
                        const LabelerConfig& config, std::uint64_t attempt_seed) {
  PoseLabel label;
  label.seed = attempt_seed;
  Rng rng(attempt_seed);
  const Pose p0(random_rotation(rng), obs.cloud.centroid());
  const PointCloud source = model.registration_cloud(mix_seed(attempt_seed, 1), p0, config.normal_neighbours);
  try {
    const FpfhDescriptorSet fs = compute_fpfh(source, model.fpfh_radius(), config.fpfh_min_normal_dot);
    GlobalRegistrationConfig gcfg = config.global;
    gcfg.seed = mix_seed(attempt_seed, 2);
    if (gcfg.max_corr_dist <= 0.0) gcfg.max_corr_dist = model.voxel();
    const RegistrationResult global = global_register(source, obs.cloud, fs, obs.features, gcfg);
    const Pose p1 = global.pose * p0;  // model frame -> camera

    // Refine observed -> model frame against the dense object-frame sample.
    IcpConfig icfg = config.icp;
    if (icfg.max_corr_dist <= 0.0) icfg.max_corr_dist = config.icp_corr_voxels * model.voxel();
    const RegistrationResult fine = icp_refine(obs.cloud, model.dense(), model.dense_tree(), p1.inverse(), icfg);
    label.pose = fine.pose.inverse();
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::kNoCorrespondences || e.kind() == ErrorKind::kNoOverlap) return label;
    throw;
  }
  const DepthImage rendered = rasterize_depth(model.mesh(), label.pose, frame.intrinsics);
  label.score = compare_depth(rendered, obs.depth, config.silhouette_penalty);
  return label;
}

PoseLabel label_frame(const RgbdFrame& frame, const LabelModel& model, const LabelerConfig& config,
                      std::uint64_t seed, std::vector<PoseLabel>* all_attempts) {
  require(config.attempts >= 1, "attempts must be >= 1");
  const ObservedCloud obs = prepare_observation(frame, model, config);
  PoseLabel best;
  for (int a = 0; a < config.attempts; ++a) {
    const PoseLabel l = label_attempt(frame, obs, model, config, mix_seed(seed, static_cast<std::uint64_t>(a)));
    if (all_attempts) all_attempts->push_back(l);
    if (l.score < best.score) best = l;
  }
  if (!(best.score <= config.accept_score)) {
    fail(ErrorKind::kLabelRejected, frame.frame_id + ": best score " +
                                        (best.score == kMaxScore ? std::string("none") : std::to_string(best.score)) +
                                        " above accept threshold");
  }
  return best;
}

PoseLabel label_frame(const RgbdFrame& frame, const TriangleMesh& mesh, int attempts, double accept_score,
                      std::uint64_t seed) {
  LabelerConfig config;
  config.attempts = attempts;
  config.accept_score = accept_score;
  const LabelModel model(centered(mesh), config);
  return label_frame(frame, model, config, seed);
}

std::uint64_t label_seed(std::uint64_t global_seed, const std::string& frame_id, int label_index) {
  return mix_seed(mix_seed(global_seed, hash_string(frame_id)), static_cast<std::uint64_t>(label_index));
}

std::vector<PoseLabelSet> build_label_set(const Dataset& dataset, const std::vector<FrameRecord>& frames,
                                          const TriangleMesh& mesh, int labels_per_frame,
                                          const LabelerConfig& config, std::uint64_t seed, int jobs,
                                          LabelRunSummary* summary) {
  require(labels_per_frame >= 1, "labels_per_frame must be >= 1");
  const LabelModel model(mesh, config);
  std::vector<FrameRecord> order = frames;
  std::sort(order.begin(), order.end(), [](const FrameRecord& a, const FrameRecord& b) { return a.id < b.id; });

  std::vector<PoseLabelSet> sets(order.size());
  std::vector<int> rejected(order.size(), 0);
  parallel_for(order.size(), jobs, [&](std::size_t i) {
    const RgbdFrame frame = dataset.load(order[i]);
    PoseLabelSet& set = sets[i];
    set.frame_id = order[i].id;
    set.mesh_id = dataset.mesh_id();
    for (int k = 0; k < labels_per_frame; ++k) {
      try {
        set.labels.push_back(label_frame(frame, model, config, label_seed(seed, order[i].id, k)));
      } catch (const Error& e) {
        if (e.kind() != ErrorKind::kLabelRejected) throw;
        ++rejected[i];
      }
    }
    std::stable_sort(set.labels.begin(), set.labels.end(),
                     [](const PoseLabel& a, const PoseLabel& b) { return a.score < b.score; });
  });

  LabelRunSummary s;
  std::vector<PoseLabelSet> out;
  for (std::size_t i = 0; i < sets.size(); ++i) {
    ++s.frames;
    s.rejected += rejected[i];
    if (sets[i].labels.empty()) {
      s.skipped.push_back(sets[i].frame_id);
      continue;
    }
    ++s.labeled_frames;
    s.labels += static_cast<int>(sets[i].labels.size());
    out.push_back(std::move(sets[i]));
  }
  if (summary) *summary = s;
  return out;
}

void write_labels(const std::filesystem::path& path, const std::vector<PoseLabelSet>& sets) {
  std::ofstream os(path);
  if (!os) fail(ErrorKind::kIo, "cannot write " + path.string());
  for (const auto& set : sets) {
    for (const auto& l : set.labels) {
      nlohmann::json j;
      j["frame_id"] = set.frame_id;
      j["mesh_id"] = set.mesh_id;
      j["pose"] = l.pose.row_major();
      j["score"] = l.score;
      j["seed"] = l.seed;
      os << j.dump() << '\n';
    }
  }
  if (!os) fail(ErrorKind::kIo, "write failed: " + path.string());
}

std::vector<PoseLabelSet> read_labels(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) fail(ErrorKind::kIo, "cannot read " + path.string());
  std::vector<PoseLabelSet> sets;
  std::string line;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const nlohmann::json j = nlohmann::json::parse(line);
      PoseLabel l;
      l.pose = Pose::from_row_major(j.at("pose").get<std::vector<double>>());
      l.score = j.at("score").get<double>();
      l.seed = j.at("seed").get<std::uint64_t>();
      const std::string id = j.at("frame_id").get<std::string>();
      if (sets.empty() || sets.back().frame_id != id) {
        sets.push_back({id, j.at("mesh_id").get<std::string>(), {}});
      }
      sets.back().labels.push_back(l);
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorKind::kData, path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return sets;
}

}  // namespace symlabel
