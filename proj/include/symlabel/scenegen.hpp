#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "symlabel/geom.hpp"
#include "symlabel/render.hpp"
#include "symlabel/so3.hpp"
#include "symlabel/symmetry.hpp"

namespace symlabel {

enum class Shape { kCan, kBox, kBowl };
enum class Appearance { kUniform, kTexture };

std::string to_string(Shape s);
std::string to_string(Appearance a);
Shape shape_from_string(const std::string& s);
Appearance appearance_from_string(const std::string& s);

struct RgbImage {
  int width = 0, height = 0;
  std::vector<std::uint8_t> data;  // interleaved RGB, row-major

  RgbImage() = default;
  RgbImage(int w, int h) : width(w), height(h), data(static_cast<std::size_t>(w) * h * 3, 0) {}
  std::uint8_t* px(int u, int v) { return &data[(static_cast<std::size_t>(v) * width + u) * 3]; }
  const std::uint8_t* px(int u, int v) const { return &data[(static_cast<std::size_t>(v) * width + u) * 3]; }
};

void write_ppm(const std::filesystem::path& path, const RgbImage& image);
RgbImage read_ppm(const std::filesystem::path& path);

struct RgbdFrame {
  std::string frame_id;
  RgbImage rgb;
  DepthImage depth;
  Mask mask;
  CameraIntrinsics intrinsics;
  std::optional<Pose> gt_pose;
};

/// Closed cylinder around z (watertight, `segments` side facets).
TriangleMesh make_can(double radius, double height, int segments = 64);
/// Axis-aligned cuboid: 8 vertices, 12 triangles.
TriangleMesh make_box(double sx, double sy, double sz);
/// Hemispherical shell (open at +z) of outer radius `radius`; z is the axis.
TriangleMesh make_bowl(double radius, double thickness, int segments = 48, int rings = 12);
/// Desk-scale default object; centered at its surface centroid.
TriangleMesh make_mesh(Shape shape);
/// can: {radius, height}; box: {sx, sy, sz}; bowl: {radius, thickness}.
TriangleMesh make_mesh(Shape shape, std::span<const double> dims);

/// Symmetry group of the make_mesh shapes, by construction: can = z axis plus
/// the x flip, box with distinct sides = the three half turns, bowl = z axis.
SymmetrySet analytic_symmetries(Shape shape);

CameraIntrinsics default_camera();

struct RenderOptions {
  Appearance appearance = Appearance::kUniform;
  double depth_noise_sigma = 0.0;
  std::uint64_t seed = 0;
};

/// Depth from rasterize(), mask = covered pixels, RGB flat-shaded by the
/// face normal; the texture variant colours the surface by object-frame
/// azimuth and height so geometric symmetries become visually distinct.
/// Throws kData if the object leaves no pixel in the image.
RgbdFrame render_frame(const TriangleMesh& mesh, const Pose& pose, const CameraIntrinsics& cam,
                       const RenderOptions& options, const std::string& frame_id = "frame");

struct FrameRecord {
  std::string id;
  std::string split;  // "train" | "val"
  Pose gt_pose;
};

struct DatasetConfig {
  Shape shape = Shape::kCan;
  int n_frames = 500;
  Appearance appearance = Appearance::kUniform;
  double val_fraction = 0.2;
  double depth_noise_sigma = 0.0;
  std::uint64_t seed = 1;
  double min_distance = 0.5;
  double max_distance = 0.6;
  double lateral_offset = 0.02;
};

/// Poses for frame i; Haar-uniform rotation, translation in the camera's
/// distance band. Deterministic in (seed, i).
Pose sample_frame_pose(const DatasetConfig& config, int index, int retry);
std::string frame_id_for(Shape shape, int index);

/// In-memory frames (same content generate_dataset writes).
std::vector<std::pair<FrameRecord, RgbdFrame>> synthesize_frames(const DatasetConfig& config,
                                                                 const TriangleMesh& mesh,
                                                                 const CameraIntrinsics& cam);

/// Writes frames/{id}.ppm|.depth|.mask, mesh.obj and index.json under out_dir.
void generate_dataset(const DatasetConfig& config, const std::filesystem::path& out_dir);

/// A dataset directory as written by generate_dataset.
class Dataset {
 public:
  explicit Dataset(std::filesystem::path dir);

  const std::filesystem::path& dir() const { return dir_; }
  Shape shape() const { return shape_; }
  Appearance appearance() const { return appearance_; }
  const CameraIntrinsics& intrinsics() const { return intrinsics_; }
  const TriangleMesh& mesh() const { return mesh_; }
  const std::string& mesh_id() const { return mesh_id_; }
  const std::vector<FrameRecord>& frames() const { return frames_; }
  std::vector<FrameRecord> split(const std::string& name) const;
  const FrameRecord& record(const std::string& id) const;

  RgbdFrame load(const FrameRecord& record) const;

 private:
  std::filesystem::path dir_;
  Shape shape_ = Shape::kCan;
  Appearance appearance_ = Appearance::kUniform;
  CameraIntrinsics intrinsics_;
  TriangleMesh mesh_;
  std::string mesh_id_;
  std::vector<FrameRecord> frames_;
};

}  // namespace symlabel
