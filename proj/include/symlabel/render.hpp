#pragma once

#include <cstdint>
#include <filesystem>
#include <limits>
#include <vector>

#include "symlabel/geom.hpp"
#include "symlabel/so3.hpp"

namespace symlabel {

struct CameraIntrinsics {
  double fx = 0, fy = 0, cx = 0, cy = 0;
  int width = 0, height = 0;

  void validate() const;
};

/// Row-major depth raster in meters; 0 marks an invalid pixel.
struct DepthImage {
  int width = 0, height = 0;
  std::vector<float> depth;

  DepthImage() = default;
  DepthImage(int w, int h) : width(w), height(h), depth(static_cast<std::size_t>(w) * h, 0.0f) {}

  float& at(int u, int v) { return depth[static_cast<std::size_t>(v) * width + u]; }
  float at(int u, int v) const { return depth[static_cast<std::size_t>(v) * width + u]; }
  std::size_t valid_count() const;
};

/// Binary raster, values in {0, 1}.
struct Mask {
  int width = 0, height = 0;
  std::vector<std::uint8_t> data;

  Mask() = default;
  Mask(int w, int h, std::uint8_t fill = 0)
      : width(w), height(h), data(static_cast<std::size_t>(w) * h, fill) {}

  std::uint8_t& at(int u, int v) { return data[static_cast<std::size_t>(v) * width + u]; }
  std::uint8_t at(int u, int v) const { return data[static_cast<std::size_t>(v) * width + u]; }
  std::size_t count() const;
};

struct Raster {
  DepthImage depth;
  std::vector<int> triangle;  // per pixel, -1 where uncovered
};

/// Z-buffered rasterization with perspective-correct depth. Pixel (u, v)
/// samples the image-plane point (u, v); edges shared by two triangles are
/// filled once (top-left rule). No back-face culling.
Raster rasterize(const TriangleMesh& mesh, const Pose& pose, const CameraIntrinsics& cam);
DepthImage rasterize_depth(const TriangleMesh& mesh, const Pose& pose, const CameraIntrinsics& cam);

PointCloud unproject(const DepthImage& depth, const CameraIntrinsics& cam, const Mask* mask = nullptr);

inline constexpr double kMaxScore = std::numeric_limits<double>::max();
inline constexpr double kDefaultSilhouettePenalty = 0.05;

/// Render-and-compare score (meters, lower is better). Over the pixels of
/// `mask` valid in either image: |d_r - d_o| where both are valid, plus
/// `silhouette_penalty` where exactly one is, averaged over that union.
/// Returns kMaxScore when the union is empty.
double compare_depth(const DepthImage& rendered, const DepthImage& observed, const Mask& mask,
                     double silhouette_penalty = kDefaultSilhouettePenalty);
double compare_depth(const DepthImage& rendered, const DepthImage& observed,
                     double silhouette_penalty = kDefaultSilhouettePenalty);

void write_depth(const std::filesystem::path& path, const DepthImage& depth);
DepthImage read_depth(const std::filesystem::path& path);
void write_mask(const std::filesystem::path& path, const Mask& mask);
Mask read_mask(const std::filesystem::path& path);

}  // namespace symlabel
