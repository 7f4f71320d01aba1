#include "symlabel/render.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>

#include "symlabel/binary_io.hpp"
#include "symlabel/error.hpp"

namespace symlabel {
namespace {

constexpr double kNearPlane = 1e-4;

// Sutherland-Hodgman against z >= kNearPlane. At most 4 output vertices.
int clip_near(const std::array<Eigen::Vector3d, 3>& in, std::array<Eigen::Vector3d, 4>& out) {
  int n = 0;
  for (int i = 0; i < 3; ++i) {
    const Eigen::Vector3d& a = in[i];
    const Eigen::Vector3d& b = in[(i + 1) % 3];
    const bool a_in = a.z() >= kNearPlane;
    const bool b_in = b.z() >= kNearPlane;
    if (a_in) out[n++] = a;
    if (a_in != b_in) {
      const double t = (kNearPlane - a.z()) / (b.z() - a.z());
      out[n++] = a + t * (b - a);
    }
  }
  return n;
}

bool top_left(const Eigen::Vector2d& a, const Eigen::Vector2d& b) {
  const Eigen::Vector2d d = b - a;
  return d.y() > 0.0 || (d.y() == 0.0 && d.x() < 0.0);
}

double edge(const Eigen::Vector2d& a, const Eigen::Vector2d& b, const Eigen::Vector2d& p) {
  return (b.x() - a.x()) * (p.y() - a.y()) - (b.y() - a.y()) * (p.x() - a.x());
}

void raster_triangle(const std::array<Eigen::Vector3d, 3>& cam_pts, int tri_index,
                     const CameraIntrinsics& cam, Raster& out) {
  std::array<Eigen::Vector2d, 3> s;
  std::array<double, 3> inv_z;
  for (int i = 0; i < 3; ++i) {
    inv_z[i] = 1.0 / cam_pts[i].z();
    s[i] = {cam.fx * cam_pts[i].x() * inv_z[i] + cam.cx, cam.fy * cam_pts[i].y() * inv_z[i] + cam.cy};
  }
  double area = edge(s[0], s[1], s[2]);
  if (area == 0.0 || !std::isfinite(area)) return;
  if (area < 0.0) {
    std::swap(s[1], s[2]);
    std::swap(inv_z[1], inv_z[2]);
    area = -area;
  }
  const double min_x = std::min({s[0].x(), s[1].x(), s[2].x()});
  const double max_x = std::max({s[0].x(), s[1].x(), s[2].x()});
  const double min_y = std::min({s[0].y(), s[1].y(), s[2].y()});
  const double max_y = std::max({s[0].y(), s[1].y(), s[2].y()});
  const int u0 = std::max(0, static_cast<int>(std::ceil(min_x)));
  const int u1 = std::min(cam.width - 1, static_cast<int>(std::floor(max_x)));
  const int v0 = std::max(0, static_cast<int>(std::ceil(min_y)));
  const int v1 = std::min(cam.height - 1, static_cast<int>(std::floor(max_y)));
  if (u0 > u1 || v0 > v1) return;

  const bool tl0 = top_left(s[1], s[2]);
  const bool tl1 = top_left(s[2], s[0]);
  const bool tl2 = top_left(s[0], s[1]);
  for (int v = v0; v <= v1; ++v) {
    for (int u = u0; u <= u1; ++u) {
      const Eigen::Vector2d p(u, v);
      const double w0 = edge(s[1], s[2], p);
      const double w1 = edge(s[2], s[0], p);
      const double w2 = edge(s[0], s[1], p);
      if (w0 < 0.0 || w1 < 0.0 || w2 < 0.0) continue;
      if ((w0 == 0.0 && !tl0) || (w1 == 0.0 && !tl1) || (w2 == 0.0 && !tl2)) continue;
      const double iz = (w0 * inv_z[0] + w1 * inv_z[1] + w2 * inv_z[2]) / area;
      if (!(iz > 0.0)) continue;
      const auto z = static_cast<float>(1.0 / iz);
      float& d = out.depth.at(u, v);
      if (d == 0.0f || z < d) {
        d = z;
        out.triangle[static_cast<std::size_t>(v) * cam.width + u] = tri_index;
      }
    }
  }
}

}  // namespace

void CameraIntrinsics::validate() const {
  require(fx > 0 && fy > 0, "focal lengths must be positive");
  require(width > 0 && height > 0, "image size must be positive");
  require(cx >= 0 && cx < width && cy >= 0 && cy < height, "principal point outside the image");
}

std::size_t DepthImage::valid_count() const {
  return static_cast<std::size_t>(std::count_if(depth.begin(), depth.end(), [](float d) { return d > 0.0f; }));
}

std::size_t Mask::count() const {
  return static_cast<std::size_t>(std::count_if(data.begin(), data.end(), [](std::uint8_t m) { return m != 0; }));
}

Raster rasterize(const TriangleMesh& mesh, const Pose& pose, const CameraIntrinsics& cam) {
  cam.validate();
  mesh.validate();
  Raster out{DepthImage(cam.width, cam.height),
             std::vector<int>(static_cast<std::size_t>(cam.width) * cam.height, -1)};
  Points verts;
  verts.reserve(mesh.vertices.size());
  for (const auto& v : mesh.vertices) verts.push_back(pose * v);

  std::array<Eigen::Vector3d, 4> poly;
  for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
    const auto& tri = mesh.triangles[t];
    const std::array<Eigen::Vector3d, 3> in{verts[tri[0]], verts[tri[1]], verts[tri[2]]};
    if (in[0].z() < kNearPlane && in[1].z() < kNearPlane && in[2].z() < kNearPlane) continue;
    const int n = clip_near(in, poly);
    for (int k = 1; k + 1 < n; ++k) {
      raster_triangle({poly[0], poly[k], poly[k + 1]}, static_cast<int>(t), cam, out);
    }
  }
  return out;
}

DepthImage rasterize_depth(const TriangleMesh& mesh, const Pose& pose, const CameraIntrinsics& cam) {
  return rasterize(mesh, pose, cam).depth;
}

PointCloud unproject(const DepthImage& depth, const CameraIntrinsics& cam, const Mask* mask) {
  require(depth.width == cam.width && depth.height == cam.height, "depth size differs from intrinsics");
  if (mask) require(mask->width == depth.width && mask->height == depth.height, "mask size differs from depth");
  PointCloud cloud;
  for (int v = 0; v < depth.height; ++v) {
    for (int u = 0; u < depth.width; ++u) {
      const double d = depth.at(u, v);
      if (!(d > 0.0)) continue;
      if (mask && !mask->at(u, v)) continue;
      cloud.points.emplace_back((u - cam.cx) * d / cam.fx, (v - cam.cy) * d / cam.fy, d);
    }
  }
  return cloud;
}

double compare_depth(const DepthImage& rendered, const DepthImage& observed, const Mask& mask,
                     double silhouette_penalty) {
  require(rendered.width == observed.width && rendered.height == observed.height,
          "compare_depth needs equal image sizes");
  require(mask.width == rendered.width && mask.height == rendered.height, "mask size differs from depth");
  double sum = 0.0;
  std::size_t union_count = 0;
  for (std::size_t i = 0; i < rendered.depth.size(); ++i) {
    if (!mask.data[i]) continue;
    const bool r = rendered.depth[i] > 0.0f;
    const bool o = observed.depth[i] > 0.0f;
    if (!r && !o) continue;
    ++union_count;
    if (r && o) {
      sum += std::abs(static_cast<double>(rendered.depth[i]) - static_cast<double>(observed.depth[i]));
    } else {
      sum += silhouette_penalty;
    }
  }
  if (union_count == 0) return kMaxScore;
  return sum / static_cast<double>(union_count);
}

double compare_depth(const DepthImage& rendered, const DepthImage& observed, double silhouette_penalty) {
  return compare_depth(rendered, observed, Mask(rendered.width, rendered.height, 1), silhouette_penalty);
}

void write_depth(const std::filesystem::path& path, const DepthImage& depth) {
  std::ofstream os(path, std::ios::binary);
  if (!os) fail(ErrorKind::kIo, "cannot write " + path.string());
  binio::write_magic(os, "DPTH");
  binio::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(depth.width));
  binio::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(depth.height));
  for (float d : depth.depth) binio::write_le(os, d);
  if (!os) fail(ErrorKind::kIo, "write failed: " + path.string());
}

DepthImage read_depth(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail(ErrorKind::kIo, "cannot read " + path.string());
  binio::expect_magic(is, "DPTH");
  const auto w = binio::read_le<std::uint32_t>(is);
  const auto h = binio::read_le<std::uint32_t>(is);
  DepthImage depth(static_cast<int>(w), static_cast<int>(h));
  for (float& d : depth.depth) {
    d = binio::read_le<float>(is);
    if (!std::isfinite(d)) fail(ErrorKind::kData, path.string() + ": non-finite depth");
  }
  return depth;
}

void write_mask(const std::filesystem::path& path, const Mask& mask) {
  std::ofstream os(path, std::ios::binary);
  if (!os) fail(ErrorKind::kIo, "cannot write " + path.string());
  binio::write_magic(os, "MASK");
  binio::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(mask.width));
  binio::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(mask.height));
  os.write(reinterpret_cast<const char*>(mask.data.data()), static_cast<std::streamsize>(mask.data.size()));
  if (!os) fail(ErrorKind::kIo, "write failed: " + path.string());
}

Mask read_mask(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail(ErrorKind::kIo, "cannot read " + path.string());
  binio::expect_magic(is, "MASK");
  const auto w = binio::read_le<std::uint32_t>(is);
  const auto h = binio::read_le<std::uint32_t>(is);
  Mask mask(static_cast<int>(w), static_cast<int>(h));
  is.read(reinterpret_cast<char*>(mask.data.data()), static_cast<std::streamsize>(mask.data.size()));
  if (!is) fail(ErrorKind::kData, path.string() + ": truncated mask");
  for (auto m : mask.data) {
    if (m > 1) fail(ErrorKind::kData, path.string() + ": mask values must be 0 or 1");
  }
  return mask;
}

}  // namespace symlabel
