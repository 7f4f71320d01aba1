#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "symlabel/so3.hpp"

namespace symlabel {

using Points = std::vector<Eigen::Vector3d>;

struct PointCloud {
  Points points;
  std::optional<Points> normals;

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }
  bool has_normals() const { return normals.has_value(); }

  /// Throws if normals are present with the wrong count or non-unit length.
  void validate() const;
  Eigen::Vector3d centroid() const;
};

PointCloud transform(const PointCloud& cloud, const Pose& pose);

struct TriangleMesh {
  Points vertices;
  std::vector<std::array<int, 3>> triangles;

  void validate() const;
  double triangle_area(std::size_t t) const;
  /// Unit normal following the winding order; zero for degenerate faces.
  Eigen::Vector3d triangle_normal(std::size_t t) const;
  double surface_area() const;
  /// Area-weighted surface centroid.
  Eigen::Vector3d centroid() const;
  /// Largest vertex distance from the surface centroid.
  double bounding_radius() const;
};

TriangleMesh transform(const TriangleMesh& mesh, const Pose& pose);
/// Mesh translated so its surface centroid is the origin.
TriangleMesh centered(const TriangleMesh& mesh);

/// 3-d tree over a fixed point set. Ties are broken by the lower index so the
/// answers do not depend on the tree layout.
class KdTree {
 public:
  struct Hit {
    int index;
    double dist_sq;
  };

  explicit KdTree(Points points);

  std::size_t size() const { return points_.size(); }
  const Points& points() const { return points_; }

  Hit nearest(const Eigen::Vector3d& q) const;
  /// The k closest points, ascending by (distance, index).
  std::vector<Hit> knn(const Eigen::Vector3d& q, int k) const;
  /// All points within radius r, ascending by (distance, index).
  void radius_search(const Eigen::Vector3d& q, double r, std::vector<Hit>& out) const;

 private:
  struct Node {
    int begin, end;          // range in order_
    int left = -1, right = -1;
    int axis = -1;
    double split = 0.0;
  };
  int build(int begin, int end);

  Points points_;
  std::vector<int> order_;
  std::vector<Node> nodes_;
};

/// Closest-point queries against a triangle surface (AABB hierarchy).
class MeshSurface {
 public:
  struct Closest {
    Eigen::Vector3d point;
    int triangle;
    double dist_sq;
  };

  explicit MeshSurface(const TriangleMesh& mesh);

  Closest closest(const Eigen::Vector3d& q) const;
  double distance(const Eigen::Vector3d& q) const;
  const TriangleMesh& mesh() const { return mesh_; }
  const Eigen::Vector3d& normal(int triangle) const { return normals_[triangle]; }

 private:
  struct Node {
    Eigen::Vector3d lo = Eigen::Vector3d::Zero(), hi = Eigen::Vector3d::Zero();
    int left = -1, right = -1;
    int begin = 0, end = 0;
  };
  int build(int begin, int end);
  void query(int node, const Eigen::Vector3d& q, Closest& best) const;

  TriangleMesh mesh_;
  Points normals_;
  std::vector<int> tri_order_;
  std::vector<Node> nodes_;
};

Eigen::Vector3d closest_point_on_triangle(const Eigen::Vector3d& p, const Eigen::Vector3d& a,
                                          const Eigen::Vector3d& b, const Eigen::Vector3d& c);

/// Area-weighted uniform surface sample with per-point face normals.
PointCloud sample_surface(const TriangleMesh& mesh, int n, std::uint64_t seed);

/// (1/|a|) sum over a of the distance to the closest point of b. Not symmetric.
double mean_closest_point_distance(const PointCloud& a, const PointCloud& b);
double mean_closest_point_distance(const PointCloud& a, const KdTree& b);

/// Mean distance from the points of `a` to the surface.
double mean_surface_distance(std::span<const Eigen::Vector3d> a, const MeshSurface& surface);

/// PCA normals over the k nearest neighbours (plus the point itself),
/// flipped to face `viewpoint`.
PointCloud estimate_normals(const PointCloud& cloud, int k,
                            const Eigen::Vector3d& viewpoint = Eigen::Vector3d::Zero());

/// Voxel-grid centroid filter; output ordered by voxel key. With
/// `split_by_normal`, points whose normal opposes the first normal seen in a
/// voxel are averaged separately (thin shells keep both walls).
PointCloud voxel_downsample(const PointCloud& cloud, double voxel, bool split_by_normal = false);
/// PCA normals using only neighbours on the same side as the point (by the
/// existing normals), oriented to agree with the existing normals.
PointCloud refine_normals(const PointCloud& cloud, int k);

/// Mean distance from each point to its nearest neighbour.
double mean_spacing(const PointCloud& cloud);

TriangleMesh read_obj(const std::filesystem::path& path);
void write_obj(const std::filesystem::path& path, const TriangleMesh& mesh);
PointCloud read_ply(const std::filesystem::path& path);
void write_ply(const std::filesystem::path& path, const PointCloud& cloud);

}  // namespace symlabel
