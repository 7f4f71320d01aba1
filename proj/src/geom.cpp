#include "symlabel/geom.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <tuple>

#include <Eigen/Eigenvalues>

#include "symlabel/error.hpp"
#include "symlabel/rng.hpp"

namespace symlabel {

void PointCloud::validate() const {
  if (!normals) return;
  require(normals->size() == points.size(), "normal count differs from point count");
  for (const auto& n : *normals) {
    require(std::abs(n.norm() - 1.0) <= 1e-6, "normals must be unit length");
  }
}

Eigen::Vector3d PointCloud::centroid() const {
  require(!points.empty(), "centroid of an empty cloud");
  Eigen::Vector3d c = Eigen::Vector3d::Zero();
  for (const auto& p : points) c += p;
  return c / static_cast<double>(points.size());
}

PointCloud transform(const PointCloud& cloud, const Pose& pose) {
  PointCloud out;
  out.points.reserve(cloud.size());
  for (const auto& p : cloud.points) out.points.push_back(pose * p);
  if (cloud.normals) {
    Points normals;
    normals.reserve(cloud.size());
    for (const auto& n : *cloud.normals) normals.push_back(pose.rotation * n);
    out.normals = std::move(normals);
  }
  return out;
}

void TriangleMesh::validate() const {
  const int nv = static_cast<int>(vertices.size());
  for (const auto& t : triangles) {
    for (int i : t) require(i >= 0 && i < nv, "triangle index out of range");
  }
  for (const auto& v : vertices) require(v.allFinite(), "non-finite vertex");
}

double TriangleMesh::triangle_area(std::size_t t) const {
  const auto& tri = triangles[t];
  return 0.5 * (vertices[tri[1]] - vertices[tri[0]]).cross(vertices[tri[2]] - vertices[tri[0]]).norm();
}

Eigen::Vector3d TriangleMesh::triangle_normal(std::size_t t) const {
  const auto& tri = triangles[t];
  const Eigen::Vector3d n =
      (vertices[tri[1]] - vertices[tri[0]]).cross(vertices[tri[2]] - vertices[tri[0]]);
  const double len = n.norm();
  return len > 0.0 ? Eigen::Vector3d(n / len) : Eigen::Vector3d::Zero();
}

double TriangleMesh::surface_area() const {
  double a = 0.0;
  for (std::size_t t = 0; t < triangles.size(); ++t) a += triangle_area(t);
  return a;
}

Eigen::Vector3d TriangleMesh::centroid() const {
  Eigen::Vector3d c = Eigen::Vector3d::Zero();
  double total = 0.0;
  for (std::size_t t = 0; t < triangles.size(); ++t) {
    const auto& tri = triangles[t];
    const double a = triangle_area(t);
    c += a * (vertices[tri[0]] + vertices[tri[1]] + vertices[tri[2]]) / 3.0;
    total += a;
  }
  if (total <= 0.0) fail(ErrorKind::kInvalidArgument, "mesh has zero surface area");
  return c / total;
}

double TriangleMesh::bounding_radius() const {
  const Eigen::Vector3d c = centroid();
  double r = 0.0;
  for (const auto& v : vertices) r = std::max(r, (v - c).norm());
  return r;
}

TriangleMesh transform(const TriangleMesh& mesh, const Pose& pose) {
  TriangleMesh out = mesh;
  for (auto& v : out.vertices) v = pose * v;
  return out;
}

TriangleMesh centered(const TriangleMesh& mesh) {
  TriangleMesh out = mesh;
  const Eigen::Vector3d c = mesh.centroid();
  for (auto& v : out.vertices) v -= c;
  return out;
}

PointCloud sample_surface(const TriangleMesh& mesh, int n, std::uint64_t seed) {
  require(n >= 1, "sample count must be >= 1");
  mesh.validate();
  if (mesh.triangles.empty()) fail(ErrorKind::kInvalidArgument, "cannot sample an empty mesh");

  std::vector<double> cdf(mesh.triangles.size());
  double total = 0.0;
  const double scale = mesh.bounding_radius();
  for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
    const double a = mesh.triangle_area(t);
    if (a > 1e-14 * scale * scale) total += a;  // degenerate faces get no mass
    cdf[t] = total;
  }
  if (total <= 0.0) fail(ErrorKind::kInvalidArgument, "mesh has zero surface area");

  Rng rng(seed);
  PointCloud out;
  out.points.reserve(n);
  Points normals;
  normals.reserve(n);
  for (int i = 0; i < n; ++i) {
    const double u = rng.uniform() * total;
    auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
    if (it == cdf.end()) --it;
    const auto t = static_cast<std::size_t>(it - cdf.begin());
    const auto& tri = mesh.triangles[t];
    const double r1 = std::sqrt(rng.uniform());
    const double r2 = rng.uniform();
    out.points.push_back((1.0 - r1) * mesh.vertices[tri[0]] + r1 * (1.0 - r2) * mesh.vertices[tri[1]] +
                         r1 * r2 * mesh.vertices[tri[2]]);
    normals.push_back(mesh.triangle_normal(t));
  }
  out.normals = std::move(normals);
  return out;
}

double mean_closest_point_distance(const PointCloud& a, const KdTree& b) {
  require(!a.empty() && b.size() > 0, "mean_closest_point_distance needs non-empty clouds");
  double sum = 0.0;
  for (const auto& p : a.points) sum += std::sqrt(b.nearest(p).dist_sq);
  return sum / static_cast<double>(a.size());
}

double mean_closest_point_distance(const PointCloud& a, const PointCloud& b) {
  require(!a.empty() && !b.empty(), "mean_closest_point_distance needs non-empty clouds");
  const KdTree tree(b.points);
  return mean_closest_point_distance(a, tree);
}

double mean_surface_distance(std::span<const Eigen::Vector3d> a, const MeshSurface& surface) {
  require(!a.empty(), "mean_surface_distance needs points");
  double sum = 0.0;
  for (const auto& p : a) sum += surface.distance(p);
  return sum / static_cast<double>(a.size());
}

PointCloud estimate_normals(const PointCloud& cloud, int k, const Eigen::Vector3d& viewpoint) {
  require(k >= 3, "estimate_normals needs k >= 3");
  if (static_cast<int>(cloud.size()) < k + 1) {
    fail(ErrorKind::kInvalidArgument, "estimate_normals needs at least k+1 points");
  }
  const KdTree tree(cloud.points);
  PointCloud out;
  out.points = cloud.points;
  Points normals(cloud.size());
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const auto hits = tree.knn(cloud.points[i], k + 1);
    Eigen::Vector3d mean = Eigen::Vector3d::Zero();
    for (const auto& h : hits) mean += cloud.points[h.index];
    mean /= static_cast<double>(hits.size());
    Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
    for (const auto& h : hits) {
      const Eigen::Vector3d d = cloud.points[h.index] - mean;
      cov += d * d.transpose();
    }
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(cov);
    Eigen::Vector3d n = es.eigenvectors().col(0).normalized();
    if (n.dot(viewpoint - cloud.points[i]) < 0.0) n = -n;
    normals[i] = n;
  }
  out.normals = std::move(normals);
  return out;
}

PointCloud voxel_downsample(const PointCloud& cloud, double voxel, bool split_by_normal) {
  require(voxel > 0.0, "voxel size must be positive");
  require(!split_by_normal || cloud.has_normals(), "split_by_normal needs normals");
  struct Acc {
    Eigen::Vector3d p = Eigen::Vector3d::Zero();
    Eigen::Vector3d n = Eigen::Vector3d::Zero();
    Eigen::Vector3d ref = Eigen::Vector3d::Zero();
    int count = 0;
  };
  using Key = std::tuple<std::int64_t, std::int64_t, std::int64_t, int>;
  std::map<Key, Acc> cells;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const Eigen::Vector3d& p = cloud.points[i];
    Key key{static_cast<std::int64_t>(std::floor(p.x() / voxel)), static_cast<std::int64_t>(std::floor(p.y() / voxel)),
            static_cast<std::int64_t>(std::floor(p.z() / voxel)), 0};
    if (split_by_normal) {
      const auto first = cells.find(key);
      if (first != cells.end() && first->second.ref.dot((*cloud.normals)[i]) < 0.0) std::get<3>(key) = 1;
    }
    Acc& acc = cells[key];
    if (acc.count == 0 && cloud.normals) acc.ref = (*cloud.normals)[i];
    acc.p += p;
    if (cloud.normals) acc.n += (*cloud.normals)[i];
    ++acc.count;
  }
  PointCloud out;
  out.points.reserve(cells.size());
  Points normals;
  for (const auto& [key, acc] : cells) {
    out.points.push_back(acc.p / acc.count);
    if (cloud.normals) {
      const double len = acc.n.norm();
      normals.push_back(len > 1e-12 ? Eigen::Vector3d(acc.n / len) : acc.ref);
    }
  }
  if (cloud.normals) out.normals = std::move(normals);
  return out;
}

PointCloud refine_normals(const PointCloud& cloud, int k) {
  require(cloud.has_normals(), "refine_normals needs normals");
  require(k >= 3, "refine_normals needs k >= 3");
  const Points& ref = *cloud.normals;
  const KdTree tree(cloud.points);
  const int query = std::min<int>(static_cast<int>(cloud.size()), 4 * (k + 1));
  PointCloud out;
  out.points = cloud.points;
  Points normals(cloud.size());
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    Points nb;
    for (const auto& h : tree.knn(cloud.points[i], query)) {
      if (ref[h.index].dot(ref[i]) > 0.0) nb.push_back(cloud.points[h.index]);
      if (static_cast<int>(nb.size()) == k + 1) break;
    }
    Eigen::Vector3d n = ref[i];
    if (nb.size() >= 3) {
      Eigen::Vector3d mean = Eigen::Vector3d::Zero();
      for (const auto& p : nb) mean += p;
      mean /= static_cast<double>(nb.size());
      Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
      for (const auto& p : nb) cov += (p - mean) * (p - mean).transpose();
      Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(cov);
      n = es.eigenvectors().col(0).normalized();
      if (n.dot(ref[i]) < 0.0) n = -n;
    }
    normals[i] = n;
  }
  out.normals = std::move(normals);
  return out;
}

double mean_spacing(const PointCloud& cloud) {
  require(cloud.size() >= 2, "mean_spacing needs two points");
  const KdTree tree(cloud.points);
  double sum = 0.0;
  for (const auto& p : cloud.points) sum += std::sqrt(tree.knn(p, 2).back().dist_sq);
  return sum / static_cast<double>(cloud.size());
}

}  // namespace symlabel
