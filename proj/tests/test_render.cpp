#include <doctest.h>

#include <cmath>

#include "helpers.hpp"
#include "symlabel/error.hpp"
#include "symlabel/render.hpp"
#include "symlabel/scenegen.hpp"

using namespace symlabel;

namespace {

CameraIntrinsics small_camera() {
  CameraIntrinsics c;
  c.fx = c.fy = 100.0;
  c.cx = 31.5;
  c.cy = 23.5;
  c.width = 64;
  c.height = 48;
  return c;
}

TriangleMesh square(double half, double z) {
  TriangleMesh m;
  m.vertices = {{-half, -half, z}, {half, -half, z}, {half, half, z}, {-half, half, z}};
  m.triangles = {{0, 1, 2}, {0, 2, 3}};
  return m;
}

}  // namespace

TEST_CASE("triangle facing the camera has its analytic depth") {
  const CameraIntrinsics cam = small_camera();
  TriangleMesh tri;
  tri.vertices = {{-0.1, -0.1, 0.5}, {0.1, -0.1, 0.5}, {0.0, 0.1, 0.5}};
  tri.triangles = {{0, 1, 2}};
  const DepthImage d = rasterize_depth(tri, Pose(), cam);
  CHECK(d.at(32, 24) == doctest::Approx(0.5));
  CHECK(d.at(0, 0) == 0.0f);
}

TEST_CASE("z buffer keeps the nearest surface and culls nothing behind") {
  const CameraIntrinsics cam = small_camera();
  TriangleMesh two = square(0.05, 0.6);
  const TriangleMesh near = square(0.05, 0.4);
  for (const auto& v : near.vertices) two.vertices.push_back(v);
  two.triangles.push_back({4, 5, 6});
  two.triangles.push_back({4, 6, 7});
  const DepthImage d = rasterize_depth(two, Pose(), cam);
  CHECK(d.at(32, 24) == doctest::Approx(0.4));

  const DepthImage behind = rasterize_depth(square(0.05, -0.5), Pose(), cam);
  CHECK(behind.valid_count() == 0);
}

TEST_CASE("unproject") {
  const CameraIntrinsics cam = small_camera();
  DepthImage d(cam.width, cam.height);
  CHECK(unproject(d, cam).empty());
  CameraIntrinsics c2 = cam;
  c2.cx = 10.0;
  c2.cy = 20.0;
  d.at(10, 20) = 1.0f;
  const PointCloud p = unproject(d, c2);
  REQUIRE(p.size() == 1);
  CHECK((p.points[0] - Eigen::Vector3d(0, 0, 1)).norm() < 1e-12);
  const Mask small(3, 3);
  CHECK_THROWS_AS(unproject(d, cam, &small), Error);

  // Tilted plane round trip: every point stays on the plane.
  const Pose pose(Rotation::from_axis_angle(Eigen::Vector3d::UnitX(), 0.4), Eigen::Vector3d(0, 0, 0.7));
  const DepthImage plane = rasterize_depth(square(0.2, 0.0), pose, cam);
  const PointCloud pts = unproject(plane, cam);
  REQUIRE(pts.size() > 100);
  const Eigen::Vector3d n = pose.rotation * Eigen::Vector3d::UnitZ();
  for (const auto& x : pts.points) CHECK(std::abs(n.dot(x - pose.translation)) < 1e-6);
}

TEST_CASE("compare depth") {
  DepthImage a(8, 8), b(8, 8);
  for (int v = 2; v < 6; ++v)
    for (int u = 2; u < 6; ++u) a.at(u, v) = 0.5f;
  const Mask all(8, 8, 1);
  CHECK(compare_depth(a, a, all) == 0.0);
  b = a;
  for (auto& x : b.depth)
    if (x > 0) x += 0.01f;
  CHECK(compare_depth(a, b, all) == doctest::Approx(0.01).epsilon(1e-5));
  CHECK(compare_depth(a, b, all) == compare_depth(b, a, all));

  DepthImage c(8, 8), e(8, 8);
  for (int v = 0; v < 2; ++v)
    for (int u = 0; u < 4; ++u) c.at(u, v) = 0.5f;
  for (int v = 6; v < 8; ++v)
    for (int u = 0; u < 4; ++u) e.at(u, v) = 0.5f;
  CHECK(compare_depth(c, e, all, 0.05) == doctest::Approx(0.05));
  CHECK(compare_depth(DepthImage(8, 8), DepthImage(8, 8), all) == kMaxScore);
  CHECK_THROWS_AS(compare_depth(a, DepthImage(4, 4), all), Error);
}

TEST_CASE("rasterised surface lies on the mesh") {
  const CameraIntrinsics cam = default_camera();
  const TriangleMesh can = make_mesh(Shape::kCan);
  const Pose pose(Rotation::from_axis_angle(Eigen::Vector3d(1, 1, 0).normalized(), 0.9), Eigen::Vector3d(0, 0, 0.5));
  const PointCloud pts = unproject(rasterize_depth(can, pose, cam), cam);
  const MeshSurface surface(transform(can, pose));
  const double half_pixel = 0.5 * 0.5 / cam.fx;
  CHECK(mean_surface_distance(pts.points, surface) <= half_pixel);
}

TEST_CASE("depth and mask files") {
  const auto dir = testing::temp_dir("render_io");
  DepthImage d(5, 3);
  d.at(1, 2) = 0.25f;
  write_depth(dir / "d.depth", d);
  const DepthImage r = read_depth(dir / "d.depth");
  CHECK(r.width == 5);
  CHECK(r.depth == d.depth);
  CHECK(testing::slurp(dir / "d.depth").substr(0, 4) == "DPTH");
  Mask m(4, 4);
  m.at(2, 3) = 1;
  write_mask(dir / "m.mask", m);
  CHECK(read_mask(dir / "m.mask").data == m.data);
  CHECK_THROWS_AS(read_depth(dir / "m.mask"), Error);
}
