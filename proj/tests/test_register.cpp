#include <doctest.h>

#include <cmath>

#include "helpers.hpp"
#include "symlabel/error.hpp"
#include "symlabel/fpfh.hpp"
#include "symlabel/register.hpp"
#include "symlabel/rng.hpp"
#include "symlabel/scenegen.hpp"

using namespace symlabel;

namespace {

// Asymmetric test object: box with a corner block.
TriangleMesh lumpy() {
  TriangleMesh m = make_box(0.06, 0.09, 0.12);
  TriangleMesh b = make_box(0.03, 0.03, 0.03);
  const int off = static_cast<int>(m.vertices.size());
  for (auto v : b.vertices) m.vertices.push_back(v + Eigen::Vector3d(0.03, 0.045, 0.06));
  for (auto t : b.triangles) m.triangles.push_back({t[0] + off, t[1] + off, t[2] + off});
  return m;
}

PointCloud prepared(const TriangleMesh& mesh, std::uint64_t seed) {
  const PointCloud dense = sample_surface(mesh, 6000, seed);
  return voxel_downsample(dense, 0.006);
}

double rot_err_deg(const Pose& a, const Pose& b) { return testing::deg(geodesic_distance(a.rotation, b.rotation)); }

}  // namespace

TEST_CASE("weighted kabsch recovers an exact transform") {
  Rng rng(3);
  const Pose truth(random_rotation(rng), Eigen::Vector3d(0.1, -0.3, 0.2));
  Points src, dst;
  std::vector<double> w;
  for (int i = 0; i < 30; ++i) {
    src.emplace_back(rng.normal(), rng.normal(), rng.normal());
    dst.push_back(truth * src.back());
    w.push_back(rng.uniform(0.5, 2.0));
  }
  Pose out;
  REQUIRE(weighted_kabsch(src, dst, w, out));
  CHECK(geodesic_distance(out.rotation, truth.rotation) < 1e-9);
  CHECK((out.translation - truth.translation).norm() < 1e-9);
  const std::vector<double> zero(30, 0.0);
  CHECK_FALSE(weighted_kabsch(src, dst, zero, out));
}

TEST_CASE("global registration recovers random transforms") {
  const TriangleMesh mesh = lumpy();
  PointCloud target = prepared(mesh, 1);
  const FpfhDescriptorSet ft = compute_fpfh(target, 0.03);
  Rng rng(17);
  int ok = 0;
  const int trials = 100;
  for (int t = 0; t < trials; ++t) {
    const Pose truth(random_rotation(rng), Eigen::Vector3d(rng.uniform(-0.1, 0.1), rng.uniform(-0.1, 0.1), 0.0));
    // Source is a fresh sample moved by truth^-1; registration maps it back.
    const PointCloud source = transform(prepared(mesh, 100 + t), truth.inverse());
    GlobalRegistrationConfig cfg;
    cfg.seed = static_cast<std::uint64_t>(t);
    try {
      const RegistrationResult r = global_register(source, target, compute_fpfh(source, 0.03), ft, cfg);
      const RegistrationResult fine = icp_refine(source, target, r.pose, {});
      if (rot_err_deg(fine.pose, truth) <= 3.0 && (fine.pose.translation - truth.translation).norm() <= 0.01) ++ok;
      CHECK(fine.fitness >= 0.0);
      CHECK(fine.fitness <= 1.0);
    } catch (const Error&) {
    }
  }
  CHECK(ok >= 95);
}

TEST_CASE("global registration of a cloud onto itself is the identity") {
  const PointCloud c = prepared(lumpy(), 2);
  const FpfhDescriptorSet f = compute_fpfh(c, 0.03);
  const RegistrationResult r = global_register(c, c, f, f, {});
  CHECK(r.pose.rotation.angle() < 1e-3);
}

TEST_CASE("registration without shared structure fails") {
  const PointCloud a = prepared(lumpy(), 3);
  PointCloud b;
  for (int i = 0; i < 60; ++i) b.points.emplace_back(0.002 * i, 0.0, 0.0);
  b.normals = Points(b.points.size(), Eigen::Vector3d::UnitZ());
  try {
    const RegistrationResult r = global_register(a, b, compute_fpfh(a, 0.03), compute_fpfh(b, 0.01), {});
    CHECK(r.fitness < 0.1);
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kNoCorrespondences);
  }
}

TEST_CASE("icp from a perturbed start") {
  const TriangleMesh mesh = lumpy();
  const PointCloud target = sample_surface(mesh, 8000, 1);
  Rng rng(23);
  int ok = 0;
  for (int t = 0; t < 100; ++t) {
    const PointCloud source = prepared(mesh, 200 + t);
    Eigen::Vector3d axis(rng.normal(), rng.normal(), rng.normal());
    Eigen::Vector3d dir(rng.normal(), rng.normal(), rng.normal());
    const Pose init(Rotation::from_axis_angle(axis.normalized(), 10.0 * testing::kPi / 180), 0.02 * dir.normalized());
    IcpConfig cfg;
    cfg.max_corr_dist = 0.03;
    const RegistrationResult r = icp_refine(source, target, init, cfg);
    for (std::size_t i = 1; i < r.objective.size(); ++i) CHECK(r.objective[i] <= r.objective[i - 1]);
    if (rot_err_deg(r.pose, Pose()) <= 1.0 && r.pose.translation.norm() <= 0.005) ++ok;
  }
  CHECK(ok >= 90);
}

TEST_CASE("icp fixed point and no overlap") {
  const TriangleMesh mesh = lumpy();
  const PointCloud target = sample_surface(mesh, 8000, 1);
  const PointCloud source = prepared(mesh, 5);
  IcpConfig cfg;
  cfg.max_corr_dist = 0.02;
  const RegistrationResult r = icp_refine(source, target, Pose(), cfg);
  CHECK(r.pose.rotation.angle() < 1e-3);
  CHECK(r.inlier_rmse < 0.003);

  const PointCloud far = transform(source, Pose(Rotation(), Eigen::Vector3d(1, 0, 0)));
  try {
    icp_refine(far, target, Pose(), cfg);
    CHECK(false);
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kNoOverlap);
  }
}

TEST_CASE("registration is equivariant") {
  const TriangleMesh mesh = lumpy();
  const PointCloud target = sample_surface(mesh, 8000, 1);
  const PointCloud source = prepared(mesh, 6);
  const Pose init(Rotation::from_axis_angle(Eigen::Vector3d::UnitY(), 0.1), Eigen::Vector3d(0.005, 0, 0));
  IcpConfig cfg;
  cfg.max_corr_dist = 0.02;
  const RegistrationResult a = icp_refine(source, target, init, cfg);
  const Pose g(Rotation::from_axis_angle(Eigen::Vector3d(1, 2, 3).normalized(), 0.7), Eigen::Vector3d(0.2, 0.1, -0.3));
  const RegistrationResult b = icp_refine(transform(source, g), transform(target, g), g * init * g.inverse(), cfg);
  const Pose expected = g * a.pose * g.inverse();
  CHECK(geodesic_distance(b.pose.rotation, expected.rotation) < 1e-6);
  CHECK((b.pose.translation - expected.translation).norm() < 1e-6);
}

TEST_CASE("global registration is deterministic") {
  const PointCloud t = prepared(lumpy(), 1);
  const PointCloud s = transform(prepared(lumpy(), 7), Pose(Rotation::from_axis_angle(Eigen::Vector3d::UnitX(), 1.0), {}));
  const auto ft = compute_fpfh(t, 0.03), fs = compute_fpfh(s, 0.03);
  GlobalRegistrationConfig cfg;
  cfg.seed = 4;
  const RegistrationResult a = global_register(s, t, fs, ft, cfg), b = global_register(s, t, fs, ft, cfg);
  CHECK(a.pose.rotation == b.pose.rotation);
  CHECK(a.pose.translation == b.pose.translation);
}
