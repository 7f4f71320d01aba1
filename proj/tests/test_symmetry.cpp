#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "helpers.hpp"
#include "symlabel/error.hpp"
#include "symlabel/scenegen.hpp"
#include "symlabel/symmetry.hpp"

using namespace symlabel;

namespace {

// Brute-force scan: grid rotations ordered by residual, keeping only those
// at least `sep` from every earlier pick, so each basin contributes its best cell.
std::vector<std::pair<double, Rotation>> basins(const TriangleMesh& mesh, int level, double sep, std::size_t n) {
  const SymmetryScorer scorer(mesh, 2000, 1);
  std::vector<std::pair<double, Rotation>> all;
  for (const Rotation& r : generate_grid(level).rotations) all.emplace_back(scorer.residual(r), r);
  std::sort(all.begin(), all.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  std::vector<std::pair<double, Rotation>> out;
  for (const auto& c : all) {
    bool far = true;
    for (const auto& o : out) far = far && geodesic_distance(c.second, o.second) >= sep;
    if (far) out.push_back(c);
    if (out.size() == n) break;
  }
  return out;
}

}  // namespace

TEST_CASE("box with distinct sides has the four half turns") {
  const TriangleMesh box = make_box(0.1, 0.2, 0.3);
  const SymmetrySet set = detect_symmetries(box, 3, 0.005);
  CHECK(set.kind == SymmetryKind::kDiscrete);
  REQUIRE(set.rotations.size() == 4);
  CHECK(set.axes.empty());
  for (const Rotation& r : set.rotations) {
    const double a = r.angle();
    CHECK((a < 1e-3 || std::abs(a - testing::kPi) < 1e-3));
  }
  // The four best basins of a grid scan sit on the four reported members, and
  // the next basin is clearly worse.
  const auto b = basins(box, 2, testing::kPi / 3, 5);
  REQUIRE(b.size() == 5);
  for (int i = 0; i < 4; ++i) {
    double best = 10.0;
    for (const Rotation& r : set.rotations) best = std::min(best, geodesic_distance(b[i].second, r));
    CHECK(testing::deg(best) < 15.0);
  }
  CHECK(b[4].first > 2.0 * b[3].first);
  const std::vector<Rotation> d = discretize(set);
  CHECK(d.size() == 4);
}

TEST_CASE("discretize") {
  SymmetrySet ring;
  ring.kind = SymmetryKind::kContinuousAxis;
  ring.axes = {Eigen::Vector3d::UnitZ()};
  CHECK(discretize(ring, 200).size() == 200);

  SymmetrySet can = ring;
  can.kind = SymmetryKind::kMixed;
  can.rotations.push_back(Rotation::from_axis_angle(Eigen::Vector3d::UnitX(), testing::kPi));
  const std::vector<Rotation> d = discretize(can, 200);
  CHECK(d.size() <= 400);
  CHECK(d.size() >= 200);
  // Merge oracle: no two members closer than pi / 200.
  for (std::size_t i = 0; i < d.size(); ++i)
    for (std::size_t j = i + 1; j < d.size(); ++j) CHECK(testing::quat_angle(d[i], d[j]) >= testing::kPi / 200 - 1e-9);
}

TEST_CASE("symmetry file round trip") {
  const auto dir = testing::temp_dir("symmetry");
  const SymmetrySet set = analytic_symmetries(Shape::kCan);
  write_symmetry_file(dir / "s.json", set);
  const SymmetrySet r = read_symmetry_file(dir / "s.json");
  CHECK(r.kind == set.kind);
  REQUIRE(r.rotations.size() == set.rotations.size());
  for (std::size_t i = 0; i < r.rotations.size(); ++i) CHECK(geodesic_distance(r.rotations[i], set.rotations[i]) < 1e-12);
  REQUIRE(r.axes.size() == 1);
  CHECK((r.axes[0] - Eigen::Vector3d::UnitZ()).norm() < 1e-12);
}

TEST_CASE("symmetric orientations compose on the right") {
  const Rotation pose = Rotation::from_axis_angle(Eigen::Vector3d(1, 1, 1).normalized(), 0.5);
  const Rotation m = Rotation::from_axis_angle(Eigen::Vector3d::UnitZ(), 1.0);
  const auto out = symmetric_orientations(pose, {Rotation::identity(), m});
  REQUIRE(out.size() == 2);
  CHECK(geodesic_distance(out[1], pose * m) < 1e-12);
}
