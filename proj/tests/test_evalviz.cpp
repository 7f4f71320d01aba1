#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "helpers.hpp"
#include "symlabel/error.hpp"
#include "symlabel/evalviz.hpp"
#include "symlabel/rng.hpp"

using namespace symlabel;

namespace {

OrientationDistribution uniform(int level) {
  const auto grid = generate_grid(level);
  return normalize(std::vector<double>(grid.size(), 0.0), grid);
}

OrientationDistribution delta(int level, std::size_t cell) {
  const auto grid = generate_grid(level);
  std::vector<double> v(grid.size(), 0.0);
  v[cell] = 2000.0;
  return normalize(v, grid);
}

std::vector<Rotation> box_group() {
  return {Rotation(), Rotation::from_axis_angle(Eigen::Vector3d::UnitX(), testing::kPi),
          Rotation::from_axis_angle(Eigen::Vector3d::UnitY(), testing::kPi),
          Rotation::from_axis_angle(Eigen::Vector3d::UnitZ(), testing::kPi)};
}

}  // namespace

TEST_CASE("maad of a point mass on the gt is zero") {
  const OrientationDistribution d = delta(2, 123);
  CHECK(maad(d, {d.rotations[123]}) < 1e-6);
  // A second gt member elsewhere does not change the nearest distance.
  Rng rng(4);
  CHECK(maad(d, {random_rotation(rng), d.rotations[123]}) < 1e-6);
  CHECK_THROWS_AS(maad(d, {}), Error);
}

TEST_CASE("maad of the uniform distribution is the Haar mean angle") {
  const OrientationDistribution u = uniform(3);
  Rng rng(11);
  for (int k = 0; k < 3; ++k) {
    const double m = maad(u, {random_rotation(rng)});
    CHECK(std::abs(m - testing::deg(testing::haar_mean_angle())) < 0.5);
  }
}

TEST_CASE("maad matches a per-cell loop") {
  const auto grid = generate_grid(1);
  Rng rng(2);
  std::vector<double> v(grid.size());
  for (auto& x : v) x = rng.normal();
  const OrientationDistribution d = normalize(v, grid);
  const std::vector<Rotation> gt = box_group();
  double expected = 0.0;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    double best = 1e9;
    for (const auto& g : gt) best = std::min(best, testing::quat_angle(d.rotations[i], g));
    expected += d.probability(i) * testing::deg(best);
  }
  CHECK(maad(d, gt) == doctest::Approx(expected).epsilon(1e-9));
}

TEST_CASE("recall maad by enumeration") {
  const auto grid = generate_grid(2);
  Rng rng(5);
  std::vector<double> v(grid.size());
  for (auto& x : v) x = 3.0 * rng.normal();
  const OrientationDistribution d = normalize(v, grid);
  const std::vector<Rotation> gt = box_group();
  for (double thr : {1e-5, 1e-4, 1e-3}) {
    double sum = 0.0;
    for (const auto& g : gt) {
      double best = 1e9;
      for (std::size_t i = 0; i < grid.size(); ++i)
        if (d.probability(i) > thr) best = std::min(best, testing::quat_angle(g, d.rotations[i]));
      sum += testing::deg(best);
    }
    const RecallResult r = recall_maad(d, gt, thr);
    CHECK_FALSE(r.empty);
    CHECK(r.degrees == doctest::Approx(sum / 4).epsilon(1e-9));
  }
  // Raising the threshold can only drop cells.
  double prev = 0.0;
  for (double thr : {1e-6, 1e-5, 1e-4, 5e-4, 1e-3}) {
    const RecallResult r = recall_maad(d, gt, thr);
    CHECK(r.degrees >= prev - 1e-12);
    prev = r.degrees;
  }
}

TEST_CASE("recall with nothing above threshold") {
  const OrientationDistribution u = uniform(3);  // every cell has mass 1/294912
  const RecallResult r = recall_maad(u, box_group(), 1e-3);
  CHECK(r.empty);
  CHECK(r.degrees == 180.0);
  // With every cell kept the recall is the mean nearest-cell distance.
  const RecallResult all = recall_maad(u, box_group(), 1e-7);
  CHECK_FALSE(all.empty);
  double sum = 0.0;
  for (const Rotation& g : box_group()) {
    double best = 1e9;
    for (const Rotation& r : u.rotations) best = std::min(best, testing::quat_angle(g, r));
    sum += testing::deg(best);
  }
  CHECK(all.degrees == doctest::Approx(sum / 4).epsilon(1e-9));
}

TEST_CASE("evaluate the zero model") {
  NetworkSpec s;
  s.extractor = "pool";
  s.image_size = 16;
  s.feature_dim = 4;
  s.hidden = {8};
  ImplicitModel model(s);
  std::vector<ValidationSample> v;
  Rng rng(1);
  for (int i = 0; i < 3; ++i)
    v.push_back({"f" + std::to_string(i), std::vector<float>(static_cast<std::size_t>(s.input_values()), 0.5f),
                 {random_rotation(rng)}});
  std::vector<FrameMetrics> per;
  const MetricsReport r = evaluate(model, v, 2, 1e-3, 1, &per);
  CHECK(r.llh == doctest::Approx(-2.0 * std::log(testing::kPi)).epsilon(1e-6));
  CHECK(r.n_frames == 3);
  CHECK(per.size() == 3);
  CHECK(std::abs(r.maad - testing::deg(testing::haar_mean_angle())) < 1.5);
  CHECK(r.recall_empty_frames == 3);
  CHECK(to_json(r)["grid_level"] == 2);
}

TEST_CASE("mollweide projection") {
  CHECK(mollweide(0, 0).norm() < 1e-12);
  CHECK(mollweide(0, testing::kPi / 2).y() == doctest::Approx(std::sqrt(2.0)));
  CHECK(mollweide(testing::kPi, 0).x() == doctest::Approx(2 * std::sqrt(2.0)));
  // Equal area: the band between the equator and latitude phi holds
  // sin(phi)/2 of the sphere; the ellipse area is 4 pi.
  for (double lat : {0.3, 0.9, 1.4}) {
    const double y = mollweide(0, lat).y();
    const double t = std::asin(y / std::sqrt(2.0));
    const double band = 2 * std::sqrt(2.0) * std::sqrt(2.0) * (t + std::sin(2 * t) / 2);  // integral of the half widths
    CHECK(band / (4 * testing::kPi) == doctest::Approx(std::sin(lat) / 2).epsilon(1e-8));
  }
}

TEST_CASE("projected rotation") {
  const ProjectedRotation id = project_rotation(Rotation());
  CHECK(id.latitude == doctest::Approx(testing::kPi / 2));
  CHECK(id.tilt == doctest::Approx(0.0).scale(1e-9));
  const ProjectedRotation z = project_rotation(Rotation::from_axis_angle(Eigen::Vector3d::UnitZ(), 1.0));
  CHECK(z.tilt == doctest::Approx(1.0));
  // Tilting about the pointing direction only moves the hue.
  const Rotation base = Rotation::from_axis_angle(Eigen::Vector3d(1, 2, 0.5).normalized(), 1.2);
  const Eigen::Vector3d dir = base.matrix().col(2);
  const ProjectedRotation a = project_rotation(base);
  const ProjectedRotation b =
      project_rotation(Rotation::from_matrix(Eigen::AngleAxisd(0.7, dir).toRotationMatrix() * base.matrix()));
  CHECK((a.xy - b.xy).norm() < 1e-9);
  double dt = std::fmod(b.tilt - a.tilt + 4 * testing::kPi, 2 * testing::kPi);
  CHECK(dt == doctest::Approx(0.7));
  CHECK(tilt_hue(testing::kPi) == doctest::Approx(180.0));
}

TEST_CASE("svg markers") {
  const auto grid = generate_grid(1);
  std::vector<double> v(grid.size(), 0.0);
  v[0] = 8.0;
  v[5] = 7.0;
  v[9] = 6.0;
  const OrientationDistribution d = normalize(v, grid);
  int above = 0;
  for (std::size_t i = 0; i < grid.size(); ++i) above += d.probability(i) > 1e-3;
  const std::string svg = mollweide_svg(d, box_group(), {.threshold = 1e-3, .title = "t"});
  const auto cells = svg.substr(svg.find("<g id=\"cells\""), svg.find("<g id=\"gt\"") - svg.find("<g id=\"cells\""));
  const auto count = [](const std::string& s) {
    int n = 0;
    for (auto p = s.find("<circle"); p != std::string::npos; p = s.find("<circle", p + 1)) ++n;
    return n;
  };
  CHECK(count(cells) == above);
  CHECK(count(svg) == above + 4);
  CHECK(svg.rfind("<svg", 0) == 0);
  CHECK(svg.find("</svg>") != std::string::npos);
}
