#include "symlabel/so3.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>

#include <Eigen/SVD>

#include "symlabel/binary_io.hpp"
#include "symlabel/error.hpp"
#include "symlabel/rng.hpp"

namespace symlabel {
namespace {

constexpr double kPi = std::numbers::pi;

Eigen::Quaterniond canonical(Eigen::Quaterniond q) {
  const double n = q.norm();
  if (!(n > 0.0) || !std::isfinite(n)) fail(ErrorKind::kNumeric, "degenerate quaternion");
  q.coeffs() /= n;
  double lead = q.w();
  if (lead == 0.0) lead = q.x() != 0.0 ? q.x() : (q.y() != 0.0 ? q.y() : q.z());
  if (lead < 0.0) q.coeffs() = -q.coeffs();
  return q;
}

}  // namespace

Rotation::Rotation(const Eigen::Quaterniond& q) : q_(canonical(q)) {}

Rotation Rotation::from_wxyz(double w, double x, double y, double z) {
  return Rotation(Eigen::Quaterniond(w, x, y, z));
}

Rotation Rotation::from_matrix(const Eigen::Matrix3d& m) {
  Eigen::JacobiSVD<Eigen::Matrix3d> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Eigen::Matrix3d d = Eigen::Matrix3d::Identity();
  d(2, 2) = (svd.matrixU() * svd.matrixV().transpose()).determinant() < 0 ? -1.0 : 1.0;
  const Eigen::Matrix3d r = svd.matrixU() * d * svd.matrixV().transpose();
  return Rotation(Eigen::Quaterniond(r));
}

Rotation Rotation::from_axis_angle(const Eigen::Vector3d& axis, double angle) {
  return Rotation(Eigen::Quaterniond(Eigen::AngleAxisd(angle, axis.normalized())));
}

double Rotation::angle() const {
  return 2.0 * std::atan2(q_.vec().norm(), std::abs(q_.w()));
}

Eigen::Vector3d Rotation::axis() const {
  const double n = q_.vec().norm();
  if (n == 0.0) return Eigen::Vector3d::UnitZ();
  return q_.vec() / n;
}

Pose::Pose(const Rotation& r, const Eigen::Vector3d& t) : rotation(r), translation(t) {
  if (!t.allFinite()) fail(ErrorKind::kNumeric, "non-finite translation");
}

Pose Pose::operator*(const Pose& o) const {
  return Pose(rotation * o.rotation, rotation * o.translation + translation);
}

Pose Pose::inverse() const {
  const Rotation inv = rotation.inverse();
  return Pose(inv, -(inv * translation));
}

Eigen::Matrix4d Pose::matrix() const {
  Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
  m.topLeftCorner<3, 3>() = rotation.matrix();
  m.topRightCorner<3, 1>() = translation;
  return m;
}

Pose Pose::from_matrix(const Eigen::Matrix4d& m) {
  return Pose(Rotation::from_matrix(m.topLeftCorner<3, 3>()), m.topRightCorner<3, 1>());
}

std::vector<double> Pose::row_major() const {
  const Eigen::Matrix4d m = matrix();
  std::vector<double> out(16);
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c) out[r * 4 + c] = m(r, c);
  return out;
}

Pose Pose::from_row_major(std::span<const double> values) {
  if (values.size() != 16) fail(ErrorKind::kData, "pose needs 16 values");
  Eigen::Matrix4d m;
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c) m(r, c) = values[r * 4 + c];
  return from_matrix(m);
}

double geodesic_distance(const Rotation& a, const Rotation& b) {
  // Same quantity as arccos((tr(A^T B) - 1) / 2), evaluated through atan2 so
  // it stays accurate near 0 and pi.
  const Eigen::Quaterniond rel = a.quaternion().conjugate() * b.quaternion();
  return 2.0 * std::atan2(rel.vec().norm(), std::abs(rel.w()));
}

Rotation exp_map(const Eigen::Vector3d& v) {
  const double theta = v.norm();
  if (theta < 1e-12) return Rotation(Eigen::Quaterniond(1.0, 0.5 * v.x(), 0.5 * v.y(), 0.5 * v.z()));
  const double s = std::sin(0.5 * theta) / theta;
  return Rotation(Eigen::Quaterniond(std::cos(0.5 * theta), s * v.x(), s * v.y(), s * v.z()));
}

Eigen::Vector3d log_map(const Rotation& r, bool* unique) {
  const Eigen::Quaterniond& q = r.quaternion();  // w >= 0
  const double n = q.vec().norm();
  const double theta = 2.0 * std::atan2(n, q.w());
  if (unique) *unique = theta < kPi - 1e-6;
  if (n == 0.0) return Eigen::Vector3d::Zero();
  return q.vec() * (theta / n);
}

Rotation random_rotation(Rng& rng) {
  Eigen::Quaterniond q(rng.normal(), rng.normal(), rng.normal(), rng.normal());
  while (q.norm() < 1e-9) q = Eigen::Quaterniond(rng.normal(), rng.normal(), rng.normal(), rng.normal());
  return Rotation(q);
}

std::size_t grid_size(int level) {
  require(level >= 0 && level <= kMaxGridLevel, "grid level out of range [0, 5]");
  return std::size_t{72} << (3 * level);
}

Eigen::Vector2d healpix_pix2ang_ring(std::int64_t nside, std::int64_t pix) {
  const std::int64_t npix = 12 * nside * nside;
  const std::int64_t ncap = 2 * nside * (nside - 1);
  const double fact2 = 4.0 / static_cast<double>(npix);
  double z = 0.0;
  double phi = 0.0;
  if (pix < ncap) {  // north polar cap
    const std::int64_t iring = (1 + static_cast<std::int64_t>(std::sqrt(1.0 + 2.0 * pix))) >> 1;
    const std::int64_t iphi = pix + 1 - 2 * iring * (iring - 1);
    z = 1.0 - static_cast<double>(iring * iring) * fact2;
    phi = (static_cast<double>(iphi) - 0.5) * (0.5 * kPi) / static_cast<double>(iring);
  } else if (pix < npix - ncap) {  // equatorial belt
    const std::int64_t ip = pix - ncap;
    const std::int64_t iring = ip / (4 * nside) + nside;
    const std::int64_t iphi = ip % (4 * nside) + 1;
    const double fodd = ((iring + nside) & 1) ? 1.0 : 0.5;
    z = static_cast<double>(2 * nside - iring) * 2.0 / (3.0 * static_cast<double>(nside));
    phi = (static_cast<double>(iphi) - fodd) * kPi / (2.0 * static_cast<double>(nside));
  } else {  // south polar cap
    const std::int64_t ip = npix - pix;
    const std::int64_t iring = (1 + static_cast<std::int64_t>(std::sqrt(2.0 * ip - 1.0))) >> 1;
    const std::int64_t iphi = 4 * iring + 1 - (ip - 2 * iring * (iring - 1));
    z = -1.0 + static_cast<double>(iring * iring) * fact2;
    phi = (static_cast<double>(iphi) - 0.5) * (0.5 * kPi) / static_cast<double>(iring);
  }
  return {std::acos(std::clamp(z, -1.0, 1.0)), phi};
}

Rotation hopf_to_rotation(double theta, double phi, double psi) {
  const double ct = std::cos(0.5 * theta);
  const double st = std::sin(0.5 * theta);
  return Rotation::from_wxyz(ct * std::cos(0.5 * psi), ct * std::sin(0.5 * psi),
                             st * std::cos(phi + 0.5 * psi), st * std::sin(phi + 0.5 * psi));
}

EquivolumetricGrid generate_grid(int level) {
  const std::size_t n = grid_size(level);
  const std::int64_t nside = std::int64_t{1} << level;
  const std::int64_t npix = 12 * nside * nside;
  const std::int64_t ntilt = 6 * nside;

  EquivolumetricGrid grid;
  grid.level = level;
  grid.cell_volume = kPi * kPi / static_cast<double>(n);
  grid.rotations.reserve(n);
  for (std::int64_t pix = 0; pix < npix; ++pix) {
    const Eigen::Vector2d ang = healpix_pix2ang_ring(nside, pix);
    for (std::int64_t j = 0; j < ntilt; ++j) {
      const double psi = (static_cast<double>(j) + 0.5) * 2.0 * kPi / static_cast<double>(ntilt);
      grid.rotations.push_back(hopf_to_rotation(ang[0], ang[1], psi));
    }
  }
  return grid;
}

EquivolumetricGrid rotate_grid(const EquivolumetricGrid& grid, const Rotation& r) {
  EquivolumetricGrid out;
  out.level = grid.level;
  out.cell_volume = grid.cell_volume;
  out.rotations.reserve(grid.size());
  for (const Rotation& g : grid.rotations) out.rotations.push_back(r * g);
  return out;
}

template <typename T>
void positional_encode(const Eigen::Matrix3d& m, int n_freq, std::span<T> out) {
  require(n_freq >= 1, "n_freq must be >= 1");
  require(out.size() == static_cast<std::size_t>(encoding_size(n_freq)), "encoding buffer size");
  for (int f = 0; f < n_freq; ++f) {
    const double scale = std::ldexp(1.0, f);
    for (int k = 0; k < 9; ++k) {
      const double v = scale * m(k / 3, k % 3);
      out[18 * f + 2 * k] = static_cast<T>(std::sin(v));
      out[18 * f + 2 * k + 1] = static_cast<T>(std::cos(v));
    }
  }
}

template void positional_encode<float>(const Eigen::Matrix3d&, int, std::span<float>);
template void positional_encode<double>(const Eigen::Matrix3d&, int, std::span<double>);

std::vector<double> positional_encode(const Rotation& r, int n_freq) {
  require(n_freq >= 1, "n_freq must be >= 1");
  std::vector<double> out(static_cast<std::size_t>(encoding_size(n_freq)));
  positional_encode<double>(r.matrix(), n_freq, out);
  return out;
}

void write_grid(const std::filesystem::path& path, const EquivolumetricGrid& grid) {
  std::ofstream os(path, std::ios::binary);
  if (!os) fail(ErrorKind::kIo, "cannot write " + path.string());
  binio::write_magic(os, "SO3G");
  binio::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(grid.level));
  binio::write_le<std::uint64_t>(os, grid.size());
  for (const Rotation& r : grid.rotations) {
    const Eigen::Quaterniond& q = r.quaternion();
    binio::write_le(os, q.w());
    binio::write_le(os, q.x());
    binio::write_le(os, q.y());
    binio::write_le(os, q.z());
  }
  if (!os) fail(ErrorKind::kIo, "write failed: " + path.string());
}

EquivolumetricGrid read_grid(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail(ErrorKind::kIo, "cannot read " + path.string());
  binio::expect_magic(is, "SO3G");
  EquivolumetricGrid grid;
  grid.level = static_cast<int>(binio::read_le<std::uint32_t>(is));
  const auto count = binio::read_le<std::uint64_t>(is);
  if (grid.level > kMaxGridLevel || count != grid_size(grid.level)) {
    fail(ErrorKind::kData, "grid file count does not match its level");
  }
  grid.cell_volume = kPi * kPi / static_cast<double>(count);
  grid.rotations.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    const double w = binio::read_le<double>(is);
    const double x = binio::read_le<double>(is);
    const double y = binio::read_le<double>(is);
    const double z = binio::read_le<double>(is);
    grid.rotations.push_back(Rotation::from_wxyz(w, x, y, z));
  }
  return grid;
}

}  // namespace symlabel
