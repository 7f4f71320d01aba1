#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace symlabel {

class Rng;

/// Element of SO(3) stored as a unit quaternion. The double cover is
/// resolved at construction (w >= 0, ties broken on the first non-zero
/// imaginary component), so q and -q build identical objects.
class Rotation {
 public:
  Rotation() : q_(Eigen::Quaterniond::Identity()) {}
  explicit Rotation(const Eigen::Quaterniond& q);

  static Rotation identity() { return Rotation(); }
  static Rotation from_wxyz(double w, double x, double y, double z);
  /// Nearest rotation to `m` (m is assumed close to orthonormal).
  static Rotation from_matrix(const Eigen::Matrix3d& m);
  static Rotation from_axis_angle(const Eigen::Vector3d& axis, double angle);

  const Eigen::Quaterniond& quaternion() const { return q_; }
  Eigen::Matrix3d matrix() const { return q_.toRotationMatrix(); }

  Rotation inverse() const { return Rotation(q_.conjugate()); }
  Rotation operator*(const Rotation& o) const { return Rotation(q_ * o.q_); }
  Eigen::Vector3d operator*(const Eigen::Vector3d& v) const { return q_ * v; }

  /// Rotation angle in [0, pi].
  double angle() const;
  /// Unit rotation axis; ez for the identity.
  Eigen::Vector3d axis() const;

  bool operator==(const Rotation& o) const { return q_.coeffs() == o.q_.coeffs(); }

 private:
  Eigen::Quaterniond q_;
};

/// Rigid transform x -> R x + t (meters).
struct Pose {
  Rotation rotation;
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();

  Pose() = default;
  Pose(const Rotation& r, const Eigen::Vector3d& t);

  Eigen::Vector3d operator*(const Eigen::Vector3d& x) const { return rotation * x + translation; }
  Pose operator*(const Pose& o) const;
  Pose inverse() const;

  Eigen::Matrix4d matrix() const;
  static Pose from_matrix(const Eigen::Matrix4d& m);
  /// 16 values, row-major 4x4.
  std::vector<double> row_major() const;
  static Pose from_row_major(std::span<const double> values);
};

/// Geodesic (relative rotation angle) distance in radians, in [0, pi].
double geodesic_distance(const Rotation& a, const Rotation& b);

Rotation exp_map(const Eigen::Vector3d& v);

/// Principal log. At angle pi the axis sign is arbitrary; `unique` (when
/// given) is cleared whenever the angle is within 1e-6 of pi.
Eigen::Vector3d log_map(const Rotation& r, bool* unique = nullptr);

/// Haar-uniform random rotation.
Rotation random_rotation(Rng& rng);

struct EquivolumetricGrid {
  int level = 0;
  std::vector<Rotation> rotations;
  double cell_volume = 0.0;

  std::size_t size() const { return rotations.size(); }
};

inline constexpr int kMaxGridLevel = 5;

std::size_t grid_size(int level);

/// HEALPix directions lifted along Hopf fibers; ordered by
/// (pixel index, tilt index). Throws for level outside [0, kMaxGridLevel].
EquivolumetricGrid generate_grid(int level);

/// The same grid left-multiplied by `r` (still equivolumetric).
EquivolumetricGrid rotate_grid(const EquivolumetricGrid& grid, const Rotation& r);

/// Pixel center (theta, phi) of a ring-ordered HEALPix pixel.
Eigen::Vector2d healpix_pix2ang_ring(std::int64_t nside, std::int64_t pix);

/// Quaternion from Hopf coordinates (theta, phi on the sphere, psi on the fiber).
Rotation hopf_to_rotation(double theta, double phi, double psi);

inline constexpr int kDefaultFrequencies = 4;

inline constexpr int encoding_size(int n_freq) { return 18 * n_freq; }

/// Sinusoidal encoding of the row-major matrix entries m_k:
/// out[18 f + 2 k] = sin(2^f m_k), out[18 f + 2 k + 1] = cos(2^f m_k).
template <typename T>
void positional_encode(const Eigen::Matrix3d& m, int n_freq, std::span<T> out);
std::vector<double> positional_encode(const Rotation& r, int n_freq);

void write_grid(const std::filesystem::path& path, const EquivolumetricGrid& grid);
EquivolumetricGrid read_grid(const std::filesystem::path& path);

}  // namespace symlabel
