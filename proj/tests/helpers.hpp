#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>
#include <string>

#include "symlabel/so3.hpp"

namespace testing {

inline constexpr double kPi = std::numbers::pi;

inline double deg(double rad) { return rad * 180.0 / kPi; }

// Relative-rotation angle from the quaternion inner product.
inline double quat_angle(const symlabel::Rotation& a, const symlabel::Rotation& b) {
  const double d = std::abs(a.quaternion().dot(b.quaternion()));
  return 2.0 * std::acos(std::min(1.0, d));
}

// Haar mean of the rotation angle: (1/pi) * integral of t (1 - cos t) over [0, pi].
inline double haar_mean_angle() { return kPi / 2.0 + 2.0 / kPi; }

inline std::filesystem::path temp_dir(const std::string& name) {
  const auto p = std::filesystem::temp_directory_path() / ("symlabel_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

}  // namespace testing
