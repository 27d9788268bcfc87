#pragma once

#include "esde/rng.hpp"
#include "esde/types.hpp"

#include <cmath>
#include <filesystem>
#include <random>
#include <string>

namespace esde::testing {

/// Uniform points in a square, rejecting pairs closer than min_sep.
inline Points random_points(int n, double half_width, double min_sep, std::uint64_t seed) {
  Rng rng = make_rng(seed);
  std::uniform_real_distribution<double> u(-half_width, half_width);
  Points x(n, 2);
  int placed = 0;
  while (placed < n) {
    const Vec2 c(u(rng), u(rng));
    bool ok = true;
    for (int k = 0; k < placed && ok; ++k) ok = (x.row(k).transpose() - c).norm() >= min_sep;
    if (ok) x.row(placed++) = c.transpose();
  }
  return x;
}

/// Triangular lattice with the given spacing, all nodes within radius of the origin.
inline Points hex_patch(double spacing, double radius) {
  std::vector<Vec2> pts;
  const int m = static_cast<int>(std::ceil(radius / spacing)) + 2;
  for (int j = -m; j <= m; ++j)
    for (int i = -m; i <= m; ++i) {
      const Vec2 p(spacing * (i + 0.5 * j), spacing * j * std::sqrt(3.0) / 2.0);
      if (p.norm() <= radius) pts.push_back(p);
    }
  Points x(static_cast<int>(pts.size()), 2);
  for (std::size_t k = 0; k < pts.size(); ++k) x.row(static_cast<int>(k)) = pts[k].transpose();
  return x;
}

inline Points square_patch(double spacing, int side) {
  Points x(side * side, 2);
  for (int j = 0; j < side; ++j)
    for (int i = 0; i < side; ++i) x.row(j * side + i) << spacing * i, spacing * j;
  return x;
}

inline Mat2 rotation(double radians) {
  Mat2 r;
  r << std::cos(radians), -std::sin(radians), std::sin(radians), std::cos(radians);
  return r;
}

inline std::string scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("esde_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir.string();
}

}  // namespace esde::testing
