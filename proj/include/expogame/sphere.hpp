#pragma once

#include "expogame/core.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace expogame {

inline constexpr Index kMaxGridPoints = 1'000'000;

/// Number of points k^(d-1), or -1 when it exceeds kMaxGridPoints.
inline Index sphere_grid_size(Index d, Index k) {
  Index total = 1;
  for (Index a = 0; a + 1 < d; ++a) {
    if (total > kMaxGridPoints / k) return -1;
    total *= k;
  }
  return total > kMaxGridPoints ? -1 : total;
}

/// k points per spherical coordinate: the azimuth takes angles 2*pi*j/k, the
/// remaining polar angles take midpoints pi*(j + 1/2)/k so no point sits on a
/// pole. Returns k^(d-1) unit vectors row-wise.
inline Matrix discretize_sphere(Index d, Index k) {
  if (d < 2) throw std::invalid_argument("discretize_sphere needs d >= 2");
  if (k < 2) throw std::invalid_argument("discretize_sphere needs k >= 2");
  const Index total = sphere_grid_size(d, k);
  if (total < 0) {
    throw std::invalid_argument("grid of k^(d-1) points with k = " + std::to_string(k) +
                                ", d = " + std::to_string(d) + " exceeds the limit of " +
                                std::to_string(kMaxGridPoints) + " points");
  }
  Matrix grid(total, d);
  std::vector<Index> digit(static_cast<std::size_t>(d - 1), 0);
  for (Index r = 0; r < total; ++r) {
    Index rem = r;
    for (Index a = d - 2; a >= 0; --a) {
      digit[static_cast<std::size_t>(a)] = rem % k;
      rem /= k;
    }
    double sin_prod = 1.0;
    for (Index a = 0; a < d - 1; ++a) {
      const double j = static_cast<double>(digit[static_cast<std::size_t>(a)]);
      const bool azimuth = a == d - 2;
      const double angle = azimuth ? 2.0 * std::numbers::pi * j / static_cast<double>(k)
                                   : std::numbers::pi * (j + 0.5) / static_cast<double>(k);
      grid(r, a) = sin_prod * std::cos(angle);
      sin_prod *= std::sin(angle);
    }
    grid(r, d - 1) = sin_prod;
  }
  return grid;
}

inline Vector unit_at(double angle) {
  Vector v(2);
  v << std::cos(angle), std::sin(angle);
  return v;
}

/// Angle of a planar vector in [0, 2*pi).
inline double angle_of(const Vector& v) {
  double a = std::atan2(v(1), v(0));
  if (a < 0.0) a += 2.0 * std::numbers::pi;
  return a;
}

inline double wrap_angle(double a) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  a = std::fmod(a, two_pi);
  if (a < 0.0) a += two_pi;
  return a;
}

}  // namespace expogame
