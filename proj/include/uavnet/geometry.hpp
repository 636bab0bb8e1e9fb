#pragma once

#include <algorithm>
#include <cmath>

namespace uavnet {

/// Point in the scenario frame. All three coordinates are meters; the BS
/// sits at the origin of the horizontal frame only by configuration.
struct Position {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  friend bool operator==(const Position&, const Position&) = default;
};

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  double norm() const { return std::hypot(x, y); }
  friend bool operator==(const Vec2&, const Vec2&) = default;
};

inline double distance(const Position& a, const Position& b) {
  const double dx = a.x - b.x;
  const double dy = a.y - b.y;
  const double dz = a.z - b.z;
  return std::sqrt(dx * dx + dy * dy + dz * dz);
}

inline double horizontal_distance(const Position& a, const Position& b) {
  return std::hypot(a.x - b.x, a.y - b.y);
}

/// Axis-aligned square [-half_width, half_width]^2 in meters.
struct Bounds {
  double half_width = 1000.0;

  bool contains(const Position& p) const {
    return std::abs(p.x) <= half_width && std::abs(p.y) <= half_width;
  }
  Position clamp(Position p) const {
    p.x = std::clamp(p.x, -half_width, half_width);
    p.y = std::clamp(p.y, -half_width, half_width);
    return p;
  }
};

}  // namespace uavnet
