#pragma once

#include <array>

#include "voxtrav/core.hpp"

namespace voxtrav {

/// Quadruped proxy. The body is a box whose bottom-face center is the base
/// position; feet sit at the corners of a rectangle centered under the base.
struct RobotModel {
  double body_length = 0.9;
  double body_width = 0.55;
  double body_height = 0.4;
  double standing_clearance = 0.2;  // body bottom above mean foot support
  double foot_length = 0.6;         // fore-aft foot spacing
  double foot_width = 0.4;          // lateral foot spacing
  double nominal_speed = 0.5;       // m/s

  void validate() const {
    if (!(body_length > 0 && body_width > 0 && body_height > 0 && standing_clearance > 0 && foot_length > 0 &&
          foot_width > 0 && nominal_speed > 0))
      throw UsageError("robot dimensions must be positive");
    if (foot_length > body_length || foot_width > body_width)
      throw UsageError("foot rectangle must lie inside the body footprint");
  }
};

enum Foot : int { kFrontLeft = 0, kFrontRight = 1, kRearLeft = 2, kRearRight = 3 };

/// Body-frame (forward, left) offset of a foot.
inline std::array<double, 2> foot_offset(const RobotModel& r, int foot) {
  const double fx = (foot == kFrontLeft || foot == kFrontRight) ? 0.5 * r.foot_length : -0.5 * r.foot_length;
  const double fy = (foot == kFrontLeft || foot == kRearLeft) ? 0.5 * r.foot_width : -0.5 * r.foot_width;
  return {fx, fy};
}

/// Horizontal unit vector of a heading in 10 degree steps. Headings 18..35 are
/// the exact negation of 0..17, so a fore-aft symmetric robot produces
/// bit-identical geometry for opposite headings.
inline std::array<double, 2> heading_unit(int heading_idx) {
  const int h = ((heading_idx % 36) + 36) % 36;
  const double a = deg2rad(10.0 * (h % 18));
  const double c = std::cos(a), s = std::sin(a);
  if (h < 18) return {c, s};
  return {-c, -s};
}

inline std::array<double, 2> rotate_unit(const std::array<double, 2>& u, double angle) {
  const double c = std::cos(angle), s = std::sin(angle);
  return {u[0] * c - u[1] * s, u[0] * s + u[1] * c};
}

}  // namespace voxtrav
