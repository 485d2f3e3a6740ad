#pragma once

// Mesh -> occupancy conversion and the ground-following queries used by the
// traversal oracle.

#include <optional>

#include "voxtrav/robot.hpp"
#include "voxtrav/terrain.hpp"
#include "voxtrav/voxgrid.hpp"

namespace voxtrav {

// ---------------------------------------------------------------------------
// Triangle / axis-aligned box overlap (separating axis theorem, 13 axes).

namespace detail {

inline bool axis_separates(const Vec3& axis, const Vec3& v0, const Vec3& v1, const Vec3& v2, const Vec3& half) {
  const double p0 = axis.dot(v0), p1 = axis.dot(v1), p2 = axis.dot(v2);
  const double r = half.x * std::abs(axis.x) + half.y * std::abs(axis.y) + half.z * std::abs(axis.z);
  return std::min({p0, p1, p2}) > r || std::max({p0, p1, p2}) < -r;
}

}  // namespace detail

/// True iff the closed box (center, half extents) intersects triangle abc.
inline bool tri_box_overlap(const Vec3& center, const Vec3& half, const Vec3& a, const Vec3& b, const Vec3& c) {
  const Vec3 v0 = a - center, v1 = b - center, v2 = c - center;
  // box face normals
  for (int ax = 0; ax < 3; ++ax) {
    const double lo = std::min({v0[ax], v1[ax], v2[ax]}), hi = std::max({v0[ax], v1[ax], v2[ax]});
    if (lo > half[ax] || hi < -half[ax]) return false;
  }
  const Vec3 e0 = v1 - v0, e1 = v2 - v1, e2 = v0 - v2;
  // triangle normal
  const Vec3 n = e0.cross(e1);
  {
    const double d = n.dot(v0);
    const double r = half.x * std::abs(n.x) + half.y * std::abs(n.y) + half.z * std::abs(n.z);
    if (d > r || d < -r) return false;
  }
  // edge cross products
  const Vec3 units[3] = {{1, 0, 0}, {0, 1, 0}, {0, 0, 1}};
  for (const Vec3& e : {e0, e1, e2})
    for (const Vec3& u : units) {
      const Vec3 axis = u.cross(e);
      if (axis.dot(axis) < 1e-30) continue;
      if (detail::axis_separates(axis, v0, v1, v2, half)) return false;
    }
  return true;
}

/// Marks every voxel whose half-open cell intersects a triangle. The upper
/// cell faces are pulled in by a relative 1e-9 so a triangle lying exactly
/// on a cell's upper boundary belongs to the next cell only.
inline OccupancyGrid voxelize_mesh(const TriMesh& mesh, const GridMeta& bounds) {
  OccupancyGrid grid(bounds);
  const double res = bounds.resolution;
  const double shrink = res * 1e-9;
  const Vec3 half{(res - shrink) / 2, (res - shrink) / 2, (res - shrink) / 2};
  auto cell_of = [&](double v, double o, int n) {
    return std::clamp(static_cast<int>(std::floor((v - o) / res)), -1, n);
  };
  for (const auto& t : mesh.triangles) {
    const Vec3 &a = mesh.vertices[t[0]], &b = mesh.vertices[t[1]], &c = mesh.vertices[t[2]];
    int lo[3], hi[3];
    bool outside = false;
    for (int ax = 0; ax < 3; ++ax) {
      const double o = bounds.origin[ax];
      lo[ax] = std::max(0, cell_of(std::min({a[ax], b[ax], c[ax]}), o, bounds.dims[ax]));
      hi[ax] = std::min(bounds.dims[ax] - 1, cell_of(std::max({a[ax], b[ax], c[ax]}), o, bounds.dims[ax]));
      outside |= lo[ax] > hi[ax];
    }
    if (outside) continue;
    for (int i = lo[0]; i <= hi[0]; ++i)
      for (int j = lo[1]; j <= hi[1]; ++j)
        for (int k = lo[2]; k <= hi[2]; ++k) {
          const Index3 v{i, j, k};
          if (grid.occupied(v)) continue;
          const Vec3 center = bounds.origin + Vec3{i * res, j * res, k * res} + half;
          if (tri_box_overlap(center, half, a, b, c)) grid.insert(v);
        }
  }
  return grid;
}

/// Grid covering a generated patch: [0, patch]^2 horizontally, and
/// height_budget meters upward from just below the lowest possible ground.
inline GridMeta patch_bounds(const TerrainConfig& cfg, double res) {
  if (!(res > 0)) throw UsageError("resolution must be positive");
  cfg.validate();
  const double low = -(perlin_bound(cfg.perlin) + cfg.step_height_max);
  GridMeta m;
  m.resolution = res;
  m.origin = {0, 0, std::floor(low / res) * res};
  m.dims = {static_cast<int>(std::ceil(cfg.patch_size / res - 1e-9)), static_cast<int>(std::ceil(cfg.patch_size / res - 1e-9)),
            static_cast<int>(std::ceil(cfg.height_budget / res - 1e-9))};
  return m;
}

// ---------------------------------------------------------------------------
// Support queries.

struct SupportParams {
  double step_up_max = 0.22;
  double drop_max = 0.27;
  double clearance_height = 0.2;  // free space required above a support surface

  void validate() const {
    if (!(step_up_max > 0 && drop_max > 0 && clearance_height > 0))
      throw UsageError("support parameters must be positive");
  }
};

/// Top-face height of the highest occupied voxel in the column under (x,y)
/// whose top lies in [z_ref - drop_max, z_ref + step_up_max] and which has at
/// least clearance_height of free voxels above it inside the grid.
inline std::optional<double> support_at(const OccupancyGrid& grid, double x, double y, double z_ref,
                                        const SupportParams& params) {
  const GridMeta& m = grid.meta();
  const double res = m.resolution;
  const double fi = std::floor((x - m.origin.x) / res), fj = std::floor((y - m.origin.y) / res);
  if (!(fi >= 0 && fj >= 0 && fi < m.dims[0] && fj < m.dims[1])) return std::nullopt;
  const auto i = static_cast<std::int32_t>(fi), j = static_cast<std::int32_t>(fj);

  constexpr double tol = 1e-9;
  const double top_hi = z_ref + params.step_up_max + tol;
  const double top_lo = z_ref - params.drop_max - tol;
  const int k_hi = std::min(m.dims[2] - 1, static_cast<int>(std::floor((top_hi - m.origin.z) / res)) - 1);
  const int k_lo = std::max(0, static_cast<int>(std::ceil((top_lo - m.origin.z) / res)) - 1);
  const int clear = static_cast<int>(std::ceil(params.clearance_height / res - 1e-9));

  const std::size_t column = m.linear({i, j, 0});
  for (int k = k_hi; k >= k_lo; --k) {
    if (!grid.occupied_unchecked(column + static_cast<std::size_t>(k))) continue;
    const double top = m.origin.z + (k + 1) * res;
    if (top > top_hi || top < top_lo) continue;
    if (k + clear >= m.dims[2]) continue;
    bool free = true;
    for (int c = 1; c <= clear && free; ++c) free = !grid.occupied_unchecked(column + static_cast<std::size_t>(k + c));
    if (free) return top;
  }
  return std::nullopt;
}

/// Body orientation after fitting a plane through the four foot supports.
struct BodyFrame {
  Vec3 base{};
  Vec3 forward{}, left{}, up{};
  double roll = 0, pitch = 0;
  std::array<double, 4> foot_support{};
};

/// Least-squares plane through the four feet (rectangle corners), written
/// with paired sums so that opposite headings give bit-identical results.
inline BodyFrame fit_body(const RobotModel& robot, double x, double y, const std::array<double, 2>& unit,
                          const std::array<double, 4>& z) {
  const double front = z[kFrontLeft] + z[kFrontRight];
  const double rear = z[kRearLeft] + z[kRearRight];
  const double left = z[kFrontLeft] + z[kRearLeft];
  const double right = z[kFrontRight] + z[kRearRight];
  const double slope_fwd = (front - rear) / (2 * robot.foot_length);
  const double slope_left = (left - right) / (2 * robot.foot_width);

  BodyFrame b;
  b.foot_support = z;
  b.base = {x, y, (front + rear) / 4 + robot.standing_clearance};
  b.pitch = std::atan(slope_fwd);
  b.roll = std::atan(slope_left);
  const Vec3 f = Vec3{unit[0], unit[1], slope_fwd}.normalized();
  const Vec3 l0 = Vec3{-unit[1], unit[0], slope_left}.normalized();
  b.up = f.cross(l0).normalized();
  b.left = b.up.cross(f);
  b.forward = f;
  return b;
}

inline std::array<double, 2> foot_xy(const RobotModel& robot, double x, double y, const std::array<double, 2>& unit,
                                     int foot) {
  const auto [dx, dy] = foot_offset(robot, foot);
  return {x + (dx * unit[0] - dy * unit[1]), y + (dx * unit[1] + dy * unit[0])};
}

/// Terrain-aligned body pose over (x,y) for an arbitrary heading vector; every
/// foot searches for support relative to its own reference height.
inline std::optional<BodyFrame> align_body(const OccupancyGrid& grid, double x, double y,
                                           const std::array<double, 2>& unit, const std::array<double, 4>& z_ref,
                                           const RobotModel& robot, const SupportParams& params) {
  std::array<double, 4> z{};
  for (int f = 0; f < 4; ++f) {
    const auto [fx, fy] = foot_xy(robot, x, y, unit, f);
    const auto s = support_at(grid, fx, fy, z_ref[f], params);
    if (!s) return std::nullopt;
    z[f] = *s;
  }
  return fit_body(robot, x, y, unit, z);
}

inline Pose to_pose(const BodyFrame& b, int heading_idx) {
  Pose p;
  p.p = b.base;
  p.heading_idx = heading_idx;
  p.roll = b.roll;
  p.pitch = b.pitch;
  p.foot_support = b.foot_support;
  return p;
}

/// Terrain-aligned start pose at (x,y) for a 10-degree heading; all feet use
/// `z_ref` (the candidate surface under the base) as reference height.
inline std::optional<Pose> align_pose(const OccupancyGrid& grid, double x, double y, double z_ref, int heading_idx,
                                      const RobotModel& robot, const SupportParams& params) {
  const auto body = align_body(grid, x, y, heading_unit(heading_idx), {z_ref, z_ref, z_ref, z_ref}, robot, params);
  if (!body) return std::nullopt;
  return to_pose(*body, heading_idx);
}

/// Rebuilds the body frame of a pose produced by align_pose.
inline BodyFrame body_frame(const Pose& pose, const RobotModel& robot) {
  return fit_body(robot, pose.p.x, pose.p.y, heading_unit(pose.heading_idx), pose.foot_support);
}

/// True iff any occupied voxel center lies strictly inside the posed body box.
inline bool body_collides(const OccupancyGrid& grid, const BodyFrame& b, const RobotModel& robot) {
  const GridMeta& m = grid.meta();
  const double hl = robot.body_length / 2, hw = robot.body_width / 2, h = robot.body_height;
  Vec3 lo{1e300, 1e300, 1e300}, hi{-1e300, -1e300, -1e300};
  for (double sx : {-hl, hl})
    for (double sy : {-hw, hw})
      for (double sz : {0.0, h}) {
        const Vec3 c = b.base + b.forward * sx + b.left * sy + b.up * sz;
        lo = {std::min(lo.x, c.x), std::min(lo.y, c.y), std::min(lo.z, c.z)};
        hi = {std::max(hi.x, c.x), std::max(hi.y, c.y), std::max(hi.z, c.z)};
      }
  const double res = m.resolution;
  auto range = [&](double a, double bnd, int ax, int& i0, int& i1) {
    i0 = std::max(0, static_cast<int>(std::floor((a - m.origin[ax]) / res - 0.5)));
    i1 = std::min(m.dims[ax] - 1, static_cast<int>(std::ceil((bnd - m.origin[ax]) / res - 0.5)));
  };
  int i0, i1, j0, j1, k0, k1;
  range(lo.x, hi.x, 0, i0, i1);
  range(lo.y, hi.y, 1, j0, j1);
  range(lo.z, hi.z, 2, k0, k1);
  for (int i = i0; i <= i1; ++i)
    for (int j = j0; j <= j1; ++j) {
      const std::size_t column = m.linear({i, j, 0});
      for (int k = k0; k <= k1; ++k) {
        if (!grid.occupied_unchecked(column + static_cast<std::size_t>(k))) continue;
        const Vec3 d = Vec3{m.origin.x + (i + 0.5) * res, m.origin.y + (j + 0.5) * res, m.origin.z + (k + 0.5) * res} -
                       b.base;
        const double u = d.dot(b.up);
        if (!(u > 0 && u < h)) continue;
        if (std::abs(d.dot(b.forward)) < hl && std::abs(d.dot(b.left)) < hw) return true;
      }
    }
  return false;
}

}  // namespace voxtrav
