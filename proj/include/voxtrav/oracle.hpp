#pragma once

// Randomized quasi-static traversal oracle. A motion command is swept in small
// increments; every increment re-fits the body to the terrain and checks foot
// contacts, base orientation and body collision. Repeating the sweep under
// randomized kinematic limits yields a success rate per (voxel, heading,
// action).

#include <functional>
#include <thread>

#include "voxtrav/voxelize.hpp"

namespace voxtrav {

enum class Action : std::uint8_t { Forward = 0, Backward = 1, Left = 2, Right = 3, YawPlus45 = 4, YawMinus45 = 5 };

inline constexpr std::array<Action, kActions> kAllActions = {Action::Forward, Action::Backward,   Action::Left,
                                                              Action::Right,   Action::YawPlus45, Action::YawMinus45};

inline constexpr Action mirror(Action a) {
  switch (a) {
    case Action::Forward: return Action::Backward;
    case Action::Backward: return Action::Forward;
    case Action::Left: return Action::Right;
    case Action::Right: return Action::Left;
    default: return a;
  }
}

inline constexpr bool is_rotation(Action a) { return a == Action::YawPlus45 || a == Action::YawMinus45; }

inline const char* action_name(Action a) {
  static constexpr const char* names[] = {"forward", "backward", "left", "right", "yaw+45", "yaw-45"};
  return names[static_cast<int>(a)];
}

struct OracleLimits {
  SupportParams support{};
  double slope_max = deg2rad(35.0);
};

/// Per-trial kinematic limits standing in for mass and friction randomization.
struct TrialRandomization {
  double step_up_min = 0.12, step_up_max = 0.22;
  double slope_min_deg = 25.0, slope_max_deg = 35.0;
  double drop_margin = 0.05;
  double clearance_height = 0.2;

  void validate() const {
    if (!(0 < step_up_min && step_up_min <= step_up_max)) throw UsageError("invalid step-up range");
    if (!(0 < slope_min_deg && slope_min_deg <= slope_max_deg && slope_max_deg < 90))
      throw UsageError("invalid slope range");
    if (!(drop_margin >= 0 && clearance_height > 0)) throw UsageError("invalid drop margin / clearance");
  }

  /// Limits of trial `trial`; identical for every pose and action of a run.
  OracleLimits sample(std::uint64_t seed, int trial) const {
    Rng rng(mix_seed(mix_seed(seed, 0x7121a1), static_cast<std::uint64_t>(trial)));
    OracleLimits l;
    l.support.step_up_max = uniform(rng, step_up_min, step_up_max);
    l.support.drop_max = l.support.step_up_max + drop_margin;
    l.support.clearance_height = clearance_height;
    l.slope_max = deg2rad(uniform(rng, slope_min_deg, slope_max_deg));
    return l;
  }

  /// Most permissive limits; used to admit start poses.
  OracleLimits permissive() const {
    OracleLimits l;
    l.support.step_up_max = step_up_max;
    l.support.drop_max = step_up_max + drop_margin;
    l.support.clearance_height = clearance_height;
    l.slope_max = deg2rad(slope_max_deg);
    return l;
  }
};

struct MotionConfig {
  double translation = 0.40;            // meters
  double rotation = deg2rad(45.0);      // radians
  double translation_increment = 0.05;  // meters
  double rotation_increment = deg2rad(5.0);
};

/// Subsampling of start poses.
struct SamplingConfig {
  int xy_stride = 1;
  int heading_stride = 3;
};

inline bool orientation_ok(const BodyFrame& b, const OracleLimits& limits) {
  return std::abs(b.roll) <= limits.slope_max && std::abs(b.pitch) <= limits.slope_max;
}

/// Surrogate for a short standing trial: feet supported, tilt within limits,
/// body collision-free.
inline bool static_feasible(const OccupancyGrid& grid, const Pose& pose, const RobotModel& robot,
                            const OracleLimits& limits) {
  const auto body = align_body(grid, pose.p.x, pose.p.y, heading_unit(pose.heading_idx), pose.foot_support, robot,
                               limits.support);
  if (!body) return false;
  return orientation_ok(*body, limits) && !body_collides(grid, *body, robot);
}

/// Collision outcomes of a sweep keyed by (increment, foot supports). Trials of
/// one (start, action) pair mostly revisit identical body poses.
class CollisionMemo {
 public:
  std::optional<bool> find(int n, const std::array<double, 4>& z) const {
    for (const auto& [k, v] : entries_)
      if (k.first == n && k.second == z) return v;
    return std::nullopt;
  }
  void add(int n, const std::array<double, 4>& z, bool v) { entries_.push_back({{n, z}, v}); }

 private:
  std::vector<std::pair<std::pair<int, std::array<double, 4>>, bool>> entries_;
};

inline bool rollout(const OccupancyGrid& grid, const Pose& start, Action action, const RobotModel& robot,
                    const OracleLimits& limits, const MotionConfig& motion = {}, CollisionMemo* memo = nullptr) {
  const auto u0 = heading_unit(start.heading_idx);
  const bool rotate = is_rotation(action);
  std::array<double, 2> delta{};
  int steps = 0;
  if (rotate) {
    steps = static_cast<int>(std::ceil(motion.rotation / motion.rotation_increment - 1e-9));
  } else {
    std::array<double, 2> dir{};
    switch (action) {
      case Action::Forward: dir = u0; break;
      case Action::Backward: dir = {-u0[0], -u0[1]}; break;
      case Action::Left: dir = {-u0[1], u0[0]}; break;
      default: dir = {u0[1], -u0[0]}; break;
    }
    delta = {motion.translation * dir[0], motion.translation * dir[1]};
    steps = static_cast<int>(std::ceil(motion.translation / motion.translation_increment - 1e-9));
  }
  const double sign = action == Action::YawMinus45 ? -1.0 : 1.0;

  std::array<double, 4> z_ref = start.foot_support;
  for (int n = 0; n <= steps; ++n) {
    const double t = static_cast<double>(n) / steps;
    double x = start.p.x, y = start.p.y;
    auto unit = u0;
    if (rotate) {
      unit = rotate_unit(u0, sign * motion.rotation * t);
    } else {
      x += delta[0] * t;
      y += delta[1] * t;
    }
    const auto body = align_body(grid, x, y, unit, z_ref, robot, limits.support);
    if (!body || !orientation_ok(*body, limits)) return false;
    std::optional<bool> hit = memo ? memo->find(n, body->foot_support) : std::nullopt;
    if (!hit) {
      hit = body_collides(grid, *body, robot);
      if (memo) memo->add(n, body->foot_support, *hit);
    }
    if (*hit) return false;
    z_ref = body->foot_support;
  }
  return true;
}

struct StartPose {
  Index3 voxel{};
  int heading_idx = 0;
  Pose pose{};
};

/// Candidate support surfaces (top heights) in a column, bottom to top.
inline std::vector<double> column_surfaces(const OccupancyGrid& grid, int i, int j, double clearance) {
  const GridMeta& m = grid.meta();
  const int clear = static_cast<int>(std::ceil(clearance / m.resolution - 1e-9));
  std::vector<double> out;
  const std::size_t column = m.linear({i, j, 0});
  for (int k = 0; k + clear < m.dims[2]; ++k) {
    if (!grid.occupied_unchecked(column + static_cast<std::size_t>(k))) continue;
    bool free = true;
    for (int c = 1; c <= clear && free; ++c) free = !grid.occupied_unchecked(column + static_cast<std::size_t>(k + c));
    if (free) out.push_back(m.origin.z + (k + 1) * m.resolution);
  }
  return out;
}

/// One admissible start pose per (voxel, heading), in (voxel, heading) order.
inline std::vector<StartPose> sample_start_poses(const OccupancyGrid& grid, const RobotModel& robot,
                                                 const OracleLimits& static_limits,
                                                 const SamplingConfig& sampling = {}) {
  const GridMeta& m = grid.meta();
  std::map<std::pair<Index3, int>, Pose> kept;
  for (int i = 0; i < m.dims[0]; i += sampling.xy_stride)
    for (int j = 0; j < m.dims[1]; j += sampling.xy_stride) {
      const double x = m.origin.x + (i + 0.5) * m.resolution;
      const double y = m.origin.y + (j + 0.5) * m.resolution;
      for (double top : column_surfaces(grid, i, j, static_limits.support.clearance_height))
        for (int h = 0; h < kHeadings; h += sampling.heading_stride) {
          auto pose = align_pose(grid, x, y, top, h, robot, static_limits.support);
          if (!pose) continue;
          auto voxel = world_to_index(m, pose->p);
          if (!voxel || kept.count({*voxel, h})) continue;
          if (!static_feasible(grid, *pose, robot, static_limits)) continue;
          kept.emplace(std::pair{*voxel, h}, *pose);
        }
    }
  std::vector<StartPose> out;
  out.reserve(kept.size());
  for (const auto& [key, pose] : kept) out.push_back({key.first, key.second, pose});
  return out;
}

struct CollectConfig {
  int n_total = 10;
  std::uint64_t seed = 0;
  int jobs = 1;
  SamplingConfig sampling{};
  MotionConfig motion{};
  TrialRandomization randomization{};
};

using ProgressFn = std::function<void(std::size_t done, std::size_t total)>;

/// Success counts of every (start pose, action) under n_total randomized
/// trials. The result is independent of `jobs`.
inline TravTensor collect(const OccupancyGrid& grid, const RobotModel& robot, const CollectConfig& cfg,
                          const ProgressFn& progress = {}) {
  robot.validate();
  cfg.randomization.validate();
  if (cfg.n_total < 1 || cfg.n_total > 255) throw UsageError("n_total must be in [1,255]");
  if (cfg.sampling.xy_stride < 1 || cfg.sampling.heading_stride < 1) throw UsageError("strides must be >= 1");

  const auto starts = sample_start_poses(grid, robot, cfg.randomization.permissive(), cfg.sampling);
  std::vector<OracleLimits> trials;
  for (int t = 0; t < cfg.n_total; ++t) trials.push_back(cfg.randomization.sample(cfg.seed, t));

  std::vector<std::array<std::uint8_t, kActions>> successes(starts.size());
  auto work = [&](std::size_t begin, std::size_t end) {
    for (std::size_t s = begin; s < end; ++s)
      for (Action a : kAllActions) {
        CollisionMemo memo;
        int n = 0;
        for (const auto& limits : trials) n += rollout(grid, starts[s].pose, a, robot, limits, cfg.motion, &memo);
        successes[s][static_cast<int>(a)] = static_cast<std::uint8_t>(n);
      }
  };

  const std::size_t chunk = 256;
  const int jobs = std::max(1, cfg.jobs);
  std::size_t next = 0, done = 0;
  while (next < starts.size()) {
    std::vector<std::thread> pool;
    std::size_t begin = next;
    for (int t = 0; t < jobs && next < starts.size(); ++t) {
      const std::size_t end = std::min(starts.size(), next + chunk);
      if (jobs == 1)
        work(next, end);
      else
        pool.emplace_back(work, next, end);
      next = end;
    }
    for (auto& th : pool) th.join();
    done += next - begin;
    if (progress) progress(done, starts.size());
  }

  TravTensor out;
  out.meta = grid.meta();
  for (std::size_t s = 0; s < starts.size(); ++s)
    for (Action a : kAllActions)
      out.entries.emplace(TravKey{starts[s].voxel, static_cast<std::uint8_t>(starts[s].heading_idx),
                                  static_cast<std::uint8_t>(a)},
                          TrialCount{successes[s][static_cast<int>(a)], static_cast<std::uint8_t>(cfg.n_total)});
  return out;
}

}  // namespace voxtrav
