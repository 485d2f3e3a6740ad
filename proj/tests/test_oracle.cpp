#include <gtest/gtest.h>

#include "scenes.hpp"
#include "voxtrav/oracle.hpp"

using namespace voxtrav;
using namespace voxtrav::test;

namespace {

const RobotModel kRobot{};

OracleLimits nominal() { return TrialRandomization{}.permissive(); }

/// Start pose at the voxel column containing (x,y) resting on the floor.
Pose floor_pose(const OccupancyGrid& g, double x, double y, int heading) {
  const auto& m = g.meta();
  const double xc = m.origin.x + (std::floor((x - m.origin.x) / m.resolution) + 0.5) * m.resolution;
  const double yc = m.origin.y + (std::floor((y - m.origin.y) / m.resolution) + 0.5) * m.resolution;
  auto p = align_pose(g, xc, yc, m.origin.z + m.resolution, heading, kRobot, nominal().support);
  EXPECT_TRUE(p.has_value());
  return p.value_or(Pose{});
}

}  // namespace

TEST(Action, MirrorSwapsTranslationsAndFixesRotations) {
  EXPECT_EQ(mirror(Action::Forward), Action::Backward);
  EXPECT_EQ(mirror(Action::Left), Action::Right);
  EXPECT_EQ(mirror(Action::YawPlus45), Action::YawPlus45);
  for (Action a : kAllActions) EXPECT_EQ(mirror(mirror(a)), a);
  EXPECT_EQ(kAllActions.size(), 6u);
}

TEST(TrialRandomization, SamplesWithinRangesAndDeterministic) {
  TrialRandomization r;
  for (int t = 0; t < 200; ++t) {
    const auto l = r.sample(7, t);
    EXPECT_GE(l.support.step_up_max, 0.12);
    EXPECT_LE(l.support.step_up_max, 0.22);
    EXPECT_DOUBLE_EQ(l.support.drop_max, l.support.step_up_max + 0.05);
    EXPECT_GE(l.slope_max, deg2rad(25));
    EXPECT_LE(l.slope_max, deg2rad(35));
    const auto again = r.sample(7, t);
    EXPECT_EQ(l.support.step_up_max, again.support.step_up_max);
    EXPECT_EQ(l.slope_max, again.slope_max);
  }
}

TEST(StaticFeasible, FlatFloorAnyHeading) {
  auto g = flat_floor(4, 4, 2, 0.1);
  for (int h = 0; h < 36; ++h) EXPECT_TRUE(static_feasible(g, floor_pose(g, 2, 2, h), kRobot, nominal())) << h;
}

TEST(StaticFeasible, LowCeilingCollides) {
  auto g = flat_floor(4, 4, 2, 0.1);
  fill_box(g, {0, 0, 0.4}, {4, 4, 0.5});  // ceiling 0.3 m above the floor top
  auto p = align_pose(g, 2.05, 2.05, 0.1, 0, kRobot, nominal().support);
  ASSERT_TRUE(p);
  EXPECT_FALSE(static_feasible(g, *p, kRobot, nominal()));
}

TEST(StaticFeasible, SteepRampRejected) {
  // 40 degree ramp against a 35 degree slope limit
  auto g = ramp(6, 3, 5, 0.05, std::tan(deg2rad(40)), 1.0);
  const auto tops = column_surfaces(g, 60, 30, 0.2);
  ASSERT_EQ(tops.size(), 1u);
  auto p = align_pose(g, 3.025, 1.525, tops[0], 0, kRobot, {0.6, 0.6, 0.2});
  ASSERT_TRUE(p);
  EXPECT_NEAR(p->pitch, deg2rad(40), deg2rad(3));
  EXPECT_FALSE(static_feasible(g, *p, kRobot, nominal()));
}

TEST(Rollout, FlatFloorForwardSucceeds) {
  auto g = flat_floor(4, 4, 2, 0.1);
  for (Action a : kAllActions) EXPECT_TRUE(rollout(g, floor_pose(g, 2, 2, 7), a, kRobot, nominal())) << action_name(a);
}

TEST(Rollout, WallAheadBlocksForward) {
  auto g = flat_floor(4, 4, 2, 0.1);
  const Pose p = floor_pose(g, 1.0, 2.0, 0);
  const double front = p.p.x + kRobot.body_length / 2;
  fill_box(g, {front + 0.3, 0, 0.1}, {front + 0.5, 4, 1.5});
  ASSERT_TRUE(static_feasible(g, p, kRobot, nominal()));
  EXPECT_FALSE(rollout(g, p, Action::Forward, kRobot, nominal()));
  EXPECT_TRUE(rollout(g, p, Action::Backward, kRobot, nominal()));
}

TEST(Rollout, TableSlabPassUnderDependsOnHeight) {
  for (auto [height, expected] : {std::pair{0.8, true}, std::pair{0.5, false}}) {
    auto g = flat_floor(4, 4, 2, 0.1);
    const Pose p = floor_pose(g, 1.0, 2.0, 0);
    const double front = p.p.x + kRobot.body_length / 2;
    fill_box(g, {front + 0.2, 0, 0.1 + height}, {4, 4, 0.1 + height + 0.1});
    ASSERT_TRUE(static_feasible(g, p, kRobot, nominal()));
    EXPECT_EQ(rollout(g, p, Action::Forward, kRobot, nominal()), expected) << height;
  }
}

TEST(Rollout, StepPassesIffStepLimitAllows) {
  const double res = 0.085;  // the 0.17 m step is exactly two voxels
  OccupancyGrid g(make_meta(48, 36, 24, res));
  fill_box(g, {0, 0, 0}, {10, 10, res});
  const Pose p = floor_pose(g, 1.0, 1.5, 0);
  const double edge = p.p.x + kRobot.foot_length / 2 + 0.1;
  fill_box(g, {edge, 0, 0}, {10, 10, 3 * res});
  OracleLimits lo = nominal(), hi = nominal();
  lo.support.step_up_max = 0.16;
  hi.support.step_up_max = 0.18;
  EXPECT_FALSE(rollout(g, p, Action::Forward, kRobot, lo));
  EXPECT_TRUE(rollout(g, p, Action::Forward, kRobot, hi));
}

TEST(SampleStartPoses, FlatInteriorHasAllHeadings) {
  auto g = flat_floor(4, 4, 2, 0.1);
  auto poses = sample_start_poses(g, kRobot, nominal(), {4, 1});
  std::map<Index3, int> per_voxel;
  for (const auto& s : poses) {
    ++per_voxel[s.voxel];
    EXPECT_EQ(world_to_index(g.meta(), s.pose.p), s.voxel);
  }
  for (const auto& [v, n] : per_voxel) {
    EXPECT_LE(n, 36);
    if (v.i >= 12 && v.i <= 28 && v.j >= 12 && v.j <= 28) { EXPECT_EQ(n, 36) << v.i << "," << v.j; }
  }
  EXPECT_FALSE(per_voxel.empty());
}

TEST(SampleStartPoses, SolidBlockHasNone) {
  OccupancyGrid g(make_meta(30, 30, 20, 0.1));
  fill_box(g, {0, 0, 0}, {3, 3, 2});
  EXPECT_TRUE(sample_start_poses(g, kRobot, nominal(), {2, 6}).empty());
  OccupancyGrid empty(make_meta(10, 10, 10, 0.1));
  EXPECT_TRUE(sample_start_poses(empty, kRobot, nominal()).empty());
}

TEST(Collect, FlatFloorScoresOne) {
  auto g = flat_floor(4, 4, 2, 0.1);
  CollectConfig cfg;
  cfg.sampling = {5, 6};
  auto t = collect(g, kRobot, cfg);
  ASSERT_FALSE(t.entries.empty());
  for (const auto& [k, c] : t.entries) {
    EXPECT_EQ(c.n_total, 10);
    const auto v = k.voxel;
    if (v.i >= 15 && v.i <= 25 && v.j >= 15 && v.j <= 25) { EXPECT_EQ(c.n_suc, 10); }
  }
}

TEST(Collect, DeterministicAcrossJobs) {
  auto g = flat_floor(3, 3, 2, 0.1);
  fill_box(g, {1.2, 1.2, 0.1}, {1.5, 1.7, 0.25});
  CollectConfig cfg;
  cfg.sampling = {3, 9};
  cfg.seed = 11;
  auto a = collect(g, kRobot, cfg);
  cfg.jobs = 4;
  auto b = collect(g, kRobot, cfg);
  EXPECT_EQ(encode_trav(a).bytes(), encode_trav(b).bytes());
}

TEST(Collect, HighObstaclesNeverRaiseScores) {
  // Voxels placed above every support window can only add collisions.
  Rng rng(5);
  for (int scene = 0; scene < 3; ++scene) {
    auto g = flat_floor(3, 3, 2, 0.1);
    for (int b = 0; b < 4; ++b) {
      const double x = uniform(rng, 0, 2.6), y = uniform(rng, 0, 2.6);
      fill_box(g, {x, y, 0.1}, {x + 0.3, y + 0.3, 0.1 + 0.1 * static_cast<int>(uniform(rng, 1, 3))});
    }
    CollectConfig cfg;
    cfg.sampling = {2, 6};
    cfg.seed = 3;
    const auto before = collect(g, kRobot, cfg);
    for (int b = 0; b < 6; ++b) {
      const double x = uniform(rng, 0, 2.8), y = uniform(rng, 0, 2.8);
      fill_box(g, {x, y, 0.75}, {x + 0.2, y + 0.2, 1.0});
    }
    const auto after = collect(g, kRobot, cfg);
    for (const auto& [k, c] : after.entries) {
      auto it = before.entries.find(k);
      if (it != before.entries.end()) { EXPECT_LE(c.n_suc, it->second.n_suc); }
    }
  }
}
