#include <gtest/gtest.h>

#include "scenes.hpp"

using namespace voxtrav;
using namespace voxtrav::test;

TEST(WorldToIndex, Examples) {
  const auto m = make_meta(10, 10, 10, 0.1);
  EXPECT_EQ(world_to_index(m, {0.05, 0.05, 0.05}), (Index3{0, 0, 0}));
  EXPECT_FALSE(world_to_index(m, {1.0, 0, 0}));
  EXPECT_FALSE(world_to_index(m, {-0.01, 0, 0}));
  const auto shifted = make_meta(30, 30, 10, 0.1, {-1, -1, 0});
  EXPECT_EQ(world_to_index(shifted, {0, 0, 0.25}), (Index3{10, 10, 2}));
}

TEST(IndexToCenter, ExamplesAndRoundTrip) {
  const auto m = make_meta(10, 10, 10, 0.1);
  const Vec3 c0 = index_to_center(m, {0, 0, 0});
  EXPECT_DOUBLE_EQ(c0.x, 0.05);
  EXPECT_DOUBLE_EQ(index_to_center(m, {9, 0, 0}).x, 0.95);
  EXPECT_THROW(index_to_center(m, {10, 0, 0}), UsageError);

  const auto big = make_meta(97, 61, 33, 0.07, {-3.3, 1.7, -0.4});
  Rng rng(1);
  for (int n = 0; n < 1000; ++n) {
    const Index3 v{static_cast<int>(uniform_int(rng, 0, 96)), static_cast<int>(uniform_int(rng, 0, 60)),
                   static_cast<int>(uniform_int(rng, 0, 32))};
    EXPECT_EQ(world_to_index(big, index_to_center(big, v)), v);
  }
}

TEST(PackIndex, MonotoneAndInvertible) {
  Rng rng(2);
  std::vector<Index3> v;
  for (int n = 0; n < 500; ++n)
    v.push_back({static_cast<int>(uniform_int(rng, 0, (1 << 21) - 1)), static_cast<int>(uniform_int(rng, 0, 50)),
                 static_cast<int>(uniform_int(rng, 0, (1 << 21) - 1))});
  std::sort(v.begin(), v.end());
  for (std::size_t n = 0; n < v.size(); ++n) {
    EXPECT_EQ(unpack_index(pack_index(v[n])), v[n]);
    if (n) { EXPECT_LE(pack_index(v[n - 1]), pack_index(v[n])); }
  }
}

TEST(OccupancyGrid, InsertIsIdempotent) {
  OccupancyGrid g(make_meta(4, 4, 4, 0.1));
  g.insert({1, 2, 3});
  g.insert({1, 2, 3});
  EXPECT_EQ(g.count(), 1u);
  EXPECT_TRUE(g.occupied({1, 2, 3}));
  EXPECT_FALSE(g.occupied({-1, 2, 3}));
  EXPECT_THROW(g.insert({4, 0, 0}), UsageError);
  g.erase({1, 2, 3});
  EXPECT_EQ(g.count(), 0u);
}

namespace {

std::set<Index3> bfs_reference(const std::map<Index3, double>& s, Index3 seed) {
  std::set<Index3> out;
  if (!s.count(seed) || !(s.at(seed) > 0)) return out;
  std::vector<Index3> stack{seed};
  out.insert(seed);
  while (!stack.empty()) {
    auto v = stack.back();
    stack.pop_back();
    for (const auto& [w, score] : s) {
      const int d = std::max({std::abs(w.i - v.i), std::abs(w.j - v.j), std::abs(w.k - v.k)});
      if (d == 1 && score > 0 && out.insert(w).second) stack.push_back(w);
    }
  }
  return out;
}

}  // namespace

TEST(FloodFill, Examples) {
  std::map<Index3, double> one{{{3, 3, 3}, 1.0}};
  auto r = flood_fill_reachable(one, {3, 3, 3});
  EXPECT_TRUE(r.seed_valid);
  EXPECT_EQ(r.voxels, (std::vector<Index3>{{3, 3, 3}}));

  std::map<Index3, double> gap{{{0, 0, 0}, 1.0}, {{1, 0, 0}, 0.0}, {{2, 0, 0}, 1.0}};
  EXPECT_EQ(flood_fill_reachable(gap, {0, 0, 0}).voxels, (std::vector<Index3>{{0, 0, 0}}));
  EXPECT_FALSE(flood_fill_reachable(gap, {1, 0, 0}).seed_valid);
  EXPECT_TRUE(flood_fill_reachable(gap, {5, 5, 5}).voxels.empty());
}

TEST(FloodFill, MatchesBfsAndIsFixedPoint) {
  Rng rng(3);
  for (int trial = 0; trial < 8; ++trial) {
    std::map<Index3, double> s;
    for (int i = 0; i < 16; ++i)
      for (int j = 0; j < 16; ++j)
        for (int k = 0; k < 16; ++k)
          if (uniform01(rng) < 0.15) s[{i, j, k}] = uniform01(rng) < 0.3 ? 0.0 : uniform01(rng);
    const Index3 seed = std::next(s.begin(), static_cast<long>(uniform_int(rng, 0, s.size() - 1)))->first;
    const auto got = flood_fill_reachable(s, seed);
    const auto want = bfs_reference(s, seed);
    EXPECT_EQ(std::set<Index3>(got.voxels.begin(), got.voxels.end()), want);
    if (got.voxels.empty()) continue;
    std::map<Index3, double> restricted;
    for (const auto& v : got.voxels) restricted[v] = s.at(v);
    EXPECT_EQ(flood_fill_reachable(restricted, seed).voxels, got.voxels);
  }
}

TEST(RotateCoords, IdentityAndQuarterTurn) {
  const auto m = make_meta(20, 20, 4, 0.1);
  std::vector<Index3> all{{3, 4, 1}, {10, 10, 0}, {19, 0, 3}};
  std::sort(all.begin(), all.end());
  EXPECT_EQ(rotate_coords_about_z(all, m, 0.0, {1.0, 1.0, 0}), all);
  // voxel centered 1 m along +x of the center lands 1 m along -y
  const auto big = make_meta(30, 30, 4, 0.1);
  const Vec3 center = index_to_center(big, {15, 15, 2});
  const std::vector<Index3> one{{25, 15, 1}};
  EXPECT_EQ(rotate_coords_about_z(one, big, kPi / 2, center), (std::vector<Index3>{{15, 5, 1}}));
  EXPECT_EQ(rotate_coords_about_z(one, big, -kPi / 2, center), (std::vector<Index3>{{15, 25, 1}}));
}

TEST(RotateCoords, HalfTurnTwiceRestores) {
  const auto m = make_meta(24, 24, 6, 0.1);
  const Vec3 center{1.2, 1.2, 0};
  Rng rng(4);
  for (int t = 0; t < 20; ++t) {
    std::vector<Index3> set;
    for (int n = 0; n < 60; ++n)
      set.push_back({static_cast<int>(uniform_int(rng, 0, 23)), static_cast<int>(uniform_int(rng, 0, 23)),
                     static_cast<int>(uniform_int(rng, 0, 5))});
    std::sort(set.begin(), set.end());
    set.erase(std::unique(set.begin(), set.end()), set.end());
    const auto once = rotate_coords_about_z(set, m, kPi, center);
    EXPECT_EQ(once.size(), set.size());  // exact bijection on the corner lattice
    EXPECT_EQ(rotate_coords_about_z(once, m, kPi, center), set);
  }
}

TEST(Formats, VoxgRoundTripAndErrors) {
  OccupancyGrid g(make_meta(5, 6, 7, 0.25, {-1, 2, 0.5}));
  g.insert({0, 0, 0});
  g.insert({4, 5, 6});
  g.insert({2, 3, 1});
  auto bytes = encode_voxg(g).bytes();
  ByteReader r(bytes);
  EXPECT_EQ(decode_voxg(r), g);
  EXPECT_EQ(bytes.size(), 4u + 4 + 12 + 32 + 8 + 3 * 12);

  auto bad = bytes;
  bad[4] = 2;
  ByteReader rv(bad);
  EXPECT_THROW(decode_voxg(rv), FormatError);
  auto cut = bytes;
  cut.resize(cut.size() - 3);
  ByteReader rc(cut);
  try {
    decode_voxg(rc);
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_GT(e.offset, 0u);
  }
  auto magic = bytes;
  magic[0] = 'X';
  ByteReader rm(magic);
  EXPECT_THROW(decode_voxg(rm), FormatError);
}

TEST(Formats, TravRoundTrip) {
  TravTensor t;
  t.meta = make_meta(8, 8, 8, 0.1);
  Rng rng(5);
  for (int n = 0; n < 100; ++n) {
    const auto total = static_cast<std::uint8_t>(uniform_int(rng, 1, 10));
    t.set({{static_cast<int>(uniform_int(rng, 0, 7)), static_cast<int>(uniform_int(rng, 0, 7)),
            static_cast<int>(uniform_int(rng, 0, 7))},
           static_cast<std::uint8_t>(uniform_int(rng, 0, 35)),
           static_cast<std::uint8_t>(uniform_int(rng, 0, 5))},
          {static_cast<std::uint8_t>(uniform_int(rng, 0, total)), total});
  }
  const auto bytes = encode_trav(t).bytes();
  ByteReader r(bytes);
  const auto back = decode_trav(r);
  EXPECT_EQ(back, t);
  EXPECT_EQ(encode_trav(back).bytes(), bytes);
  EXPECT_THROW(t.set({{0, 0, 0}, 0, 0}, {3, 2}), UsageError);
}
