#pragma once

// Reference shortest-path solvers and random predicted maps.

#include <functional>

#include "voxtrav/planner.hpp"

namespace voxtrav::test {

/// Random scores on a small box; about `fill` of the voxels get one.
inline std::map<Index3, double> random_map(Rng& rng, int nx, int ny, int nz, double fill) {
  std::map<Index3, double> m;
  for (int i = 0; i < nx; ++i)
    for (int j = 0; j < ny; ++j)
      for (int k = 0; k < nz; ++k)
        if (uniform01(rng) < fill) m[{i, j, k}] = uniform01(rng) < 0.1 ? 0.0 : uniform01(rng);
  return m;
}

/// Relaxes every edge until nothing changes.
inline std::vector<double> bellman_ford(const TravGraph& g, std::uint32_t s) {
  std::vector<double> d(g.size(), std::numeric_limits<double>::infinity());
  d[s] = 0;
  for (std::size_t round = 0; round < g.size(); ++round) {
    bool changed = false;
    for (std::uint32_t u = 0; u < g.size(); ++u)
      for (auto e = g.first[u]; e < g.first[u + 1]; ++e)
        if (d[u] + g.cost[e] < d[g.target[e]]) {
          d[g.target[e]] = d[u] + g.cost[e];
          changed = true;
        }
    if (!changed) break;
  }
  return d;
}

/// Minimum over every simple path, summed left to right.
inline double enumerate_paths(const TravGraph& g, std::uint32_t s, std::uint32_t t) {
  double best = std::numeric_limits<double>::infinity();
  std::vector<std::uint8_t> on(g.size(), 0);
  std::function<void(std::uint32_t, double)> walk = [&](std::uint32_t u, double c) {
    if (u == t) {
      best = std::min(best, c);
      return;
    }
    on[u] = 1;
    for (auto e = g.first[u]; e < g.first[u + 1]; ++e)
      if (!on[g.target[e]]) walk(g.target[e], c + g.cost[e]);
    on[u] = 0;
  };
  walk(s, 0.0);
  return best;
}

}  // namespace voxtrav::test
