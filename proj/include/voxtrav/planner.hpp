#pragma once

// Risk-aware shortest paths over predicted traversability. Edge s->g costs
//   |p_g - p_s| + lambda * (1 - T(g)),
// between 26-neighbours whose scores clear the traversability threshold.

#include <map>
#include <optional>
#include <ostream>
#include <queue>

#include "voxtrav/voxgrid.hpp"

namespace voxtrav {

/// Raised when a query endpoint is not a graph node.
struct NotTraversable : UsageError {
  NotTraversable(const std::string& endpoint, const Index3& v)
      : UsageError(endpoint + " voxel (" + std::to_string(v.i) + "," + std::to_string(v.j) + "," + std::to_string(v.k) +
                   ") is not traversable"),
        endpoint(endpoint) {}
  std::string endpoint;
};

struct TravGraph {
  GridMeta meta;
  double lambda = 0.1;
  double tau = 0.05;
  std::vector<Index3> nodes;  // sorted
  std::vector<double> score;
  std::vector<std::uint32_t> first;  // CSR row starts, size nodes+1
  std::vector<std::uint32_t> target;
  std::vector<double> cost;

  std::size_t size() const { return nodes.size(); }

  std::optional<std::uint32_t> find(const Index3& v) const {
    auto it = std::lower_bound(nodes.begin(), nodes.end(), v);
    if (it == nodes.end() || *it != v) return std::nullopt;
    return static_cast<std::uint32_t>(it - nodes.begin());
  }
};

inline double edge_cost(double res, int di, int dj, int dk, double score_to, double lambda) {
  return res * std::sqrt(static_cast<double>(di * di + dj * dj + dk * dk)) + lambda * (1.0 - score_to);
}

inline TravGraph build_graph(const std::map<Index3, double>& pred, const GridMeta& meta, double tau = 0.05,
                             double lambda = 0.1) {
  if (!(lambda >= 0)) throw UsageError("lambda must be >= 0");
  TravGraph g;
  g.meta = meta;
  g.lambda = lambda;
  g.tau = tau;
  for (const auto& [v, s] : pred)
    if (s >= tau) {
      g.nodes.push_back(v);
      g.score.push_back(s);
    }
  g.first.push_back(0);
  for (std::size_t n = 0; n < g.nodes.size(); ++n) {
    const Index3 v = g.nodes[n];
    for (int di = -1; di <= 1; ++di)
      for (int dj = -1; dj <= 1; ++dj)
        for (int dk = -1; dk <= 1; ++dk) {
          if (!di && !dj && !dk) continue;
          const auto t = g.find({v.i + di, v.j + dj, v.k + dk});
          if (!t) continue;
          g.target.push_back(*t);
          g.cost.push_back(edge_cost(meta.resolution, di, dj, dk, g.score[*t], lambda));
        }
    g.first.push_back(static_cast<std::uint32_t>(g.target.size()));
  }
  return g;
}

struct Path {
  std::vector<Index3> voxels;
  std::vector<double> step_cost;  // cost of the edge entering each voxel; 0 for the start
  double cost = 0;
  double length = 0;  // geometric part
  double risk = 0;    // sum of (1 - T) over entered voxels
};

/// Minimal-cost path; on equal distances the lexicographically smaller
/// predecessor wins. Absent when the goal is unreachable.
inline std::optional<Path> dijkstra(const TravGraph& g, const Index3& start, const Index3& goal) {
  const auto s = g.find(start);
  if (!s) throw NotTraversable("start", start);
  const auto t = g.find(goal);
  if (!t) throw NotTraversable("goal", goal);

  constexpr auto none = std::numeric_limits<std::uint32_t>::max();
  std::vector<double> dist(g.size(), std::numeric_limits<double>::infinity());
  std::vector<std::uint32_t> pred(g.size(), none);
  std::vector<std::uint8_t> done(g.size(), 0);
  using Item = std::pair<double, std::uint32_t>;
  std::priority_queue<Item, std::vector<Item>, std::greater<>> queue;
  dist[*s] = 0;
  queue.push({0.0, *s});
  while (!queue.empty()) {
    const auto [d, u] = queue.top();
    queue.pop();
    if (done[u]) continue;
    done[u] = 1;
    if (u == *t) break;
    for (auto e = g.first[u]; e < g.first[u + 1]; ++e) {
      const auto v = g.target[e];
      if (done[v]) continue;
      const double nd = d + g.cost[e];
      if (nd < dist[v]) {
        dist[v] = nd;
        pred[v] = u;
        queue.push({nd, v});
      } else if (nd == dist[v] && u < pred[v]) {
        pred[v] = u;
      }
    }
  }
  if (!done[*t]) return std::nullopt;

  std::vector<std::uint32_t> chain;
  for (auto v = *t; v != none; v = pred[v]) chain.push_back(v);
  std::reverse(chain.begin(), chain.end());
  Path p;
  p.cost = dist[*t];
  for (std::size_t n = 0; n < chain.size(); ++n) {
    const Index3 v = g.nodes[chain[n]];
    p.voxels.push_back(v);
    if (n == 0) {
      p.step_cost.push_back(0);
      continue;
    }
    const Index3 u = g.nodes[chain[n - 1]];
    const double geo = edge_cost(g.meta.resolution, v.i - u.i, v.j - u.j, v.k - u.k, 1.0, 0.0);
    p.step_cost.push_back(edge_cost(g.meta.resolution, v.i - u.i, v.j - u.j, v.k - u.k, g.score[chain[n]], g.lambda));
    p.length += geo;
    p.risk += 1.0 - g.score[chain[n]];
  }
  return p;
}

/// Node whose center is closest to `p`; ties go to the smaller index.
inline std::optional<Index3> nearest_node(const TravGraph& g, const Vec3& p) {
  std::optional<Index3> best;
  double best_d = std::numeric_limits<double>::infinity();
  for (const auto& v : g.nodes) {
    const double d = (index_to_center(g.meta, v) - p).norm();
    if (d < best_d) best_d = d, best = v;
  }
  return best;
}

inline void write_path(std::ostream& out, const Path& p, const GridMeta& meta) {
  out.precision(9);
  out << "# x y z step_cost\n";
  out << "total_cost=" << p.cost << "\nlength=" << p.length << "\nrisk=" << p.risk << "\nsteps=" << p.voxels.size() << "\n";
  for (std::size_t n = 0; n < p.voxels.size(); ++n) {
    const Vec3 c = index_to_center(meta, p.voxels[n]);
    out << c.x << " " << c.y << " " << c.z << " " << p.step_cost[n] << "\n";
  }
}

}  // namespace voxtrav
