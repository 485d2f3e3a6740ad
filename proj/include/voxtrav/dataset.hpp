#pragma once

// Robot-centric training windows: crop + yaw-align the occupancy around a base
// voxel, marginalize the traversability tensor into c-channel labels, augment,
// and (de)serialize as TWND.

#include <thread>

#include "voxtrav/oracle.hpp"

namespace voxtrav {

enum class Head : std::uint8_t { total = 1, dir4 = 4, orient = 18 };

inline int channels(Head h) { return static_cast<int>(h); }

inline Head parse_head(const std::string& s) {
  if (s == "total" || s == "1") return Head::total;
  if (s == "dir4" || s == "4") return Head::dir4;
  if (s == "orient" || s == "18") return Head::orient;
  throw UsageError("unknown head '" + s + "' (total|dir4|orient)");
}

inline const char* head_name(Head h) {
  switch (h) {
    case Head::total: return "total";
    case Head::dir4: return "dir4";
    default: return "orient";
  }
}

/// Fixed window geometry: 80 x 80 x 40 voxels, base voxel at (40,40,20).
struct WindowShape {
  std::array<int, 3> dims{80, 80, 40};
  std::array<int, 3> center{40, 40, 20};

  bool contains(const Index3& v) const {
    return v.i >= 0 && v.j >= 0 && v.k >= 0 && v.i < dims[0] && v.j < dims[1] && v.k < dims[2];
  }
};

/// c-vector with a per-channel presence flag.
struct Label {
  std::vector<float> value;
  std::vector<std::uint8_t> present;
  bool operator==(const Label&) const = default;
};

struct Window {
  float yaw = 0;
  Index3 center{};  // base voxel in the source grid
  std::vector<Index3> input;  // sorted window-frame coordinates
  std::map<Index3, Label> labels;
  bool operator==(const Window&) const = default;
};

struct Dataset {
  Head head = Head::total;
  std::vector<Window> windows;
  bool operator==(const Dataset&) const = default;
};

// ---------------------------------------------------------------------------
// Marginalization.

struct ScoreEntry {
  int heading = 0;
  Action action = Action::Forward;
  double score = 0;
};

/// Translation direction of an action relative to the heading, degrees.
inline std::optional<double> action_offset_deg(Action a) {
  switch (a) {
    case Action::Forward: return 0.0;
    case Action::Left: return 90.0;
    case Action::Backward: return 180.0;
    case Action::Right: return -90.0;
    default: return std::nullopt;
  }
}

/// Bin of a motion direction: 0 up [315,45), 1 right [45,135), 2 down
/// [135,225), 3 left [225,315).
inline int dir4_bin(double theta_deg) {
  const double t = std::fmod(std::fmod(theta_deg + 45.0, 360.0) + 360.0, 360.0);
  return std::min(3, static_cast<int>(std::floor(t / 90.0)));
}

/// c-channel label of one voxel. `yaw` re-expresses heading/direction
/// channels in a frame rotated by yaw (0 for world frame).
inline Label marginalize(std::span<const ScoreEntry> entries, Head head, double yaw = 0.0) {
  if (entries.empty()) throw UsageError("marginalize needs at least one entry");
  const int c = channels(head);
  std::vector<double> sum(static_cast<std::size_t>(c), 0.0);
  std::vector<int> n(static_cast<std::size_t>(c), 0);
  const double yaw_deg = rad2deg(yaw);
  const int shift = static_cast<int>(std::lround(yaw_deg / 10.0));
  for (const auto& e : entries) {
    int ch = -1;
    if (head == Head::total) {
      ch = 0;
    } else if (head == Head::orient) {
      // heading h and h+180 share a channel once actions are mirrored, so
      // each entry lands in channel (h mod 18) whichever half it came from
      ch = (((e.heading - shift) % 18) + 18) % 18;
    } else {
      const auto off = action_offset_deg(e.action);
      if (!off) continue;
      ch = dir4_bin(10.0 * e.heading + *off - yaw_deg);
    }
    sum[static_cast<std::size_t>(ch)] += e.score;
    ++n[static_cast<std::size_t>(ch)];
  }
  Label out;
  out.value.assign(static_cast<std::size_t>(c), 0.0f);
  out.present.assign(static_cast<std::size_t>(c), 0);
  for (int k = 0; k < c; ++k)
    if (n[static_cast<std::size_t>(k)] > 0) {
      out.value[static_cast<std::size_t>(k)] = static_cast<float>(sum[static_cast<std::size_t>(k)] / n[static_cast<std::size_t>(k)]);
      out.present[static_cast<std::size_t>(k)] = 1;
    }
  return out;
}

/// Mean over present channels; the scalar risk used by flood fill and the
/// planner.
inline double total_score(const Label& l) {
  double s = 0;
  int n = 0;
  for (std::size_t k = 0; k < l.value.size(); ++k)
    if (l.present[k]) {
      s += l.value[k];
      ++n;
    }
  return n ? s / n : 0.0;
}

// ---------------------------------------------------------------------------
// Extraction.

/// Window-frame lattice: a GridMeta whose voxel `shape.center` is centered
/// on the world point `base`.
inline GridMeta window_meta(const Vec3& base, double res, const WindowShape& shape = {}) {
  GridMeta m;
  m.dims = {shape.dims[0], shape.dims[1], shape.dims[2]};
  m.resolution = res;
  m.origin = base - Vec3{(shape.center[0] + 0.5) * res, (shape.center[1] + 0.5) * res, (shape.center[2] + 0.5) * res};
  return m;
}

namespace detail {

/// Source voxels whose centers can land inside the rotated window.
template <typename Fn>
void for_each_near(const GridMeta& m, const Index3& c, const WindowShape& shape, Fn&& fn) {
  const int rxy = static_cast<int>(std::ceil(std::hypot(shape.dims[0], shape.dims[1]) / 2.0)) + 1;
  const int i0 = std::max(0, c.i - rxy), i1 = std::min(m.dims[0] - 1, c.i + rxy);
  const int j0 = std::max(0, c.j - rxy), j1 = std::min(m.dims[1] - 1, c.j + rxy);
  const int k0 = std::max(0, c.k - shape.center[2] - 1), k1 = std::min(m.dims[2] - 1, c.k + shape.dims[2]);
  for (int i = i0; i <= i1; ++i)
    for (int j = j0; j <= j1; ++j)
      for (int k = k0; k <= k1; ++k) fn(Index3{i, j, k});
}

inline std::optional<Index3> to_window(const GridMeta& src, const GridMeta& win, const Vec3& base, double cy,
                                       double sy, const Index3& v) {
  const Vec3 q = index_to_center(src, v) - base;
  const Vec3 r{base.x + cy * q.x - sy * q.y, base.y + sy * q.x + cy * q.y, base.z + q.z};
  return world_to_index(win, r);
}

}  // namespace detail

/// Occupied voxels around `center`, rotated into the frame of a robot yawed by
/// `yaw` (stored as float, the precision windows carry).
inline std::vector<Index3> window_input(const OccupancyGrid& grid, const Index3& center, float yaw,
                                        const WindowShape& shape = {}) {
  const GridMeta& m = grid.meta();
  if (!m.valid(center)) throw UsageError("window center outside grid");
  const Vec3 base = index_to_center(m, center);
  const GridMeta win = window_meta(base, m.resolution, shape);
  const double cy = std::cos(-static_cast<double>(yaw)), sy = std::sin(-static_cast<double>(yaw));
  std::vector<Index3> in;
  detail::for_each_near(m, center, shape, [&](const Index3& v) {
    if (!grid.occupied(v)) return;
    if (auto t = detail::to_window(m, win, base, cy, sy, v)) in.push_back(*t);
  });
  std::sort(in.begin(), in.end());
  in.erase(std::unique(in.begin(), in.end()), in.end());
  return in;
}

/// Window around the base voxel `center` for a robot yawed by `yaw`.
inline Window extract_window(const OccupancyGrid& grid, const TravTensor& trav, const Index3& center, double yaw,
                             Head head, const WindowShape& shape = {}) {
  const GridMeta& m = grid.meta();
  if (!m.valid(center)) throw UsageError("window center outside grid");
  if (!(trav.meta == m)) throw UsageError("trav tensor and grid disagree on geometry");
  Window w;
  w.yaw = static_cast<float>(yaw);
  w.center = center;
  const double yaw_used = static_cast<double>(w.yaw);
  const Vec3 base = index_to_center(m, center);
  const GridMeta win = window_meta(base, m.resolution, shape);
  const double cy = std::cos(-yaw_used), sy = std::sin(-yaw_used);
  w.input = window_input(grid, center, w.yaw, shape);

  // labels: first source voxel (lexicographic) wins a window cell
  const int r = static_cast<int>(std::ceil(std::hypot(shape.dims[0], shape.dims[1]) / 2.0)) + 1;
  const Index3 lo{center.i - r, center.j - r, std::numeric_limits<std::int32_t>::min()};
  std::vector<ScoreEntry> group;
  auto flush = [&](const Index3& v) {
    if (group.empty()) return;
    if (auto t = detail::to_window(m, win, base, cy, sy, v); t && !w.labels.count(*t))
      w.labels.emplace(*t, marginalize(group, head, yaw_used));
    group.clear();
  };
  Index3 current{};
  for (auto it = trav.entries.lower_bound(TravKey{lo, 0, 0}); it != trav.entries.end(); ++it) {
    const Index3 v = it->first.voxel;
    if (v.i > center.i + r) break;
    if (std::abs(v.j - center.j) > r || v.k < center.k - shape.center[2] - 1 || v.k > center.k + shape.dims[2])
      continue;
    if (!group.empty() && v != current) flush(current);
    current = v;
    group.push_back({it->first.heading, static_cast<Action>(it->first.action), it->second.score()});
  }
  flush(current);
  return w;
}

// ---------------------------------------------------------------------------
// Augmentation.

struct AugmentConfig {
  bool flood_fill = true;
  double p_min = 0.02;     // dropout at the window center
  double p_max = 0.20;     // dropout at `radius` and beyond
  double radius = 4.0;     // meters, horizontal
  double spawn_prob = 0.02;

  void validate() const {
    if (!(0 <= p_min && p_min <= p_max && p_max <= 1)) throw UsageError("dropout probabilities must satisfy 0<=p_min<=p_max<=1");
    if (!(0 <= spawn_prob && spawn_prob <= 1)) throw UsageError("spawn probability outside [0,1]");
    if (!(radius > 0)) throw UsageError("dropout radius must be positive");
  }

  static AugmentConfig none() { return {false, 0, 0, 4.0, 0}; }
  static AugmentConfig flood_only() { return {true, 0, 0, 4.0, 0}; }
};

inline double dropout_probability(const AugmentConfig& cfg, double r) {
  return cfg.p_min + (cfg.p_max - cfg.p_min) * std::min(1.0, r / cfg.radius);
}

/// Horizontal distance of a window voxel from the window center, meters.
inline double window_radius(const Index3& v, double res, const WindowShape& shape = {}) {
  return std::hypot(v.i - shape.center[0], v.j - shape.center[1]) * res;
}

/// Flood-fill restriction of labels, radial dropout and surface noise. Label
/// coordinates never move; dropout and noise only touch the input.
inline Window augment(Window w, std::uint64_t seed, const AugmentConfig& cfg, double res,
                      const WindowShape& shape = {}) {
  cfg.validate();
  if (cfg.flood_fill) {
    std::map<Index3, double> scores;
    for (const auto& [v, l] : w.labels) scores.emplace(v, total_score(l));
    const Index3 seed_voxel{shape.center[0], shape.center[1], shape.center[2]};
    const auto reach = flood_fill_reachable(scores, seed_voxel);
    std::set<Index3> keep(reach.voxels.begin(), reach.voxels.end());
    for (auto& [v, l] : w.labels)
      if (!keep.count(v)) std::fill(l.value.begin(), l.value.end(), 0.0f);
  }

  Rng rng(mix_seed(seed, 0xa06));
  std::vector<Index3> kept;
  kept.reserve(w.input.size());
  for (const auto& v : w.input)
    if (!(uniform01(rng) < dropout_probability(cfg, window_radius(v, res, shape)))) kept.push_back(v);

  if (cfg.spawn_prob > 0) {
    std::set<Index3> occupied(kept.begin(), kept.end());
    std::vector<Index3> spawned;
    for (const auto& v : kept) {
      if (!(uniform01(rng) < cfg.spawn_prob)) continue;
      std::vector<Index3> free;
      for (int di = -1; di <= 1; ++di)
        for (int dj = -1; dj <= 1; ++dj)
          for (int dk = -1; dk <= 1; ++dk) {
            const Index3 n{v.i + di, v.j + dj, v.k + dk};
            if ((di || dj || dk) && shape.contains(n) && !occupied.count(n)) free.push_back(n);
          }
      if (free.empty()) continue;
      spawned.push_back(free[static_cast<std::size_t>(uniform_int(rng, 0, static_cast<std::int64_t>(free.size()) - 1))]);
    }
    kept.insert(kept.end(), spawned.begin(), spawned.end());
    std::sort(kept.begin(), kept.end());
    kept.erase(std::unique(kept.begin(), kept.end()), kept.end());
  }
  w.input = std::move(kept);
  return w;
}

// ---------------------------------------------------------------------------
// Window sampling over a labelled grid.

struct WindowSampling {
  int count = 64;
  std::uint64_t seed = 0;
  int jobs = 1;
  AugmentConfig augment{};
};

/// `count` windows centered on random labelled voxels with random 10-degree
/// yaws. Window n depends only on (seed, n).
inline Dataset sample_windows(const OccupancyGrid& grid, const TravTensor& trav, Head head,
                              const WindowSampling& cfg) {
  Dataset ds;
  ds.head = head;
  const auto centers = trav.voxels();
  if (centers.empty() || cfg.count <= 0) return ds;
  ds.windows.resize(static_cast<std::size_t>(cfg.count));
  auto make = [&](std::size_t n) {
    Rng rng(mix_seed(cfg.seed, n));
    const auto c = centers[static_cast<std::size_t>(uniform_int(rng, 0, static_cast<std::int64_t>(centers.size()) - 1))];
    const double yaw = deg2rad(10.0 * static_cast<double>(uniform_int(rng, 0, kHeadings - 1)));
    ds.windows[n] = augment(extract_window(grid, trav, c, yaw, head), rng(), cfg.augment, grid.meta().resolution);
  };
  const int jobs = std::max(1, cfg.jobs);
  std::vector<std::thread> pool;
  for (int t = 0; t < jobs; ++t)
    pool.emplace_back([&, t] {
      for (std::size_t n = static_cast<std::size_t>(t); n < ds.windows.size(); n += static_cast<std::size_t>(jobs)) make(n);
    });
  for (auto& th : pool) th.join();
  return ds;
}

// ---------------------------------------------------------------------------
// TWND format.

inline ByteWriter encode_twnd(const Dataset& ds) {
  ByteWriter w;
  w.put_magic("TWND");
  w.put<std::uint32_t>(1);
  w.put<std::uint8_t>(static_cast<std::uint8_t>(ds.head));
  w.put<std::uint64_t>(ds.windows.size());
  const auto c = static_cast<std::size_t>(channels(ds.head));
  auto put_coord = [&](const Index3& v) {
    for (int ax = 0; ax < 3; ++ax) {
      if (v[ax] < 0 || v[ax] > 0xffff) throw UsageError("window coordinate exceeds u16");
      w.put<std::uint16_t>(static_cast<std::uint16_t>(v[ax]));
    }
  };
  for (const auto& win : ds.windows) {
    w.put<float>(win.yaw);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(win.center.i));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(win.center.j));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(win.center.k));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(win.input.size()));
    for (const auto& v : win.input) put_coord(v);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(win.labels.size()));
    for (const auto& [v, l] : win.labels) {
      if (l.value.size() != c || l.present.size() != c) throw UsageError("label width does not match head");
      put_coord(v);
      for (float x : l.value) w.put<float>(x);
      for (auto p : l.present) w.put<std::uint8_t>(p);
    }
  }
  return w;
}

inline Dataset decode_twnd(ByteReader& r) {
  r.expect_magic("TWND");
  r.expect_version(1);
  Dataset ds;
  {
    const auto at = r.offset();
    const auto h = r.get<std::uint8_t>();
    if (h != 1 && h != 4 && h != 18) throw FormatError("invalid head width " + std::to_string(h), at);
    ds.head = static_cast<Head>(h);
  }
  const auto c = static_cast<std::size_t>(channels(ds.head));
  const auto count = r.get<std::uint64_t>();
  r.expect_records(count, 24);
  auto get_coord = [&] {
    Index3 v;
    v.i = r.get<std::uint16_t>();
    v.j = r.get<std::uint16_t>();
    v.k = r.get<std::uint16_t>();
    return v;
  };
  ds.windows.reserve(count);
  for (std::uint64_t n = 0; n < count; ++n) {
    Window w;
    w.yaw = r.get<float>();
    w.center.i = static_cast<std::int32_t>(r.get<std::uint32_t>());
    w.center.j = static_cast<std::int32_t>(r.get<std::uint32_t>());
    w.center.k = static_cast<std::int32_t>(r.get<std::uint32_t>());
    const auto n_in = r.get<std::uint32_t>();
    r.expect_records(n_in, 6);
    w.input.reserve(n_in);
    for (std::uint32_t q = 0; q < n_in; ++q) {
      const auto at = r.offset();
      const Index3 v = get_coord();
      if (!w.input.empty() && !(w.input.back() < v)) throw FormatError("input coordinates not strictly sorted", at);
      w.input.push_back(v);
    }
    const auto n_lab = r.get<std::uint32_t>();
    r.expect_records(n_lab, 6 + 5 * c);
    for (std::uint32_t q = 0; q < n_lab; ++q) {
      const auto at = r.offset();
      const Index3 v = get_coord();
      Label l;
      l.value.resize(c);
      l.present.resize(c);
      for (auto& x : l.value) x = r.get<float>();
      for (auto& p : l.present) p = r.get<std::uint8_t>();
      for (std::size_t k = 0; k < c; ++k)
        if (!(l.value[k] >= 0 && l.value[k] <= 1) || l.present[k] > 1) throw FormatError("label outside [0,1]", at);
      if (!w.labels.empty() && !(w.labels.rbegin()->first < v)) throw FormatError("label coordinates not sorted", at);
      w.labels.emplace_hint(w.labels.end(), v, std::move(l));
    }
    ds.windows.push_back(std::move(w));
  }
  r.expect_end();
  return ds;
}

inline void write_dataset(const std::string& path, const Dataset& ds) { encode_twnd(ds).save(path); }

inline Dataset read_dataset(const std::string& path) {
  auto r = ByteReader::load(path);
  return decode_twnd(r);
}

}  // namespace voxtrav
