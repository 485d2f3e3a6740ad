#pragma once

// Spatial data structures shared by the whole pipeline: grid geometry,
// occupancy grids, robot poses, traversability tensors, and the VOXG / TRAV
// file formats.

#include <array>
#include <cstdint>
#include <deque>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "voxtrav/core.hpp"

namespace voxtrav {

/// Axis-aligned voxel lattice. Cells are half-open: cell (i,j,k) covers
/// [origin + i*res, origin + (i+1)*res) on each axis.
struct GridMeta {
  std::array<std::int32_t, 3> dims{1, 1, 1};
  Vec3 origin{};
  double resolution = 0.1;

  bool valid(const Index3& v) const {
    return v.i >= 0 && v.j >= 0 && v.k >= 0 && v.i < dims[0] && v.j < dims[1] && v.k < dims[2];
  }
  std::size_t voxel_count() const {
    return static_cast<std::size_t>(dims[0]) * static_cast<std::size_t>(dims[1]) * static_cast<std::size_t>(dims[2]);
  }
  /// Row-major (i slowest, k fastest), which is lexicographic (i,j,k) order.
  std::size_t linear(const Index3& v) const {
    return (static_cast<std::size_t>(v.i) * static_cast<std::size_t>(dims[1]) + static_cast<std::size_t>(v.j)) *
               static_cast<std::size_t>(dims[2]) +
           static_cast<std::size_t>(v.k);
  }
  Index3 unlinear(std::size_t n) const {
    const auto nz = static_cast<std::size_t>(dims[2]);
    const auto ny = static_cast<std::size_t>(dims[1]);
    return {static_cast<std::int32_t>(n / (ny * nz)), static_cast<std::int32_t>((n / nz) % ny),
            static_cast<std::int32_t>(n % nz)};
  }
  void validate() const {
    if (dims[0] < 1 || dims[1] < 1 || dims[2] < 1) throw UsageError("grid dims must be >= 1");
    if (!(resolution > 0)) throw UsageError("grid resolution must be > 0");
  }
  bool operator==(const GridMeta&) const = default;
};

/// Packed 64-bit voxel key: bits 42..62 hold i, 21..41 hold j, 0..20 hold k.
/// Each component must lie in [0, 2^21). Packing is monotone in (i,j,k)
/// lexicographic order, so sorting keys sorts coordinates.
constexpr std::uint64_t pack_index(const Index3& v) {
  return (static_cast<std::uint64_t>(v.i) << 42) | (static_cast<std::uint64_t>(v.j) << 21) |
         static_cast<std::uint64_t>(v.k);
}

constexpr Index3 unpack_index(std::uint64_t key) {
  constexpr std::uint64_t m = (1ULL << 21) - 1;
  return {static_cast<std::int32_t>((key >> 42) & m), static_cast<std::int32_t>((key >> 21) & m),
          static_cast<std::int32_t>(key & m)};
}

inline std::optional<Index3> world_to_index(const GridMeta& meta, const Vec3& p) {
  const double fi = std::floor((p.x - meta.origin.x) / meta.resolution);
  const double fj = std::floor((p.y - meta.origin.y) / meta.resolution);
  const double fk = std::floor((p.z - meta.origin.z) / meta.resolution);
  if (!(fi >= 0 && fj >= 0 && fk >= 0 && fi < meta.dims[0] && fj < meta.dims[1] && fk < meta.dims[2]))
    return std::nullopt;
  return Index3{static_cast<std::int32_t>(fi), static_cast<std::int32_t>(fj), static_cast<std::int32_t>(fk)};
}

inline Vec3 index_to_center(const GridMeta& meta, const Index3& v) {
  if (!meta.valid(v)) throw UsageError("voxel index out of bounds");
  return {meta.origin.x + (v.i + 0.5) * meta.resolution, meta.origin.y + (v.j + 0.5) * meta.resolution,
          meta.origin.z + (v.k + 0.5) * meta.resolution};
}

/// Binary occupancy over a GridMeta. Storage is a dense byte mask so point
/// queries from the traversal oracle stay O(1).
class OccupancyGrid {
 public:
  OccupancyGrid() = default;
  explicit OccupancyGrid(GridMeta meta) : meta_(meta) {
    meta_.validate();
    mask_.assign(meta_.voxel_count(), 0);
  }

  const GridMeta& meta() const { return meta_; }

  void insert(const Index3& v) {
    if (!meta_.valid(v)) throw UsageError("occupied voxel outside grid");
    auto& cell = mask_[meta_.linear(v)];
    count_ += cell == 0;
    cell = 1;
  }
  void erase(const Index3& v) {
    if (!meta_.valid(v)) return;
    auto& cell = mask_[meta_.linear(v)];
    count_ -= cell != 0;
    cell = 0;
  }

  /// O(x,y,z); out-of-grid voxels read as free.
  bool occupied(const Index3& v) const { return meta_.valid(v) && mask_[meta_.linear(v)] != 0; }
  bool occupied_unchecked(std::size_t linear_index) const { return mask_[linear_index] != 0; }

  std::size_t count() const { return count_; }

  /// Occupied voxels in lexicographic order.
  std::vector<Index3> occupied_voxels() const {
    std::vector<Index3> out;
    out.reserve(count_);
    for (std::size_t n = 0; n < mask_.size(); ++n)
      if (mask_[n]) out.push_back(meta_.unlinear(n));
    return out;
  }

  bool operator==(const OccupancyGrid& o) const { return meta_ == o.meta_ && mask_ == o.mask_; }

 private:
  GridMeta meta_{};
  std::vector<std::uint8_t> mask_;
  std::size_t count_ = 0;
};

/// Robot base state. Position is the body-bottom center; heading is
/// 10 degrees times heading_idx measured counter-clockwise from +x.
struct Pose {
  Vec3 p{};
  int heading_idx = 0;
  double roll = 0;
  double pitch = 0;
  /// Support heights under the four feet in RobotModel foot order.
  std::array<double, 4> foot_support{};
};

inline constexpr int kHeadings = 36;
inline constexpr int kActions = 6;

struct TravKey {
  Index3 voxel{};
  std::uint8_t heading = 0;
  std::uint8_t action = 0;
  constexpr auto operator<=>(const TravKey&) const = default;
};

struct TrialCount {
  std::uint8_t n_suc = 0;
  std::uint8_t n_total = 0;
  double score() const { return n_total == 0 ? 0.0 : static_cast<double>(n_suc) / n_total; }
  bool operator==(const TrialCount&) const = default;
};

/// Sparse T(x,y,z,heading,action) -> (successes, trials).
struct TravTensor {
  GridMeta meta{};
  std::map<TravKey, TrialCount> entries;

  void set(const TravKey& key, TrialCount c) {
    if (c.n_suc > c.n_total) throw UsageError("n_suc exceeds n_total");
    if (key.heading >= kHeadings || key.action >= kActions) throw UsageError("heading/action out of range");
    if (!meta.valid(key.voxel)) throw UsageError("trav voxel outside grid");
    entries[key] = c;
  }

  std::optional<double> score(const TravKey& key) const {
    auto it = entries.find(key);
    if (it == entries.end()) return std::nullopt;
    return it->second.score();
  }

  /// Voxels with at least one entry, lexicographic.
  std::vector<Index3> voxels() const {
    std::vector<Index3> out;
    for (const auto& [key, _] : entries)
      if (out.empty() || out.back() != key.voxel) out.push_back(key.voxel);
    return out;
  }

  bool operator==(const TravTensor&) const = default;
};

// ---------------------------------------------------------------------------
// Flood fill.

struct FloodFillResult {
  std::vector<Index3> voxels;  // sorted
  bool seed_valid = false;
};

/// Voxels connected to `seed` through voxels of positive score. Neighbours
/// are all offsets with Chebyshev norm <= radius; radius 1 is 26-connectivity.
inline FloodFillResult flood_fill_reachable(const std::map<Index3, double>& scores, const Index3& seed,
                                            int radius = 1) {
  FloodFillResult out;
  auto s = scores.find(seed);
  if (s == scores.end() || !(s->second > 0)) return out;
  out.seed_valid = true;

  std::set<Index3> seen{seed};
  std::deque<Index3> queue{seed};
  while (!queue.empty()) {
    const Index3 v = queue.front();
    queue.pop_front();
    for (int di = -radius; di <= radius; ++di)
      for (int dj = -radius; dj <= radius; ++dj)
        for (int dk = -radius; dk <= radius; ++dk) {
          if (di == 0 && dj == 0 && dk == 0) continue;
          const Index3 n{v.i + di, v.j + dj, v.k + dk};
          auto it = scores.find(n);
          if (it == scores.end() || !(it->second > 0)) continue;
          if (seen.insert(n).second) queue.push_back(n);
        }
  }
  out.voxels.assign(seen.begin(), seen.end());
  return out;
}

// ---------------------------------------------------------------------------
// Yaw rotation of voxel sets.

/// Rotates each voxel center of `src` by -yaw about the vertical axis through
/// `center` and re-quantizes into `dst`. Duplicates collapse, out-of-bounds
/// results are dropped; the result is sorted.
inline std::vector<Index3> rotate_coords_about_z(std::span<const Index3> coords, const GridMeta& src, double yaw,
                                                 const Vec3& center, const GridMeta& dst) {
  const double c = std::cos(-yaw);
  const double s = std::sin(-yaw);
  std::vector<Index3> out;
  out.reserve(coords.size());
  for (const auto& v : coords) {
    if (!src.valid(v)) continue;
    const Vec3 q = index_to_center(src, v) - center;
    const Vec3 r{center.x + c * q.x - s * q.y, center.y + s * q.x + c * q.y, center.z + q.z};
    if (auto idx = world_to_index(dst, r)) out.push_back(*idx);
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

inline std::vector<Index3> rotate_coords_about_z(std::span<const Index3> coords, const GridMeta& meta, double yaw,
                                                 const Vec3& center) {
  return rotate_coords_about_z(coords, meta, yaw, center, meta);
}

// ---------------------------------------------------------------------------
// VOXG and TRAV formats (little-endian).

namespace detail {

inline void put_meta(ByteWriter& w, const GridMeta& m) {
  for (auto d : m.dims) w.put<std::uint32_t>(static_cast<std::uint32_t>(d));
  w.put<double>(m.origin.x);
  w.put<double>(m.origin.y);
  w.put<double>(m.origin.z);
  w.put<double>(m.resolution);
}

inline GridMeta get_meta(ByteReader& r) {
  const auto at = r.offset();
  GridMeta m;
  for (auto& d : m.dims) {
    const auto v = r.get<std::uint32_t>();
    if (v == 0 || v > (1u << 21)) throw FormatError("invalid grid dimension", at);
    d = static_cast<std::int32_t>(v);
  }
  m.origin.x = r.get<double>();
  m.origin.y = r.get<double>();
  m.origin.z = r.get<double>();
  m.resolution = r.get<double>();
  if (!(m.resolution > 0) || !std::isfinite(m.resolution)) throw FormatError("invalid resolution", at);
  return m;
}

inline Index3 get_index(ByteReader& r, const GridMeta& m) {
  const auto at = r.offset();
  Index3 v{static_cast<std::int32_t>(r.get<std::uint32_t>()), static_cast<std::int32_t>(r.get<std::uint32_t>()),
           static_cast<std::int32_t>(r.get<std::uint32_t>())};
  if (!m.valid(v)) throw FormatError("voxel index out of bounds", at);
  return v;
}

}  // namespace detail

inline ByteWriter encode_voxg(const OccupancyGrid& grid) {
  ByteWriter w;
  w.put_magic("VOXG");
  w.put<std::uint32_t>(1);
  detail::put_meta(w, grid.meta());
  const auto vox = grid.occupied_voxels();
  w.put<std::uint64_t>(vox.size());
  for (const auto& v : vox) {
    w.put<std::uint32_t>(static_cast<std::uint32_t>(v.i));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(v.j));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(v.k));
  }
  return w;
}

inline OccupancyGrid decode_voxg(ByteReader& r) {
  r.expect_magic("VOXG");
  r.expect_version(1);
  OccupancyGrid grid(detail::get_meta(r));
  const auto count = r.get<std::uint64_t>();
  r.expect_records(count, 12);
  for (std::uint64_t n = 0; n < count; ++n) grid.insert(detail::get_index(r, grid.meta()));
  r.expect_end();
  return grid;
}

inline void write_voxg(const std::string& path, const OccupancyGrid& grid) { encode_voxg(grid).save(path); }

inline OccupancyGrid read_voxg(const std::string& path) {
  auto r = ByteReader::load(path);
  return decode_voxg(r);
}

inline ByteWriter encode_trav(const TravTensor& t) {
  ByteWriter w;
  w.put_magic("TRAV");
  w.put<std::uint32_t>(1);
  detail::put_meta(w, t.meta);
  w.put<std::uint64_t>(t.entries.size());
  for (const auto& [key, c] : t.entries) {
    w.put<std::uint32_t>(static_cast<std::uint32_t>(key.voxel.i));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(key.voxel.j));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(key.voxel.k));
    w.put<std::uint8_t>(key.heading);
    w.put<std::uint8_t>(key.action);
    w.put<std::uint8_t>(c.n_suc);
    w.put<std::uint8_t>(c.n_total);
  }
  return w;
}

inline TravTensor decode_trav(ByteReader& r) {
  r.expect_magic("TRAV");
  r.expect_version(1);
  TravTensor t;
  t.meta = detail::get_meta(r);
  const auto count = r.get<std::uint64_t>();
  r.expect_records(count, 16);
  for (std::uint64_t n = 0; n < count; ++n) {
    const auto at = r.offset();
    TravKey key;
    key.voxel = detail::get_index(r, t.meta);
    key.heading = r.get<std::uint8_t>();
    key.action = r.get<std::uint8_t>();
    TrialCount c{r.get<std::uint8_t>(), r.get<std::uint8_t>()};
    if (key.heading >= kHeadings || key.action >= kActions || c.n_suc > c.n_total)
      throw FormatError("invalid trav record", at);
    if (!t.entries.emplace(key, c).second) throw FormatError("duplicate trav key", at);
  }
  r.expect_end();
  return t;
}

inline void write_trav(const std::string& path, const TravTensor& t) { encode_trav(t).save(path); }

inline TravTensor read_trav(const std::string& path) {
  auto r = ByteReader::load(path);
  return decode_trav(r);
}

}  // namespace voxtrav
