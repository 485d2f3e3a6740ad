#pragma once

// World-frame inference around a robot pose, prediction files and a colored
// mesh export for viewing.

#include <sstream>

#include "voxtrav/model.hpp"

namespace voxtrav {

/// Scores in world voxel indices of one grid.
struct WorldPrediction {
  GridMeta meta;
  int channels = 1;
  std::map<Index3, std::vector<float>> scores;

  /// Mean over channels; the scalar the planner consumes.
  std::map<Index3, double> total() const {
    std::map<Index3, double> out;
    for (const auto& [v, s] : scores) {
      double sum = 0;
      for (float x : s) sum += x;
      out.emplace(v, sum / static_cast<double>(s.size()));
    }
    return out;
  }
};

/// Runs the model on the window at `center` with heading `yaw` and maps every
/// predicted window voxel back into the grid. Window voxels that land in the
/// same world voxel are averaged.
template <typename T>
WorldPrediction predict_world(Model<T>& model, const OccupancyGrid& grid, const Index3& center, double yaw,
                              const WindowShape& shape = {}) {
  const GridMeta& m = grid.meta();
  const float yaw_f = static_cast<float>(yaw);
  const auto pred = predict_window(model, window_input(grid, center, yaw_f, shape));
  const Vec3 base = index_to_center(m, center);
  const GridMeta win = window_meta(base, m.resolution, shape);
  const double cy = std::cos(static_cast<double>(yaw_f)), sy = std::sin(static_cast<double>(yaw_f));
  const auto c = static_cast<std::size_t>(model.spec().head);

  std::map<Index3, std::pair<std::vector<double>, int>> acc;
  for (const auto& [wv, s] : pred.scores) {
    const Vec3 q = index_to_center(win, wv) - base;
    const Vec3 p{base.x + cy * q.x - sy * q.y, base.y + sy * q.x + cy * q.y, base.z + q.z};
    const auto v = world_to_index(m, p);
    if (!v) continue;
    auto& [sum, n] = acc[*v];
    sum.resize(c, 0.0);
    for (std::size_t k = 0; k < c; ++k) sum[k] += s[k];
    ++n;
  }
  WorldPrediction out;
  out.meta = m;
  out.channels = static_cast<int>(c);
  for (const auto& [v, sn] : acc) {
    std::vector<float> s(c);
    for (std::size_t k = 0; k < c; ++k) s[k] = static_cast<float>(sn.first[k] / sn.second);
    out.scores.emplace(v, std::move(s));
  }
  return out;
}

// ---------------------------------------------------------------------------
// TPRD: magic, u32 version, grid meta, u8 channels, u64 count, then per voxel
// three u32 indices and `channels` f32 scores, sorted by index.

inline ByteWriter encode_tprd(const WorldPrediction& p) {
  ByteWriter w;
  w.put_magic("TPRD");
  w.put<std::uint32_t>(1);
  detail::put_meta(w, p.meta);
  w.put<std::uint8_t>(static_cast<std::uint8_t>(p.channels));
  w.put<std::uint64_t>(p.scores.size());
  for (const auto& [v, s] : p.scores) {
    w.put<std::uint32_t>(static_cast<std::uint32_t>(v.i));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(v.j));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(v.k));
    for (float x : s) w.put<float>(x);
  }
  return w;
}

inline WorldPrediction decode_tprd(ByteReader& r) {
  r.expect_magic("TPRD");
  r.expect_version(1);
  WorldPrediction p;
  p.meta = detail::get_meta(r);
  const auto at = r.offset();
  p.channels = r.get<std::uint8_t>();
  if (p.channels != 1 && p.channels != 4 && p.channels != 18) throw FormatError("channel count must be 1, 4 or 18", at);
  const auto count = r.get<std::uint64_t>();
  r.expect_records(count, 12 + 4 * static_cast<std::uint64_t>(p.channels));
  std::optional<Index3> prev;
  for (std::uint64_t n = 0; n < count; ++n) {
    const auto pos = r.offset();
    const Index3 v = detail::get_index(r, p.meta);
    if (prev && !(*prev < v)) throw FormatError("voxels not strictly sorted", pos);
    prev = v;
    std::vector<float> s(static_cast<std::size_t>(p.channels));
    for (auto& x : s) {
      const auto xat = r.offset();
      x = r.get<float>();
      if (!(x >= 0.f && x <= 1.f)) throw FormatError("score outside [0,1]", xat);
    }
    p.scores.emplace_hint(p.scores.end(), v, std::move(s));
  }
  r.expect_end();
  return p;
}

inline void write_prediction(const std::string& path, const WorldPrediction& p) { encode_tprd(p).save(path); }

inline WorldPrediction read_prediction(const std::string& path) {
  auto r = ByteReader::load(path);
  return decode_tprd(r);
}

/// One cube per voxel with per-vertex colors (red = 0, green = 1), in the
/// common `v x y z r g b` OBJ extension.
inline std::string format_colored_obj(const WorldPrediction& p) {
  std::ostringstream o;
  o.precision(9);
  const double h = p.meta.resolution / 2 * 0.9;
  std::size_t base = 1;
  for (const auto& [v, t] : p.total()) {
    const Vec3 c = index_to_center(p.meta, v);
    for (int corner = 0; corner < 8; ++corner)
      o << "v " << c.x + (corner & 1 ? h : -h) << " " << c.y + (corner & 2 ? h : -h) << " " << c.z + (corner & 4 ? h : -h)
        << " " << 1 - t << " " << t << " 0\n";
    static constexpr int faces[12][3] = {{0, 2, 1}, {1, 2, 3}, {4, 5, 6}, {5, 7, 6}, {0, 1, 4}, {1, 5, 4},
                                         {2, 6, 3}, {3, 6, 7}, {0, 4, 2}, {2, 4, 6}, {1, 3, 5}, {3, 7, 5}};
    for (const auto& f : faces) o << "f " << base + f[0] << " " << base + f[1] << " " << base + f[2] << "\n";
    base += 8;
  }
  return o.str();
}

}  // namespace voxtrav
