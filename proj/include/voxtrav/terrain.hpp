#pragma once

// Procedural training worlds: Perlin-noise ground (smooth or terraced) with
// randomly spawned parametric obstacles, some of them floating to create
// overhangs.

#include <charconv>
#include <cstdio>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "voxtrav/core.hpp"

namespace voxtrav {

enum class GroundMode { smooth, stepped };

struct PerlinParams {
  int octaves = 4;
  double base_wavelength = 8.0;  // meters, octave 0
  double amplitude = 0.5;        // meters, octave 0
  double persistence = 0.5;
};

struct TerrainConfig {
  double patch_size = 32.0;     // square patch edge, meters
  double height_budget = 16.0;  // vertical extent reserved for the patch
  GroundMode ground_mode = GroundMode::smooth;
  PerlinParams perlin{};
  double sample_spacing = 0.1;
  double step_height_min = 0.1, step_height_max = 0.2;
  int objects_min = 300, objects_max = 1000;
  double diameter_min = 0.1, diameter_max = 6.0;
  double scale_min = 0.5, scale_max = 1.5;
  double ground_align_prob = 0.9;
  double float_min = 0.0, float_max = 3.0;

  void validate() const {
    auto range = [](double lo, double hi, const char* what) {
      if (!(lo <= hi)) throw UsageError(std::string("empty range for ") + what);
    };
    if (!(patch_size > 0) || !(height_budget > 0) || !(sample_spacing > 0))
      throw UsageError("terrain sizes must be positive");
    if (perlin.octaves < 1 || !(perlin.base_wavelength > 0)) throw UsageError("invalid perlin parameters");
    range(step_height_min, step_height_max, "step height");
    if (!(step_height_min > 0)) throw UsageError("step height must be positive");
    if (objects_min < 0 || objects_min > objects_max) throw UsageError("empty range for object count");
    range(diameter_min, diameter_max, "diameter");
    if (!(diameter_min > 0)) throw UsageError("diameter must be positive");
    range(scale_min, scale_max, "scale");
    range(float_min, float_max, "float height");
    if (!(ground_align_prob >= 0 && ground_align_prob <= 1)) throw UsageError("ground_align_prob outside [0,1]");
  }
};

struct TriMesh {
  std::vector<Vec3> vertices;
  std::vector<std::array<std::uint32_t, 3>> triangles;

  void append(const TriMesh& o) {
    const auto base = static_cast<std::uint32_t>(vertices.size());
    vertices.insert(vertices.end(), o.vertices.begin(), o.vertices.end());
    for (auto t : o.triangles) triangles.push_back({t[0] + base, t[1] + base, t[2] + base});
  }

  /// Adds a triangle unless it is degenerate.
  void add_triangle(std::uint32_t a, std::uint32_t b, std::uint32_t c) {
    const Vec3 n = (vertices[b] - vertices[a]).cross(vertices[c] - vertices[a]);
    if (n.norm() > 1e-12) triangles.push_back({a, b, c});
  }

  std::uint32_t add_vertex(const Vec3& v) {
    vertices.push_back(v);
    return static_cast<std::uint32_t>(vertices.size() - 1);
  }

  void add_quad(const Vec3& a, const Vec3& b, const Vec3& c, const Vec3& d) {
    const auto ia = add_vertex(a), ib = add_vertex(b), ic = add_vertex(c), id = add_vertex(d);
    add_triangle(ia, ib, ic);
    add_triangle(ia, ic, id);
  }

  bool operator==(const TriMesh& o) const { return vertices == o.vertices && triangles == o.triangles; }
};

// ---------------------------------------------------------------------------
// Perlin noise.

namespace detail {

inline double fade(double t) { return t * t * t * (t * (t * 6 - 15) + 10); }

inline double lattice_gradient_dot(std::uint64_t seed, int octave, std::int64_t ix, std::int64_t iy, double dx,
                                   double dy) {
  const std::uint64_t h = mix_seed(mix_seed(seed, static_cast<std::uint64_t>(octave)),
                                   (static_cast<std::uint64_t>(ix) << 32) ^ static_cast<std::uint64_t>(iy & 0xffffffff));
  const double angle = static_cast<double>(h >> 11) * 0x1.0p-53 * 2.0 * kPi;
  return std::cos(angle) * dx + std::sin(angle) * dy;
}

/// Single-octave classic gradient noise with unit gradients; |value| <= sqrt(1/2).
inline double gradient_noise(std::uint64_t seed, int octave, double x, double y) {
  const double fx = std::floor(x), fy = std::floor(y);
  const auto ix = static_cast<std::int64_t>(fx), iy = static_cast<std::int64_t>(fy);
  const double tx = x - fx, ty = y - fy;
  const double n00 = lattice_gradient_dot(seed, octave, ix, iy, tx, ty);
  const double n10 = lattice_gradient_dot(seed, octave, ix + 1, iy, tx - 1, ty);
  const double n01 = lattice_gradient_dot(seed, octave, ix, iy + 1, tx, ty - 1);
  const double n11 = lattice_gradient_dot(seed, octave, ix + 1, iy + 1, tx - 1, ty - 1);
  const double u = fade(tx), v = fade(ty);
  const double a = n00 + u * (n10 - n00);
  const double b = n01 + u * (n11 - n01);
  return a + v * (b - a);
}

}  // namespace detail

inline double perlin2(std::uint64_t seed, double x, double y, const PerlinParams& p) {
  double sum = 0, amp = p.amplitude, freq = 1.0 / p.base_wavelength;
  for (int o = 0; o < p.octaves; ++o) {
    sum += amp * detail::gradient_noise(seed, o, x * freq, y * freq);
    amp *= p.persistence;
    freq *= 2;
  }
  return sum;
}

inline double perlin2(std::uint64_t seed, double x, double y, const TerrainConfig& cfg) {
  return perlin2(seed, x, y, cfg.perlin);
}

/// amplitude * sum_o persistence^o
inline double perlin_bound(const PerlinParams& p) {
  double b = 0, amp = std::abs(p.amplitude);
  for (int o = 0; o < p.octaves; ++o, amp *= std::abs(p.persistence)) b += amp;
  return b;
}

/// Terrace height used by stepped ground; a pure function of the seed.
inline double stepped_height(std::uint64_t seed, const TerrainConfig& cfg) {
  Rng rng(mix_seed(seed, 0x57e9));
  return uniform(rng, cfg.step_height_min, cfg.step_height_max);
}

// ---------------------------------------------------------------------------
// Ground.

inline TriMesh generate_ground(std::uint64_t seed, const TerrainConfig& cfg) {
  cfg.validate();
  const double h = cfg.sample_spacing;
  const int n = static_cast<int>(std::lround(cfg.patch_size / h));
  TriMesh mesh;

  if (cfg.ground_mode == GroundMode::smooth) {
    mesh.vertices.reserve(static_cast<std::size_t>(n + 1) * (n + 1));
    for (int i = 0; i <= n; ++i)
      for (int j = 0; j <= n; ++j) mesh.vertices.push_back({i * h, j * h, perlin2(seed, i * h, j * h, cfg)});
    auto vid = [n](int i, int j) { return static_cast<std::uint32_t>(i * (n + 1) + j); };
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        mesh.add_triangle(vid(i, j), vid(i + 1, j), vid(i + 1, j + 1));
        mesh.add_triangle(vid(i, j), vid(i + 1, j + 1), vid(i, j + 1));
      }
    return mesh;
  }

  // Terraces: one flat quad per sample cell, vertical risers between cells
  // whose quantized heights differ.
  const double step = stepped_height(seed, cfg);
  std::vector<std::int64_t> level(static_cast<std::size_t>(n) * n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      level[static_cast<std::size_t>(i) * n + j] =
          static_cast<std::int64_t>(std::floor(perlin2(seed, (i + 0.5) * h, (j + 0.5) * h, cfg) / step));
  auto z_of = [&](int i, int j) { return static_cast<double>(level[static_cast<std::size_t>(i) * n + j]) * step; };

  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      const double z = z_of(i, j);
      const double x0 = i * h, x1 = (i + 1) * h, y0 = j * h, y1 = (j + 1) * h;
      mesh.add_quad({x0, y0, z}, {x1, y0, z}, {x1, y1, z}, {x0, y1, z});
      if (i + 1 < n && z_of(i + 1, j) != z) {
        const double z2 = z_of(i + 1, j);
        mesh.add_quad({x1, y0, z}, {x1, y1, z}, {x1, y1, z2}, {x1, y0, z2});
      }
      if (j + 1 < n && z_of(i, j + 1) != z) {
        const double z2 = z_of(i, j + 1);
        mesh.add_quad({x0, y1, z}, {x0, y1, z2}, {x1, y1, z2}, {x1, y1, z});
      }
    }
  return mesh;
}

/// Highest non-vertical mesh surface above (x,y), bucketed for repeated queries.
class SurfaceHeightQuery {
 public:
  explicit SurfaceHeightQuery(const TriMesh& mesh, double bucket = 1.0) : mesh_(mesh), bucket_(bucket) {
    if (mesh.vertices.empty()) return;
    lo_ = hi_ = mesh.vertices.front();
    for (const auto& v : mesh.vertices) {
      lo_ = {std::min(lo_.x, v.x), std::min(lo_.y, v.y), std::min(lo_.z, v.z)};
      hi_ = {std::max(hi_.x, v.x), std::max(hi_.y, v.y), std::max(hi_.z, v.z)};
    }
    nx_ = static_cast<int>((hi_.x - lo_.x) / bucket_) + 1;
    ny_ = static_cast<int>((hi_.y - lo_.y) / bucket_) + 1;
    cells_.resize(static_cast<std::size_t>(nx_) * ny_);
    for (std::uint32_t t = 0; t < mesh.triangles.size(); ++t) {
      const auto& tri = mesh.triangles[t];
      const Vec3 &a = mesh.vertices[tri[0]], &b = mesh.vertices[tri[1]], &c = mesh.vertices[tri[2]];
      if (std::abs((b - a).cross(c - a).z) < 1e-12) continue;  // vertical
      const int i0 = cell_x(std::min({a.x, b.x, c.x})), i1 = cell_x(std::max({a.x, b.x, c.x}));
      const int j0 = cell_y(std::min({a.y, b.y, c.y})), j1 = cell_y(std::max({a.y, b.y, c.y}));
      for (int i = i0; i <= i1; ++i)
        for (int j = j0; j <= j1; ++j) cells_[static_cast<std::size_t>(i) * ny_ + j].push_back(t);
    }
  }

  std::optional<double> operator()(double x, double y) const {
    if (cells_.empty() || x < lo_.x || y < lo_.y || x > hi_.x || y > hi_.y) return std::nullopt;
    std::optional<double> best;
    for (auto t : cells_[static_cast<std::size_t>(cell_x(x)) * ny_ + cell_y(y)]) {
      const auto& tri = mesh_.triangles[t];
      const Vec3 &a = mesh_.vertices[tri[0]], &b = mesh_.vertices[tri[1]], &c = mesh_.vertices[tri[2]];
      const double det = (b.y - c.y) * (a.x - c.x) + (c.x - b.x) * (a.y - c.y);
      const double l1 = ((b.y - c.y) * (x - c.x) + (c.x - b.x) * (y - c.y)) / det;
      const double l2 = ((c.y - a.y) * (x - c.x) + (a.x - c.x) * (y - c.y)) / det;
      const double l3 = 1 - l1 - l2;
      constexpr double eps = -1e-9;
      if (l1 < eps || l2 < eps || l3 < eps) continue;
      const double z = l1 * a.z + l2 * b.z + l3 * c.z;
      if (!best || z > *best) best = z;
    }
    return best;
  }

 private:
  int cell_x(double x) const { return std::clamp(static_cast<int>((x - lo_.x) / bucket_), 0, nx_ - 1); }
  int cell_y(double y) const { return std::clamp(static_cast<int>((y - lo_.y) / bucket_), 0, ny_ - 1); }

  const TriMesh& mesh_;
  double bucket_;
  Vec3 lo_{}, hi_{};
  int nx_ = 0, ny_ = 0;
  std::vector<std::vector<std::uint32_t>> cells_;
};

// ---------------------------------------------------------------------------
// Obstacles.

enum class PrimitiveKind : std::uint8_t { box, cylinder, sphere, wedge, table, arch };
inline constexpr int kPrimitiveKinds = 6;

struct ObstaclePrimitive {
  PrimitiveKind kind = PrimitiveKind::box;
  double diameter = 1.0;  // diagonal of the local axis-aligned bounding box
  Vec3 position{};        // base center
  double yaw = 0;
  double lift = 0;        // height of the base above the local ground
  bool floated = false;
};

namespace detail {

inline void add_box(TriMesh& m, const Vec3& lo, const Vec3& hi) {
  const Vec3 p[8] = {{lo.x, lo.y, lo.z}, {hi.x, lo.y, lo.z}, {hi.x, hi.y, lo.z}, {lo.x, hi.y, lo.z},
                     {lo.x, lo.y, hi.z}, {hi.x, lo.y, hi.z}, {hi.x, hi.y, hi.z}, {lo.x, hi.y, hi.z}};
  m.add_quad(p[0], p[3], p[2], p[1]);
  m.add_quad(p[4], p[5], p[6], p[7]);
  m.add_quad(p[0], p[1], p[5], p[4]);
  m.add_quad(p[1], p[2], p[6], p[5]);
  m.add_quad(p[2], p[3], p[7], p[6]);
  m.add_quad(p[3], p[0], p[4], p[7]);
}

/// Unit-scale template of each primitive: base on z=0, centered on the z axis.
inline TriMesh primitive_template(PrimitiveKind kind) {
  TriMesh m;
  constexpr int seg = 16;
  switch (kind) {
    case PrimitiveKind::box:
      add_box(m, {-0.5, -0.35, 0}, {0.5, 0.35, 0.5});
      break;
    case PrimitiveKind::cylinder: {
      const auto bottom = m.add_vertex({0, 0, 0}), top = m.add_vertex({0, 0, 1});
      std::vector<std::uint32_t> lo, hi;
      for (int s = 0; s < seg; ++s) {
        const double a = 2 * kPi * s / seg;
        lo.push_back(m.add_vertex({0.5 * std::cos(a), 0.5 * std::sin(a), 0}));
        hi.push_back(m.add_vertex({0.5 * std::cos(a), 0.5 * std::sin(a), 1}));
      }
      for (int s = 0; s < seg; ++s) {
        const int t = (s + 1) % seg;
        m.add_triangle(bottom, lo[t], lo[s]);
        m.add_triangle(top, hi[s], hi[t]);
        m.add_triangle(lo[s], lo[t], hi[t]);
        m.add_triangle(lo[s], hi[t], hi[s]);
      }
      break;
    }
    case PrimitiveKind::sphere: {
      constexpr int rings = 8;
      std::vector<std::vector<std::uint32_t>> ring(rings + 1);
      for (int r = 0; r <= rings; ++r) {
        const double phi = kPi * r / rings;
        const int count = (r == 0 || r == rings) ? 1 : seg;
        for (int s = 0; s < count; ++s) {
          const double a = 2 * kPi * s / seg;
          ring[r].push_back(m.add_vertex(
              {0.5 * std::sin(phi) * std::cos(a), 0.5 * std::sin(phi) * std::sin(a), 0.5 - 0.5 * std::cos(phi)}));
        }
      }
      for (int r = 0; r < rings; ++r)
        for (int s = 0; s < seg; ++s) {
          const int t = (s + 1) % seg;
          auto at = [&](int rr, int ss) { return ring[rr][ring[rr].size() == 1 ? 0 : ss]; };
          m.add_triangle(at(r, s), at(r + 1, s), at(r + 1, t));
          m.add_triangle(at(r, s), at(r + 1, t), at(r, t));
        }
      break;
    }
    case PrimitiveKind::wedge: {
      const Vec3 a{-0.5, -0.4, 0}, b{0.5, -0.4, 0}, c{0.5, 0.4, 0}, d{-0.5, 0.4, 0};
      const Vec3 e{0.5, -0.4, 0.5}, f{0.5, 0.4, 0.5};
      m.add_quad(a, d, c, b);
      m.add_quad(b, c, f, e);
      m.add_quad(a, e, f, d);
      const auto ia = m.add_vertex(a), ib = m.add_vertex(b), ie = m.add_vertex(e);
      m.add_triangle(ia, ib, ie);
      const auto id = m.add_vertex(d), ic = m.add_vertex(c), iff = m.add_vertex(f);
      m.add_triangle(id, iff, ic);
      break;
    }
    case PrimitiveKind::table: {
      add_box(m, {-0.5, -0.4, 0.64}, {0.5, 0.4, 0.7});
      for (double sx : {-1.0, 1.0})
        for (double sy : {-1.0, 1.0})
          add_box(m, {sx * 0.47 - 0.03, sy * 0.37 - 0.03, 0}, {sx * 0.47 + 0.03, sy * 0.37 + 0.03, 0.64});
      break;
    }
    case PrimitiveKind::arch:
      add_box(m, {-0.5, -0.25, 0}, {-0.25, 0.25, 0.8});
      add_box(m, {0.25, -0.25, 0}, {0.5, 0.25, 0.8});
      add_box(m, {-0.5, -0.25, 0.8}, {0.5, 0.25, 1.0});
      break;
  }
  return m;
}

inline double bbox_diagonal(const TriMesh& m) {
  Vec3 lo = m.vertices.front(), hi = m.vertices.front();
  for (const auto& v : m.vertices) {
    lo = {std::min(lo.x, v.x), std::min(lo.y, v.y), std::min(lo.z, v.z)};
    hi = {std::max(hi.x, v.x), std::max(hi.y, v.y), std::max(hi.z, v.z)};
  }
  return (hi - lo).norm();
}

}  // namespace detail

/// Mesh of one primitive in its local frame (base center at the origin),
/// scaled so that its bounding-box diagonal equals `diameter`.
inline TriMesh primitive_local_mesh(PrimitiveKind kind, double diameter) {
  TriMesh m = detail::primitive_template(kind);
  const double s = diameter / detail::bbox_diagonal(m);
  for (auto& v : m.vertices) v = v * s;
  return m;
}

inline TriMesh primitive_mesh(const ObstaclePrimitive& prim) {
  TriMesh m = primitive_local_mesh(prim.kind, prim.diameter);
  const double c = std::cos(prim.yaw), s = std::sin(prim.yaw);
  for (auto& v : m.vertices)
    v = {prim.position.x + c * v.x - s * v.y, prim.position.y + s * v.x + c * v.y, prim.position.z + v.z};
  return m;
}

/// Draws one obstacle. Diameter is log-uniform on the configured range (density
/// proportional to 1/D) and then multiplied by a uniform scale factor.
inline ObstaclePrimitive sample_primitive(Rng& rng, const TerrainConfig& cfg) {
  ObstaclePrimitive p;
  p.kind = static_cast<PrimitiveKind>(uniform_int(rng, 0, kPrimitiveKinds - 1));
  const double d = std::exp(uniform(rng, std::log(cfg.diameter_min), std::log(cfg.diameter_max)));
  p.diameter = d * uniform(rng, cfg.scale_min, cfg.scale_max);
  p.position = {uniform(rng, 0, cfg.patch_size), uniform(rng, 0, cfg.patch_size), 0};
  p.yaw = uniform(rng, 0, 2 * kPi);
  p.floated = uniform01(rng) >= cfg.ground_align_prob;
  p.lift = p.floated ? uniform(rng, cfg.float_min, cfg.float_max) : 0.0;
  return p;
}

struct SpawnResult {
  TriMesh mesh;  // ground plus all primitives
  std::vector<ObstaclePrimitive> primitives;
};

inline SpawnResult spawn_objects(std::uint64_t seed, const TriMesh& ground, const TerrainConfig& cfg) {
  cfg.validate();
  Rng rng(mix_seed(seed, 0x0b1ec7));
  const auto n = uniform_int(rng, cfg.objects_min, cfg.objects_max);
  const SurfaceHeightQuery height(ground);
  SpawnResult out;
  out.mesh = ground;
  out.primitives.reserve(static_cast<std::size_t>(n));
  for (std::int64_t o = 0; o < n; ++o) {
    ObstaclePrimitive p = sample_primitive(rng, cfg);
    p.position.z = height(p.position.x, p.position.y).value_or(0.0) + p.lift;
    out.mesh.append(primitive_mesh(p));
    out.primitives.push_back(p);
  }
  return out;
}

/// Full world for one seed: ground plus obstacles.
inline SpawnResult generate_terrain(std::uint64_t seed, const TerrainConfig& cfg) {
  return spawn_objects(seed, generate_ground(seed, cfg), cfg);
}

// ---------------------------------------------------------------------------
// Wavefront OBJ subset: `v x y z` and `f i j k` (1-based).

inline std::string format_obj(const TriMesh& mesh) {
  std::string out;
  out.reserve(mesh.vertices.size() * 40 + mesh.triangles.size() * 24);
  char buf[128];
  for (const auto& v : mesh.vertices) {
    std::snprintf(buf, sizeof buf, "v %.17g %.17g %.17g\n", v.x, v.y, v.z);
    out += buf;
  }
  for (const auto& t : mesh.triangles) {
    std::snprintf(buf, sizeof buf, "f %u %u %u\n", t[0] + 1, t[1] + 1, t[2] + 1);
    out += buf;
  }
  return out;
}

inline void write_obj(const std::string& path, const TriMesh& mesh) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw UsageError("cannot open '" + path + "' for writing");
  f << format_obj(mesh);
}

inline TriMesh parse_obj(std::istream& in) {
  TriMesh mesh;
  std::string line;
  std::uint64_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::istringstream ss(line);
    std::string tag;
    if (!(ss >> tag) || tag[0] == '#') continue;
    if (tag == "v") {
      Vec3 v;
      if (!(ss >> v.x >> v.y >> v.z)) throw FormatError("malformed vertex on line " + std::to_string(lineno), lineno);
      mesh.vertices.push_back(v);
    } else if (tag == "f") {
      std::array<std::uint32_t, 3> t{};
      for (auto& idx : t) {
        std::string tok;
        long long value = 0;
        if (!(ss >> tok)) throw FormatError("malformed face on line " + std::to_string(lineno), lineno);
        const auto slash = tok.find('/');
        const auto res = std::from_chars(tok.data(), tok.data() + (slash == std::string::npos ? tok.size() : slash), value);
        if (res.ec != std::errc() || value < 1 || static_cast<std::uint64_t>(value) > mesh.vertices.size())
          throw FormatError("bad face index on line " + std::to_string(lineno), lineno);
        idx = static_cast<std::uint32_t>(value - 1);
      }
      mesh.triangles.push_back(t);
    }
  }
  return mesh;
}

inline TriMesh read_obj(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw UsageError("cannot open '" + path + "'");
  return parse_obj(f);
}

}  // namespace voxtrav
