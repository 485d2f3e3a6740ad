#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <compare>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace voxtrav {

// ---------------------------------------------------------------------------
// Errors. The CLI maps each family onto a process exit code.

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct FormatError : std::runtime_error {
  FormatError(const std::string& what, std::uint64_t offset)
      : std::runtime_error(what + " (offset " + std::to_string(offset) + ")"), offset(offset) {}
  std::uint64_t offset;
};

struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Small fixed-size vectors.

struct Vec3 {
  double x = 0, y = 0, z = 0;

  constexpr Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  constexpr Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  constexpr Vec3 operator-() const { return {-x, -y, -z}; }
  constexpr Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
  constexpr double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
  constexpr Vec3 cross(const Vec3& o) const {
    return {y * o.z - z * o.y, z * o.x - x * o.z, x * o.y - y * o.x};
  }
  double norm() const { return std::sqrt(dot(*this)); }
  Vec3 normalized() const {
    double n = norm();
    return {x / n, y / n, z / n};
  }
  constexpr double operator[](int a) const { return a == 0 ? x : (a == 1 ? y : z); }
  constexpr bool operator==(const Vec3&) const = default;
};

struct Index3 {
  std::int32_t i = 0, j = 0, k = 0;

  constexpr auto operator<=>(const Index3&) const = default;
  constexpr Index3 operator+(const Index3& o) const { return {i + o.i, j + o.j, k + o.k}; }
  constexpr Index3 operator-(const Index3& o) const { return {i - o.i, j - o.j, k - o.k}; }
  constexpr std::int32_t operator[](int a) const { return a == 0 ? i : (a == 1 ? j : k); }
};

inline constexpr double kPi = 3.14159265358979323846;

constexpr double deg2rad(double d) { return d * kPi / 180.0; }
constexpr double rad2deg(double r) { return r * 180.0 / kPi; }

// ---------------------------------------------------------------------------
// Random numbers. Engines come from <random>; the conversions below are
// spelled out because the standard distributions are implementation defined
// and the on-disk artifacts must not depend on the standard library vendor.

using Rng = std::mt19937_64;

/// splitmix64 finalizer; used to derive independent stream seeds.
constexpr std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) { return mix_seed(mix_seed(a) ^ b); }

inline double uniform01(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

inline double uniform(Rng& rng, double lo, double hi) { return lo + (hi - lo) * uniform01(rng); }

/// Uniform integer in [lo, hi] (inclusive), rejection sampled.
inline std::int64_t uniform_int(Rng& rng, std::int64_t lo, std::int64_t hi) {
  const std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
  if (span == 0) return static_cast<std::int64_t>(rng());
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % span;
  std::uint64_t r;
  do {
    r = rng();
  } while (r >= limit);
  return lo + static_cast<std::int64_t>(r % span);
}

// ---------------------------------------------------------------------------
// Little-endian binary serialization shared by every file format.

class ByteWriter {
 public:
  template <typename T>
  void put(T v) {
    static_assert(std::is_trivially_copyable_v<T>);
    unsigned char b[sizeof(T)];
    std::memcpy(b, &v, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(b, b + sizeof(T));
    buf_.insert(buf_.end(), b, b + sizeof(T));
  }
  void put_bytes(std::string_view s) { buf_.insert(buf_.end(), s.begin(), s.end()); }
  void put_magic(const char (&m)[5]) { put_bytes(std::string_view(m, 4)); }

  const std::vector<unsigned char>& bytes() const { return buf_; }

  void save(const std::string& path) const {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw UsageError("cannot open '" + path + "' for writing");
    f.write(reinterpret_cast<const char*>(buf_.data()), static_cast<std::streamsize>(buf_.size()));
    if (!f) throw UsageError("write failed for '" + path + "'");
  }

 private:
  std::vector<unsigned char> buf_;
};

class ByteReader {
 public:
  explicit ByteReader(std::vector<unsigned char> data) : buf_(std::move(data)) {}

  static ByteReader load(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw UsageError("cannot open '" + path + "'");
    std::vector<unsigned char> data((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return ByteReader(std::move(data));
  }

  template <typename T>
  T get() {
    static_assert(std::is_trivially_copyable_v<T>);
    need(sizeof(T));
    unsigned char b[sizeof(T)];
    std::memcpy(b, buf_.data() + pos_, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(b, b + sizeof(T));
    pos_ += sizeof(T);
    T v;
    std::memcpy(&v, b, sizeof(T));
    return v;
  }

  std::string get_bytes(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(buf_.data() + pos_), n);
    pos_ += n;
    return s;
  }

  void expect_magic(const char (&m)[5]) {
    const std::uint64_t at = pos_;
    if (remaining() < 4 || get_bytes(4) != std::string_view(m, 4))
      throw FormatError(std::string("bad magic, expected ") + m, at);
  }

  void expect_version(std::uint32_t want) {
    const std::uint64_t at = pos_;
    const auto v = get<std::uint32_t>();
    if (v != want)
      throw FormatError("unsupported version " + std::to_string(v) + ", expected " + std::to_string(want), at);
  }

  void expect_end() const {
    if (pos_ != buf_.size()) throw FormatError("trailing bytes", pos_);
  }

  /// Guards count fields against absurd values before any allocation.
  void expect_records(std::uint64_t count, std::uint64_t record_size) const {
    if (record_size != 0 && count > remaining() / record_size)
      throw FormatError("record count " + std::to_string(count) + " exceeds file size", pos_);
  }

  std::size_t remaining() const { return buf_.size() - pos_; }
  std::uint64_t offset() const { return pos_; }

 private:
  void need(std::size_t n) const {
    if (remaining() < n) throw FormatError("truncated input", pos_);
  }

  std::vector<unsigned char> buf_;
  std::size_t pos_ = 0;
};

}  // namespace voxtrav
