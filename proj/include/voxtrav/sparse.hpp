#pragma once

// Sparse voxel tensors and the layer kernels of the network, each with its
// reverse-mode counterpart. Coordinates are (batch, i, j, k) packed into a
// monotone 64-bit key so sorting keys sorts coordinates lexicographically.

#include <cmath>
#include <cstdint>
#include <vector>

#include "voxtrav/core.hpp"

namespace voxtrav {

struct Coord {
  std::int32_t b = 0, i = 0, j = 0, k = 0;
  constexpr auto operator<=>(const Coord&) const = default;
};

/// 16 bits per field; spatial fields are biased by 2^15 so small negative
/// coordinates stay ordered. Adding a packed offset is exact while every field
/// stays inside its range, which holds for window-sized inputs.
inline constexpr std::int64_t kCoordBias = 1 << 15;

constexpr std::uint64_t coord_key(const Coord& c) {
  return (static_cast<std::uint64_t>(c.b) << 48) | (static_cast<std::uint64_t>(c.i + kCoordBias) << 32) |
         (static_cast<std::uint64_t>(c.j + kCoordBias) << 16) | static_cast<std::uint64_t>(c.k + kCoordBias);
}

constexpr Coord key_coord(std::uint64_t key) {
  constexpr std::uint64_t m = 0xffff;
  return {static_cast<std::int32_t>(key >> 48), static_cast<std::int32_t>(((key >> 32) & m)) - static_cast<std::int32_t>(kCoordBias),
          static_cast<std::int32_t>(((key >> 16) & m)) - static_cast<std::int32_t>(kCoordBias),
          static_cast<std::int32_t>(key & m) - static_cast<std::int32_t>(kCoordBias)};
}

constexpr std::int64_t offset_key(int di, int dj, int dk) {
  return static_cast<std::int64_t>(di) * (1LL << 32) + static_cast<std::int64_t>(dj) * (1LL << 16) + dk;
}

inline std::int32_t floor_to(std::int32_t v, std::int32_t s) {
  const std::int32_t q = v >= 0 ? v / s : -((-v + s - 1) / s);
  return q * s;
}

/// Open-addressing map from coordinate key to row.
class CoordIndex {
 public:
  CoordIndex() = default;
  explicit CoordIndex(std::span<const std::uint64_t> keys) {
    std::size_t cap = 16;
    while (cap < keys.size() * 2) cap <<= 1;
    mask_ = cap - 1;
    slots_.assign(cap, kEmpty);
    rows_.assign(cap, -1);
    for (std::size_t n = 0; n < keys.size(); ++n) {
      std::size_t h = hash(keys[n]);
      while (slots_[h] != kEmpty && slots_[h] != keys[n]) h = (h + 1) & mask_;
      slots_[h] = keys[n];
      rows_[h] = static_cast<std::int32_t>(n);
    }
  }

  std::int32_t find(std::uint64_t key) const {
    if (slots_.empty()) return -1;
    std::size_t h = hash(key);
    while (true) {
      const std::uint64_t s = slots_[h];
      if (s == key) return rows_[h];
      if (s == kEmpty) return -1;
      h = (h + 1) & mask_;
    }
  }

 private:
  static constexpr std::uint64_t kEmpty = ~0ULL;
  std::size_t hash(std::uint64_t k) const {
    k ^= k >> 33;
    k *= 0xff51afd7ed558ccdULL;
    k ^= k >> 33;
    return static_cast<std::size_t>(k) & mask_;
  }
  std::vector<std::uint64_t> slots_;
  std::vector<std::int32_t> rows_;
  std::size_t mask_ = 0;
};

/// Coordinates (sorted, unique keys) with `channels` features per row.
template <typename T>
struct SparseTensor {
  int stride = 1;
  int channels = 0;
  std::vector<std::uint64_t> keys;
  std::vector<T> feats;

  std::size_t size() const { return keys.size(); }
  T* row(std::size_t n) { return feats.data() + n * static_cast<std::size_t>(channels); }
  const T* row(std::size_t n) const { return feats.data() + n * static_cast<std::size_t>(channels); }
  Coord coord(std::size_t n) const { return key_coord(keys[n]); }

  void check() const {
    if (feats.size() != keys.size() * static_cast<std::size_t>(channels)) throw UsageError("feature size mismatch");
    for (std::size_t n = 1; n < keys.size(); ++n)
      if (!(keys[n - 1] < keys[n])) throw UsageError("sparse tensor keys not sorted/unique");
  }
};

template <typename T>
SparseTensor<T> make_tensor(int stride, int channels, std::vector<std::uint64_t> keys) {
  SparseTensor<T> t;
  t.stride = stride;
  t.channels = channels;
  t.keys = std::move(keys);
  t.feats.assign(t.keys.size() * static_cast<std::size_t>(channels), T(0));
  return t;
}

inline void sort_unique(std::vector<std::uint64_t>& v) {
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
}

// ---------------------------------------------------------------------------
// Kernel maps.

/// Offsets of an even-sized (or unit) kernel: {-(K/2-1), ..., K/2} per axis,
/// lexicographic.
inline std::vector<std::array<int, 3>> kernel_offsets(int K) {
  if (K != 1 && (K < 2 || K % 2)) throw UsageError("kernel size must be 1 or even");
  const int lo = K == 1 ? 0 : -(K / 2 - 1), hi = K == 1 ? 0 : K / 2;
  std::vector<std::array<int, 3>> out;
  for (int a = lo; a <= hi; ++a)
    for (int b = lo; b <= hi; ++b)
      for (int c = lo; c <= hi; ++c) out.push_back({a, b, c});
  return out;
}

/// (input row, output row) pairs per kernel offset.
struct KernelMap {
  std::vector<std::vector<std::pair<std::int32_t, std::int32_t>>> pairs;
  std::size_t count() const {
    std::size_t n = 0;
    for (const auto& p : pairs) n += p.size();
    return n;
  }
};

/// y[out] += x[in] * W[offset] over all pairs. W is [offsets][cin][cout].
template <typename T>
void apply_map(const SparseTensor<T>& x, const std::vector<T>& W, const KernelMap& map, SparseTensor<T>& y) {
  const auto cin = static_cast<std::size_t>(x.channels), cout = static_cast<std::size_t>(y.channels);
  for (std::size_t d = 0; d < map.pairs.size(); ++d) {
    const T* Wd = W.data() + d * cin * cout;
    for (const auto& [in, out] : map.pairs[d]) {
      const T* xr = x.row(static_cast<std::size_t>(in));
      T* yr = y.row(static_cast<std::size_t>(out));
      for (std::size_t ci = 0; ci < cin; ++ci) {
        const T xv = xr[ci];
        const T* w = Wd + ci * cout;
        for (std::size_t co = 0; co < cout; ++co) yr[co] += xv * w[co];
      }
    }
  }
}

/// Accumulates gx and gW given gy for apply_map.
template <typename T>
void apply_map_backward(const SparseTensor<T>& x, const std::vector<T>& W, const KernelMap& map,
                        const std::vector<T>& gy, int cout_i, std::vector<T>* gx, std::vector<T>& gW) {
  const auto cin = static_cast<std::size_t>(x.channels), cout = static_cast<std::size_t>(cout_i);
  for (std::size_t d = 0; d < map.pairs.size(); ++d) {
    const T* Wd = W.data() + d * cin * cout;
    T* gWd = gW.data() + d * cin * cout;
    for (const auto& [in, out] : map.pairs[d]) {
      const T* xr = x.row(static_cast<std::size_t>(in));
      const T* g = gy.data() + static_cast<std::size_t>(out) * cout;
      for (std::size_t ci = 0; ci < cin; ++ci) {
        const T xv = xr[ci];
        T* gw = gWd + ci * cout;
        for (std::size_t co = 0; co < cout; ++co) gw[co] += xv * g[co];
      }
      if (gx) {
        T* gxr = gx->data() + static_cast<std::size_t>(in) * cin;
        for (std::size_t ci = 0; ci < cin; ++ci) {
          const T* w = Wd + ci * cout;
          T s = 0;
          for (std::size_t co = 0; co < cout; ++co) s += w[co] * g[co];
          gxr[ci] += s;
        }
      }
    }
  }
}

// ---------------------------------------------------------------------------
// Strided convolution (kernel K, stride 2).

/// Output coordinates are the input coordinates floored to twice the input
/// stride; output o gathers x(o + offset * stride_in).
template <typename T>
SparseTensor<T> sparse_conv(const SparseTensor<T>& x, const std::vector<T>& W, int K, int cout, KernelMap& map) {
  const auto offsets = kernel_offsets(K);
  if (W.size() != offsets.size() * static_cast<std::size_t>(x.channels) * static_cast<std::size_t>(cout))
    throw UsageError("conv kernel shape mismatch");
  const int s = x.stride, os = 2 * s;
  std::vector<std::uint64_t> out;
  out.reserve(x.size());
  for (const auto key : x.keys) {
    const Coord c = key_coord(key);
    out.push_back(coord_key({c.b, floor_to(c.i, os), floor_to(c.j, os), floor_to(c.k, os)}));
  }
  sort_unique(out);
  SparseTensor<T> y = make_tensor<T>(os, cout, std::move(out));

  const CoordIndex index(x.keys);
  map.pairs.assign(offsets.size(), {});
  for (std::size_t d = 0; d < offsets.size(); ++d) {
    const std::int64_t dk = offset_key(offsets[d][0] * s, offsets[d][1] * s, offsets[d][2] * s);
    auto& p = map.pairs[d];
    for (std::size_t o = 0; o < y.size(); ++o) {
      const std::int32_t in = index.find(static_cast<std::uint64_t>(static_cast<std::int64_t>(y.keys[o]) + dk));
      if (in >= 0) p.push_back({in, static_cast<std::int32_t>(o)});
    }
  }
  apply_map(x, W, map, y);
  return y;
}

/// Generative transposed convolution: every input coordinate u spawns the
/// children u + offset * (stride/2) that fall inside [0, extent).
template <typename T>
SparseTensor<T> sparse_tconv(const SparseTensor<T>& x, const std::vector<T>& W, int K, int cout,
                             const std::array<int, 3>& extent, KernelMap& map) {
  if (x.stride < 2 || x.stride % 2) throw UsageError("transposed conv needs an even input stride");
  const auto offsets = kernel_offsets(K);
  if (W.size() != offsets.size() * static_cast<std::size_t>(x.channels) * static_cast<std::size_t>(cout))
    throw UsageError("transposed conv kernel shape mismatch");
  const int t = x.stride / 2;
  auto inside = [&](const Coord& c) {
    return c.i >= 0 && c.j >= 0 && c.k >= 0 && c.i < extent[0] && c.j < extent[1] && c.k < extent[2];
  };
  std::vector<std::uint64_t> out;
  out.reserve(x.size() * offsets.size());
  for (const auto key : x.keys) {
    const Coord u = key_coord(key);
    for (const auto& o : offsets) {
      const Coord c{u.b, u.i + o[0] * t, u.j + o[1] * t, u.k + o[2] * t};
      if (inside(c)) out.push_back(coord_key(c));
    }
  }
  sort_unique(out);
  SparseTensor<T> y = make_tensor<T>(t, cout, std::move(out));

  const CoordIndex index(y.keys);
  map.pairs.assign(offsets.size(), {});
  for (std::size_t d = 0; d < offsets.size(); ++d) {
    const auto& o = offsets[d];
    auto& p = map.pairs[d];
    p.reserve(x.size());
    for (std::size_t n = 0; n < x.size(); ++n) {
      const Coord u = key_coord(x.keys[n]);
      const Coord c{u.b, u.i + o[0] * t, u.j + o[1] * t, u.k + o[2] * t};
      if (!inside(c)) continue;
      p.push_back({static_cast<std::int32_t>(n), index.find(coord_key(c))});
    }
  }
  apply_map(x, W, map, y);
  return y;
}

// ---------------------------------------------------------------------------
// Pointwise layers.

/// 1x1x1 convolution with bias: y = x W + b.
template <typename T>
SparseTensor<T> sparse_linear(const SparseTensor<T>& x, const std::vector<T>& W, const std::vector<T>& bias) {
  const auto cin = static_cast<std::size_t>(x.channels), cout = bias.size();
  if (W.size() != cin * cout) throw UsageError("linear weight shape mismatch");
  SparseTensor<T> y = make_tensor<T>(x.stride, static_cast<int>(cout), x.keys);
  for (std::size_t n = 0; n < x.size(); ++n) {
    const T* xr = x.row(n);
    T* yr = y.row(n);
    for (std::size_t co = 0; co < cout; ++co) yr[co] = bias[co];
    for (std::size_t ci = 0; ci < cin; ++ci)
      for (std::size_t co = 0; co < cout; ++co) yr[co] += xr[ci] * W[ci * cout + co];
  }
  return y;
}

template <typename T>
void sparse_linear_backward(const SparseTensor<T>& x, const std::vector<T>& W, const std::vector<T>& gy,
                            std::size_t cout, std::vector<T>* gx, std::vector<T>& gW, std::vector<T>& gb) {
  const auto cin = static_cast<std::size_t>(x.channels);
  for (std::size_t n = 0; n < x.size(); ++n) {
    const T* xr = x.row(n);
    const T* g = gy.data() + n * cout;
    for (std::size_t co = 0; co < cout; ++co) gb[co] += g[co];
    for (std::size_t ci = 0; ci < cin; ++ci) {
      T s = 0;
      for (std::size_t co = 0; co < cout; ++co) {
        gW[ci * cout + co] += xr[ci] * g[co];
        s += W[ci * cout + co] * g[co];
      }
      if (gx) (*gx)[n * cin + ci] += s;
    }
  }
}

/// Batch norm over all rows of a sparse batch, per channel.
template <typename T>
struct BatchNormCache {
  std::vector<T> xhat;
  std::vector<T> inv_std;
};

template <typename T>
SparseTensor<T> batch_norm(const SparseTensor<T>& x, const std::vector<T>& gamma, const std::vector<T>& beta,
                           std::vector<T>& running_mean, std::vector<T>& running_var, bool training, T momentum,
                           T eps, BatchNormCache<T>& cache) {
  const auto C = static_cast<std::size_t>(x.channels), N = x.size();
  SparseTensor<T> y = make_tensor<T>(x.stride, x.channels, x.keys);
  cache.xhat.assign(N * C, T(0));
  cache.inv_std.assign(C, T(0));
  if (N == 0) return y;
  std::vector<T> mean(C), var(C);
  if (training) {
    for (std::size_t c = 0; c < C; ++c) {
      double s = 0;
      for (std::size_t n = 0; n < N; ++n) s += static_cast<double>(x.feats[n * C + c]);
      const double m = s / static_cast<double>(N);
      double v = 0;
      for (std::size_t n = 0; n < N; ++n) {
        const double d = static_cast<double>(x.feats[n * C + c]) - m;
        v += d * d;
      }
      mean[c] = static_cast<T>(m);
      var[c] = static_cast<T>(v / static_cast<double>(N));
      // biased, like the normalisation itself: coarse levels hold only a few
      // coordinates, where N/(N-1) would skew inference
      running_mean[c] = (T(1) - momentum) * running_mean[c] + momentum * static_cast<T>(m);
      running_var[c] = (T(1) - momentum) * running_var[c] + momentum * var[c];
    }
  } else {
    mean = running_mean;
    var = running_var;
  }
  for (std::size_t c = 0; c < C; ++c) cache.inv_std[c] = T(1) / std::sqrt(var[c] + eps);
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t c = 0; c < C; ++c) {
      const T h = (x.feats[n * C + c] - mean[c]) * cache.inv_std[c];
      cache.xhat[n * C + c] = h;
      y.feats[n * C + c] = gamma[c] * h + beta[c];
    }
  return y;
}

/// Training-mode backward (batch statistics depend on x).
template <typename T>
void batch_norm_backward(const BatchNormCache<T>& cache, const std::vector<T>& gamma, const std::vector<T>& gy,
                         std::size_t C, std::vector<T>& gx, std::vector<T>& ggamma, std::vector<T>& gbeta) {
  const std::size_t N = C ? gy.size() / C : 0;
  if (N == 0) return;
  for (std::size_t c = 0; c < C; ++c) {
    double sg = 0, sgx = 0;
    for (std::size_t n = 0; n < N; ++n) {
      sg += static_cast<double>(gy[n * C + c]);
      sgx += static_cast<double>(gy[n * C + c]) * static_cast<double>(cache.xhat[n * C + c]);
    }
    gbeta[c] += static_cast<T>(sg);
    ggamma[c] += static_cast<T>(sgx);
    const T k = gamma[c] * cache.inv_std[c] / static_cast<T>(N);
    const T mg = static_cast<T>(sg), mgx = static_cast<T>(sgx);
    for (std::size_t n = 0; n < N; ++n)
      gx[n * C + c] += k * (static_cast<T>(N) * gy[n * C + c] - mg - cache.xhat[n * C + c] * mgx);
  }
}

template <typename T>
void elu_inplace(SparseTensor<T>& x) {
  for (auto& v : x.feats)
    if (!(v > 0)) v = std::expm1(v);
}

/// Gradient through ELU given its output y.
template <typename T>
void elu_backward(const std::vector<T>& y, std::vector<T>& g) {
  for (std::size_t n = 0; n < y.size(); ++n)
    if (!(y[n] > 0)) g[n] *= y[n] + T(1);
}

/// Coordinate-union sum of two tensors of equal stride and width; rows of a
/// and b land at out rows ia / ib.
template <typename T>
SparseTensor<T> union_add(const SparseTensor<T>& a, const SparseTensor<T>& b, std::vector<std::int32_t>& ia,
                          std::vector<std::int32_t>& ib) {
  if (a.stride != b.stride || a.channels != b.channels) throw UsageError("union_add shape mismatch");
  std::vector<std::uint64_t> keys;
  keys.reserve(a.size() + b.size());
  std::set_union(a.keys.begin(), a.keys.end(), b.keys.begin(), b.keys.end(), std::back_inserter(keys));
  SparseTensor<T> y = make_tensor<T>(a.stride, a.channels, std::move(keys));
  const auto C = static_cast<std::size_t>(a.channels);
  auto place = [&](const SparseTensor<T>& src, std::vector<std::int32_t>& idx) {
    idx.resize(src.size());
    std::size_t o = 0;
    for (std::size_t n = 0; n < src.size(); ++n) {
      while (y.keys[o] != src.keys[n]) ++o;
      idx[n] = static_cast<std::int32_t>(o);
      for (std::size_t c = 0; c < C; ++c) y.feats[o * C + c] += src.feats[n * C + c];
    }
  };
  place(a, ia);
  place(b, ib);
  return y;
}

/// Rows of x where keep[n] is set.
template <typename T>
SparseTensor<T> prune(const SparseTensor<T>& x, const std::vector<std::uint8_t>& keep, std::vector<std::int32_t>& rows) {
  if (keep.size() != x.size()) throw UsageError("prune mask misaligned with tensor");
  rows.clear();
  for (std::size_t n = 0; n < keep.size(); ++n)
    if (keep[n]) rows.push_back(static_cast<std::int32_t>(n));
  SparseTensor<T> y;
  y.stride = x.stride;
  y.channels = x.channels;
  const auto C = static_cast<std::size_t>(x.channels);
  y.keys.reserve(rows.size());
  y.feats.reserve(rows.size() * C);
  for (auto r : rows) {
    y.keys.push_back(x.keys[static_cast<std::size_t>(r)]);
    y.feats.insert(y.feats.end(), x.row(static_cast<std::size_t>(r)), x.row(static_cast<std::size_t>(r)) + C);
  }
  return y;
}

/// Membership of each key of `keys` in the sorted set `target`.
inline std::vector<std::uint8_t> member_mask(const std::vector<std::uint64_t>& keys,
                                             const std::vector<std::uint64_t>& target) {
  std::vector<std::uint8_t> m(keys.size(), 0);
  std::size_t t = 0;
  for (std::size_t n = 0; n < keys.size(); ++n) {
    while (t < target.size() && target[t] < keys[n]) ++t;
    m[n] = t < target.size() && target[t] == keys[n];
  }
  return m;
}

/// Keys floored to `stride` (batch index untouched), sorted and unique.
inline std::vector<std::uint64_t> downsample_keys(const std::vector<std::uint64_t>& keys, int stride) {
  std::vector<std::uint64_t> out;
  out.reserve(keys.size());
  for (auto key : keys) {
    const Coord c = key_coord(key);
    out.push_back(coord_key({c.b, floor_to(c.i, stride), floor_to(c.j, stride), floor_to(c.k, stride)}));
  }
  sort_unique(out);
  return out;
}

template <typename T>
T sigmoid(T z) {
  return z >= 0 ? T(1) / (T(1) + std::exp(-z)) : std::exp(z) / (T(1) + std::exp(z));
}

/// log(1 + exp(z)) without overflow.
template <typename T>
T softplus(T z) {
  return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
}

}  // namespace voxtrav
