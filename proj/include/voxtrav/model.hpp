#pragma once

// Sparse encoder-decoder with generative upsampling and per-level pruning.
//
//   encoder block e:  conv(K, stride 2) -> batch norm -> ELU
//   decoder level l:  transposed conv(K, stride 2) -> batch norm -> ELU
//                     [+ encoder tensor of equal stride]  -> prune head -> prune
//   output:           1x1 conv -> logistic
//
// Decoder level l produces stride 2^l; level 0 is full resolution.

#include <map>
#include <string>

#include "voxtrav/dataset.hpp"
#include "voxtrav/sparse.hpp"

namespace voxtrav {

struct ModelSpec {
  int in_channels = 1;
  std::vector<int> enc_channels{8, 16, 32, 64, 128};
  int final_channels = 8;  // width of decoder level 0
  int kernel = 4;
  int head = 1;
  std::vector<int> skips{4, 3};  // decoder levels receiving an encoder skip
  std::array<int, 3> extent{80, 80, 40};
  double bn_momentum = 0.1;
  double bn_eps = 1e-5;
  double prune_threshold = 0.5;

  int levels() const { return static_cast<int>(enc_channels.size()); }
  int dec_channels(int l) const { return l >= 1 ? enc_channels[static_cast<std::size_t>(l - 1)] : final_channels; }
  bool has_skip(int l) const { return std::find(skips.begin(), skips.end(), l) != skips.end(); }

  /// "m2": skips at the two coarsest decoder levels; "m1": at every level that
  /// has an encoder tensor of matching stride.
  static ModelSpec variant(const std::string& name, int head) {
    ModelSpec s;
    s.head = head;
    if (name == "m2") {
      s.skips = {4, 3};
    } else if (name == "m1") {
      s.skips = {4, 3, 2, 1};
    } else {
      throw UsageError("unknown model variant '" + name + "' (m1|m2)");
    }
    return s;
  }

  void validate() const {
    if (enc_channels.empty()) throw UsageError("model needs at least one encoder block");
    for (int c : enc_channels)
      if (c < 1) throw UsageError("channel widths must be positive");
    if (in_channels < 1 || final_channels < 1) throw UsageError("channel widths must be positive");
    if (head != 1 && head != 4 && head != 18) throw UsageError("head must be 1, 4 or 18");
    for (int l : skips)
      if (l < 1 || l >= levels()) throw UsageError("skip level " + std::to_string(l) + " has no encoder partner");
    if (!(prune_threshold > 0 && prune_threshold < 1)) throw UsageError("prune threshold must be in (0,1)");
    kernel_offsets(kernel);
  }
};

template <typename T>
struct Param {
  std::string name;
  std::vector<std::uint32_t> shape;
  std::vector<T> value;
  std::vector<T> grad;
  bool trainable = true;
};

template <typename T>
class Model {
 public:
  struct EncLayer {
    int conv, gamma, beta, mean, var;
  };
  struct DecLayer {
    int tconv, gamma, beta, mean, var, prune_w, prune_b;
  };

  Model() = default;
  explicit Model(const ModelSpec& spec) : spec_(spec) {
    spec_.validate();
    const auto kv = static_cast<std::uint32_t>(kernel_offsets(spec_.kernel).size());
    int cin = spec_.in_channels;
    for (int e = 0; e < spec_.levels(); ++e) {
      const auto cout = static_cast<std::uint32_t>(spec_.enc_channels[static_cast<std::size_t>(e)]);
      const std::string p = "enc" + std::to_string(e + 1) + ".";
      EncLayer L;
      L.conv = add(p + "conv.weight", {kv, static_cast<std::uint32_t>(cin), cout});
      add_bn(p, cout, L.gamma, L.beta, L.mean, L.var);
      enc_.push_back(L);
      cin = static_cast<int>(cout);
    }
    dec_.resize(static_cast<std::size_t>(spec_.levels()));
    for (int l = spec_.levels() - 1; l >= 0; --l) {
      const auto cout = static_cast<std::uint32_t>(spec_.dec_channels(l));
      const std::string p = "dec" + std::to_string(l) + ".";
      DecLayer& L = dec_[static_cast<std::size_t>(l)];
      L.tconv = add(p + "tconv.weight", {kv, static_cast<std::uint32_t>(cin), cout});
      add_bn(p, cout, L.gamma, L.beta, L.mean, L.var);
      L.prune_w = add(p + "prune.weight", {cout, 1});
      L.prune_b = add(p + "prune.bias", {1});
      cin = static_cast<int>(cout);
    }
    head_w_ = add("head.weight", {static_cast<std::uint32_t>(cin), static_cast<std::uint32_t>(spec_.head)});
    head_b_ = add("head.bias", {static_cast<std::uint32_t>(spec_.head)});
  }

  const ModelSpec& spec() const { return spec_; }
  /// Inference-time keep probability; the only spec field that may change.
  void set_prune_threshold(double t) {
    ModelSpec s = spec_;
    s.prune_threshold = t;
    s.validate();
    spec_ = s;
  }
  std::vector<Param<T>>& params() { return params_; }
  const std::vector<Param<T>>& params() const { return params_; }
  Param<T>& param(int n) { return params_[static_cast<std::size_t>(n)]; }
  const Param<T>& param(int n) const { return params_[static_cast<std::size_t>(n)]; }
  const EncLayer& enc(int e) const { return enc_[static_cast<std::size_t>(e)]; }
  const DecLayer& dec(int l) const { return dec_[static_cast<std::size_t>(l)]; }
  int head_w() const { return head_w_; }
  int head_b() const { return head_b_; }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : params_)
      if (p.trainable) n += p.value.size();
    return n;
  }

  void zero_grad() {
    for (auto& p : params_) std::fill(p.grad.begin(), p.grad.end(), T(0));
  }

  /// He-style normal initialisation; batch-norm scale 1, shifts and biases 0.
  void init(std::uint64_t seed) {
    Rng rng(mix_seed(seed, 0x1417));
    auto normal = [&rng] {
      const double u1 = 1.0 - uniform01(rng), u2 = uniform01(rng);
      return std::sqrt(-2.0 * std::log(u1)) * std::cos(2 * kPi * u2);
    };
    for (auto& p : params_) {
      const std::string& n = p.name;
      auto ends = [&n](const char* s) {
        const std::string_view sv(s);
        return n.size() >= sv.size() && n.compare(n.size() - sv.size(), sv.size(), sv) == 0;
      };
      if (ends("bn.weight") || ends("bn.running_var")) {
        std::fill(p.value.begin(), p.value.end(), T(1));
      } else if (p.shape.size() == 1) {
        std::fill(p.value.begin(), p.value.end(), T(0));
      } else {
        std::size_t fan_in = 1;
        for (std::size_t d = 0; d + 1 < p.shape.size(); ++d) fan_in *= p.shape[d];
        const double sd = std::sqrt(2.0 / static_cast<double>(fan_in));
        for (auto& v : p.value) v = static_cast<T>(sd * normal());
      }
    }
  }

  template <typename U>
  Model<U> cast() const {
    Model<U> m(spec_);
    for (std::size_t n = 0; n < params_.size(); ++n)
      for (std::size_t q = 0; q < params_[n].value.size(); ++q)
        m.params()[n].value[q] = static_cast<U>(params_[n].value[q]);
    return m;
  }

 private:
  int add(const std::string& name, std::vector<std::uint32_t> shape, bool trainable = true) {
    std::size_t size = 1;
    for (auto d : shape) size *= d;
    params_.push_back({name, std::move(shape), std::vector<T>(size, T(0)), std::vector<T>(size, T(0)), trainable});
    return static_cast<int>(params_.size()) - 1;
  }
  void add_bn(const std::string& p, std::uint32_t c, int& g, int& b, int& m, int& v) {
    g = add(p + "bn.weight", {c});
    b = add(p + "bn.bias", {c});
    m = add(p + "bn.running_mean", {c}, false);
    v = add(p + "bn.running_var", {c}, false);
    std::fill(params_.back().value.begin(), params_.back().value.end(), T(1));
    std::fill(params_[static_cast<std::size_t>(g)].value.begin(), params_[static_cast<std::size_t>(g)].value.end(), T(1));
  }

  ModelSpec spec_{};
  std::vector<Param<T>> params_;
  std::vector<EncLayer> enc_;
  std::vector<DecLayer> dec_;
  int head_w_ = -1, head_b_ = -1;
};

// ---------------------------------------------------------------------------
// Batches.

/// Windows stacked along the batch coordinate. Targets are the label support
/// with per-channel values and presence flags.
struct Batch {
  int channels = 1;
  std::vector<std::uint64_t> input;
  std::vector<std::uint64_t> target;
  std::vector<float> labels;
  std::vector<std::uint8_t> present;
};

inline Batch make_batch(std::span<const Window* const> windows, int channels) {
  Batch b;
  b.channels = channels;
  const auto c = static_cast<std::size_t>(channels);
  for (std::size_t n = 0; n < windows.size(); ++n) {
    const auto bi = static_cast<std::int32_t>(n);
    for (const auto& v : windows[n]->input) b.input.push_back(coord_key({bi, v.i, v.j, v.k}));
    for (const auto& [v, l] : windows[n]->labels) {
      if (l.value.size() != c) throw UsageError("label width does not match model head");
      b.target.push_back(coord_key({bi, v.i, v.j, v.k}));
      b.labels.insert(b.labels.end(), l.value.begin(), l.value.end());
      b.present.insert(b.present.end(), l.present.begin(), l.present.end());
    }
  }
  // windows are sorted individually and batch index is the major key
  sort_unique(b.input);
  return b;
}

inline Batch make_batch(const Window& w, int channels) {
  const Window* p = &w;
  return make_batch(std::span<const Window* const>(&p, 1), channels);
}

// ---------------------------------------------------------------------------
// Forward / backward.

template <typename T>
struct Tape {
  bool training = false;
  SparseTensor<T> input;
  struct Enc {
    KernelMap map;
    BatchNormCache<T> bn;
    SparseTensor<T> out;  // after ELU
  };
  struct Dec {
    KernelMap map;
    BatchNormCache<T> bn;
    SparseTensor<T> act;  // after ELU
    std::vector<std::int32_t> ia, ib;
    SparseTensor<T> u;    // after the skip union
    SparseTensor<T> logits;
    std::vector<std::int32_t> rows;
    SparseTensor<T> out;  // pruned
  };
  std::vector<Enc> enc;
  std::vector<Dec> dec;
  SparseTensor<T> scores;  // stride 1, head channels, in [0,1]
};

/// Runs the network. With `teacher` set (one sorted key set per decoder
/// level), pruning keeps exactly the teacher coordinates; otherwise it keeps
/// coordinates whose pruning probability exceeds the spec threshold.
template <typename T>
Tape<T> forward(Model<T>& model, const std::vector<std::uint64_t>& input, bool training,
                const std::vector<std::vector<std::uint64_t>>* teacher = nullptr) {
  const ModelSpec& spec = model.spec();
  const int L = spec.levels();
  const T momentum = static_cast<T>(spec.bn_momentum), eps = static_cast<T>(spec.bn_eps);
  Tape<T> tape;
  tape.training = training;
  tape.input = make_tensor<T>(1, spec.in_channels, input);
  std::fill(tape.input.feats.begin(), tape.input.feats.end(), T(1));
  tape.enc.resize(static_cast<std::size_t>(L));
  tape.dec.resize(static_cast<std::size_t>(L));

  auto value = [&model](int n) -> std::vector<T>& { return model.param(n).value; };
  const SparseTensor<T>* x = &tape.input;
  for (int e = 0; e < L; ++e) {
    auto& E = tape.enc[static_cast<std::size_t>(e)];
    const auto& ids = model.enc(e);
    auto z = sparse_conv(*x, value(ids.conv), spec.kernel, spec.enc_channels[static_cast<std::size_t>(e)], E.map);
    E.out = batch_norm(z, value(ids.gamma), value(ids.beta), value(ids.mean), value(ids.var), training, momentum,
                       eps, E.bn);
    elu_inplace(E.out);
    x = &E.out;
  }

  const T logit_thr = static_cast<T>(std::log(spec.prune_threshold / (1 - spec.prune_threshold)));
  for (int l = L - 1; l >= 0; --l) {
    auto& D = tape.dec[static_cast<std::size_t>(l)];
    const auto& ids = model.dec(l);
    auto z = sparse_tconv(*x, value(ids.tconv), spec.kernel, spec.dec_channels(l), spec.extent, D.map);
    D.act = batch_norm(z, value(ids.gamma), value(ids.beta), value(ids.mean), value(ids.var), training, momentum,
                       eps, D.bn);
    elu_inplace(D.act);
    if (spec.has_skip(l))
      D.u = union_add(D.act, tape.enc[static_cast<std::size_t>(l - 1)].out, D.ia, D.ib);
    else
      D.u = D.act;
    D.logits = sparse_linear(D.u, value(ids.prune_w), value(ids.prune_b));
    std::vector<std::uint8_t> keep;
    if (teacher) {
      keep = member_mask(D.u.keys, (*teacher)[static_cast<std::size_t>(l)]);
    } else {
      keep.resize(D.u.size());
      for (std::size_t n = 0; n < keep.size(); ++n) keep[n] = D.logits.feats[n] > logit_thr;
    }
    D.out = prune(D.u, keep, D.rows);
    x = &D.out;
  }

  tape.scores = sparse_linear(*x, value(model.head_w()), value(model.head_b()));
  for (auto& v : tape.scores.feats) v = sigmoid(v);
  return tape;
}

/// Teacher masks: the label support floored to each decoder stride.
inline std::vector<std::vector<std::uint64_t>> teacher_masks(const Batch& batch, int levels) {
  std::vector<std::vector<std::uint64_t>> out;
  for (int l = 0; l < levels; ++l) out.push_back(downsample_keys(batch.target, 1 << l));
  return out;
}

struct LossConfig {
  double bce_weight = 1.0;
  double mse_weight = 1.0;
  double pos_weight_min = 1.0;
  double pos_weight_max = 100.0;
};

struct LossReport {
  double total = 0;
  double mse = 0;
  std::vector<double> bce;         // per decoder level
  std::vector<double> pos_weight;  // per decoder level
  std::size_t true_positives = 0;
};

/// clamp(|neg| / |pos|, lo, hi); with no positives the upper clamp applies.
inline double positive_weight(std::size_t pos, std::size_t neg, const LossConfig& cfg) {
  if (pos == 0) return cfg.pos_weight_max;
  return std::clamp(static_cast<double>(neg) / static_cast<double>(pos), cfg.pos_weight_min, cfg.pos_weight_max);
}

/// Teacher-forced training loss; fills parameter gradients.
template <typename T>
LossReport loss_and_grads(Model<T>& model, const Batch& batch, const LossConfig& cfg, Tape<T>* keep_tape = nullptr) {
  const ModelSpec& spec = model.spec();
  if (batch.channels != spec.head) throw UsageError("batch head does not match model head");
  const int L = spec.levels();
  const auto masks = teacher_masks(batch, L);
  Tape<T> tape = forward(model, batch.input, true, &masks);
  model.zero_grad();
  LossReport rep;
  rep.bce.assign(static_cast<std::size_t>(L), 0.0);
  rep.pos_weight.assign(static_cast<std::size_t>(L), 0.0);

  auto value = [&model](int n) -> std::vector<T>& { return model.param(n).value; };
  auto grad = [&model](int n) -> std::vector<T>& { return model.param(n).grad; };

  // MSE over true positives of the final level.
  const auto c = static_cast<std::size_t>(spec.head);
  std::vector<T> g_scores(tape.scores.feats.size(), T(0));
  {
    std::vector<std::pair<std::size_t, std::size_t>> tp;  // (pred row, target row)
    std::size_t t = 0;
    for (std::size_t n = 0; n < tape.scores.size(); ++n) {
      while (t < batch.target.size() && batch.target[t] < tape.scores.keys[n]) ++t;
      if (t < batch.target.size() && batch.target[t] == tape.scores.keys[n]) {
        bool any = false;
        for (std::size_t k = 0; k < c; ++k) any |= batch.present[t * c + k] != 0;
        if (any) tp.emplace_back(n, t);
      }
    }
    rep.true_positives = tp.size();
    double sum = 0;
    for (const auto& [n, t2] : tp) {
      int present = 0;
      for (std::size_t k = 0; k < c; ++k) present += batch.present[t2 * c + k];
      double e = 0;
      for (std::size_t k = 0; k < c; ++k) {
        if (!batch.present[t2 * c + k]) continue;
        const T yhat = tape.scores.feats[n * c + k];
        const double d = static_cast<double>(yhat) - static_cast<double>(batch.labels[t2 * c + k]);
        e += d * d;
        const double g = cfg.mse_weight * 2.0 * d / (static_cast<double>(present) * static_cast<double>(tp.size()));
        g_scores[n * c + k] = static_cast<T>(g * static_cast<double>(yhat) * (1.0 - static_cast<double>(yhat)));
      }
      sum += e / present;
    }
    rep.mse = tp.empty() ? 0.0 : sum / static_cast<double>(tp.size());
  }

  // head
  std::vector<T> g_h(tape.dec[0].out.feats.size(), T(0));
  sparse_linear_backward(tape.dec[0].out, value(model.head_w()), g_scores, c, &g_h, grad(model.head_w()),
                         grad(model.head_b()));

  std::vector<std::vector<T>> g_enc(static_cast<std::size_t>(L));
  for (int e = 0; e < L; ++e) g_enc[static_cast<std::size_t>(e)].assign(tape.enc[static_cast<std::size_t>(e)].out.feats.size(), T(0));

  double bce_total = 0;
  for (int l = 0; l < L; ++l) {
    auto& D = tape.dec[static_cast<std::size_t>(l)];
    const auto& ids = model.dec(l);
    const auto C = static_cast<std::size_t>(D.u.channels);
    std::vector<T> g_u(D.u.feats.size(), T(0));
    for (std::size_t r = 0; r < D.rows.size(); ++r)
      for (std::size_t q = 0; q < C; ++q) g_u[static_cast<std::size_t>(D.rows[r]) * C + q] = g_h[r * C + q];

    // weighted BCE on the pruning logits
    const auto y = member_mask(D.u.keys, masks[static_cast<std::size_t>(l)]);
    std::size_t pos = 0;
    for (auto v : y) pos += v;
    const double w = positive_weight(pos, y.size() - pos, cfg);
    rep.pos_weight[static_cast<std::size_t>(l)] = w;
    std::vector<T> g_logit(D.u.size(), T(0));
    if (!y.empty()) {
      double s = 0;
      const double inv = 1.0 / static_cast<double>(y.size());
      for (std::size_t n = 0; n < y.size(); ++n) {
        const double z = static_cast<double>(D.logits.feats[n]);
        const double p = sigmoid(z);
        if (y[n]) {
          s += w * softplus(-z);
          g_logit[n] = static_cast<T>(cfg.bce_weight * inv * w * (p - 1.0));
        } else {
          s += softplus(z);
          g_logit[n] = static_cast<T>(cfg.bce_weight * inv * p);
        }
      }
      rep.bce[static_cast<std::size_t>(l)] = s * inv;
      bce_total += s * inv;
    }
    sparse_linear_backward(D.u, value(ids.prune_w), g_logit, 1, &g_u, grad(ids.prune_w), grad(ids.prune_b));

    std::vector<T> g_act;
    if (spec.has_skip(l)) {
      g_act.assign(D.act.feats.size(), T(0));
      for (std::size_t r = 0; r < D.ia.size(); ++r)
        for (std::size_t q = 0; q < C; ++q) g_act[r * C + q] = g_u[static_cast<std::size_t>(D.ia[r]) * C + q];
      auto& ge = g_enc[static_cast<std::size_t>(l - 1)];
      for (std::size_t r = 0; r < D.ib.size(); ++r)
        for (std::size_t q = 0; q < C; ++q) ge[r * C + q] += g_u[static_cast<std::size_t>(D.ib[r]) * C + q];
    } else {
      g_act = std::move(g_u);
    }
    elu_backward(D.act.feats, g_act);
    std::vector<T> g_z(g_act.size(), T(0));
    batch_norm_backward(D.bn, value(ids.gamma), g_act, C, g_z, grad(ids.gamma), grad(ids.beta));

    const SparseTensor<T>& in = l + 1 < L ? tape.dec[static_cast<std::size_t>(l + 1)].out : tape.enc[static_cast<std::size_t>(L - 1)].out;
    std::vector<T> g_in(in.feats.size(), T(0));
    apply_map_backward(in, value(ids.tconv), D.map, g_z, static_cast<int>(C), &g_in, grad(ids.tconv));
    if (l + 1 < L) {
      g_h = std::move(g_in);
    } else {
      auto& ge = g_enc[static_cast<std::size_t>(L - 1)];
      for (std::size_t q = 0; q < ge.size(); ++q) ge[q] += g_in[q];
    }
  }

  for (int e = L - 1; e >= 0; --e) {
    auto& E = tape.enc[static_cast<std::size_t>(e)];
    const auto& ids = model.enc(e);
    const auto C = static_cast<std::size_t>(E.out.channels);
    auto& g = g_enc[static_cast<std::size_t>(e)];
    elu_backward(E.out.feats, g);
    std::vector<T> g_z(g.size(), T(0));
    batch_norm_backward(E.bn, value(ids.gamma), g, C, g_z, grad(ids.gamma), grad(ids.beta));
    const SparseTensor<T>& in = e > 0 ? tape.enc[static_cast<std::size_t>(e - 1)].out : tape.input;
    std::vector<T>* g_in = e > 0 ? &g_enc[static_cast<std::size_t>(e - 1)] : nullptr;
    apply_map_backward(in, value(ids.conv), E.map, g_z, static_cast<int>(C), g_in, grad(ids.conv));
  }

  rep.total = cfg.bce_weight * bce_total + cfg.mse_weight * rep.mse;
  if (keep_tape) *keep_tape = std::move(tape);
  return rep;
}

/// Inference prediction for one window: coordinates and c scores.
struct Prediction {
  std::map<Index3, std::vector<float>> scores;
};

template <typename T>
Prediction predict_window(Model<T>& model, const std::vector<Index3>& input) {
  std::vector<std::uint64_t> keys;
  keys.reserve(input.size());
  for (const auto& v : input) keys.push_back(coord_key({0, v.i, v.j, v.k}));
  sort_unique(keys);
  const auto tape = forward(model, keys, false);
  Prediction p;
  const auto c = static_cast<std::size_t>(tape.scores.channels);
  for (std::size_t n = 0; n < tape.scores.size(); ++n) {
    const Coord k = tape.scores.coord(n);
    std::vector<float> v(c);
    for (std::size_t q = 0; q < c; ++q) v[q] = static_cast<float>(tape.scores.feats[n * c + q]);
    p.scores.emplace(Index3{k.i, k.j, k.k}, std::move(v));
  }
  return p;
}

}  // namespace voxtrav
