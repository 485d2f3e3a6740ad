#pragma once

// Optimiser, learning-rate schedule, step loop and checkpoint files.

#include <functional>
#include <ostream>

#include "voxtrav/eval.hpp"
#include "voxtrav/model.hpp"

namespace voxtrav {

struct TrainConfig {
  int steps = 5000;
  int batch = 8;
  double lr = 1e-3;  // peak of the cycle
  double warmup = 0.1;
  double div_factor = 25;
  double final_div_factor = 1e4;
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  double weight_decay = 1e-4;
  std::uint64_t seed = 0;
  int log_every = 50;
  int val_every = 500;  // 0 disables periodic validation
  LossConfig loss{};

  void validate() const {
    if (steps < 1) throw UsageError("train.steps must be >= 1");
    if (batch < 1) throw UsageError("train.batch must be >= 1");
    if (!(lr > 0)) throw UsageError("train.lr must be positive");
    if (!(warmup >= 0 && warmup <= 1)) throw UsageError("train.warmup must be in [0,1]");
    if (!(div_factor >= 1) || !(final_div_factor >= 1)) throw UsageError("division factors must be >= 1");
    if (!(weight_decay >= 0)) throw UsageError("train.weight_decay must be >= 0");
    if (log_every < 1 || val_every < 0) throw UsageError("invalid logging interval");
  }
};

/// One-cycle schedule: cosine rise from peak/div over the warmup fraction,
/// then cosine decay to (peak/div)/final_div at the last step.
class OneCycle {
 public:
  OneCycle(double peak, int steps, double warmup = 0.1, double div = 25, double final_div = 1e4)
      : peak_(peak), initial_(peak / div), final_(peak / div / final_div), steps_(steps),
        warm_(static_cast<int>(std::lround(warmup * steps))) {}

  double operator()(int step) const {
    auto cosine = [](double from, double to, double t) { return to + (from - to) * 0.5 * (1 + std::cos(kPi * t)); };
    if (step <= warm_) return warm_ == 0 ? peak_ : cosine(initial_, peak_, static_cast<double>(step) / warm_);
    const int span = steps_ - 1 - warm_;
    if (span <= 0) return peak_;
    return cosine(peak_, final_, std::min(1.0, static_cast<double>(step - warm_) / span));
  }

  int warmup_steps() const { return warm_; }

 private:
  double peak_, initial_, final_;
  int steps_, warm_;
};

/// Adam with decoupled weight decay over the trainable parameters.
template <typename T>
class AdamW {
 public:
  AdamW(const Model<T>& model, const TrainConfig& cfg)
      : b1_(cfg.beta1), b2_(cfg.beta2), eps_(cfg.eps), wd_(cfg.weight_decay) {
    for (const auto& p : model.params()) {
      m_.emplace_back(p.value.size(), 0.0);
      v_.emplace_back(p.value.size(), 0.0);
    }
  }

  void step(Model<T>& model, double lr) {
    ++t_;
    const double c1 = 1 - std::pow(b1_, t_), c2 = 1 - std::pow(b2_, t_);
    for (std::size_t n = 0; n < model.params().size(); ++n) {
      auto& p = model.params()[n];
      if (!p.trainable) continue;
      auto &m = m_[n], &v = v_[n];
      for (std::size_t q = 0; q < p.value.size(); ++q) {
        const double g = p.grad[q];
        double w = p.value[q];
        w -= lr * wd_ * w;
        m[q] = b1_ * m[q] + (1 - b1_) * g;
        v[q] = b2_ * v[q] + (1 - b2_) * g * g;
        w -= lr * (m[q] / c1) / (std::sqrt(v[q] / c2) + eps_);
        p.value[q] = static_cast<T>(w);
      }
    }
  }

 private:
  double b1_, b2_, eps_, wd_;
  int t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

/// Window indices of one step's batch, drawn with replacement.
inline std::vector<std::size_t> batch_indices(std::uint64_t seed, int step, int batch, std::size_t n) {
  Rng rng(mix_seed(seed, static_cast<std::uint64_t>(step)));
  std::vector<std::size_t> out(static_cast<std::size_t>(batch));
  for (auto& i : out) i = static_cast<std::size_t>(uniform_int(rng, 0, static_cast<std::int64_t>(n) - 1));
  return out;
}

struct TrainRecord {
  int step = 0;
  double lr = 0, loss = 0, mse = 0, bce = 0;
  std::optional<double> val_rmse;
};

inline std::string format_record(const TrainRecord& r) {
  std::ostringstream o;
  o.precision(9);
  o << "step=" << r.step << " lr=" << r.lr << " loss=" << r.loss << " mse=" << r.mse << " bce=" << r.bce;
  if (r.val_rmse) o << " val_rmse=" << *r.val_rmse;
  return o.str();
}

template <typename T>
std::string layer_norms(const Model<T>& model) {
  std::ostringstream o;
  o.precision(4);
  for (const auto& p : model.params()) {
    double s = 0;
    for (T v : p.value) s += static_cast<double>(v) * static_cast<double>(v);
    o << " " << p.name << "=" << std::sqrt(s);
  }
  return o.str();
}

using TrainLogFn = std::function<void(const TrainRecord&)>;

/// Initialises `model` from cfg.seed and runs the step loop. Returns the
/// logged records; `val` may be empty.
template <typename T>
std::vector<TrainRecord> train(Model<T>& model, const Dataset& train_set, const Dataset& val, const TrainConfig& cfg,
                               const TrainLogFn& log = {}) {
  cfg.validate();
  if (train_set.windows.empty()) throw UsageError("training set is empty");
  const int c = channels(train_set.head);
  if (c != model.spec().head) throw UsageError("training set head does not match the model head");
  model.init(cfg.seed);
  const OneCycle schedule(cfg.lr, cfg.steps, cfg.warmup, cfg.div_factor, cfg.final_div_factor);
  AdamW<T> opt(model, cfg);
  std::vector<TrainRecord> records;
  for (int step = 0; step < cfg.steps; ++step) {
    std::vector<const Window*> items;
    for (auto i : batch_indices(mix_seed(cfg.seed, 0xba7c), step, cfg.batch, train_set.windows.size()))
      items.push_back(&train_set.windows[i]);
    const auto batch = make_batch(items, c);
    const auto rep = loss_and_grads(model, batch, cfg.loss);
    if (!std::isfinite(rep.total))
      throw NumericError("non-finite loss at step " + std::to_string(step) + "; layer norms:" + layer_norms(model));
    const double lr = schedule(step);
    opt.step(model, lr);

    const bool last = step + 1 == cfg.steps;
    const bool validate = !val.windows.empty() && ((cfg.val_every && (step + 1) % cfg.val_every == 0) || last);
    if (validate || step % cfg.log_every == 0 || last) {
      TrainRecord r;
      r.step = step, r.lr = lr, r.loss = rep.total, r.mse = rep.mse;
      for (double b : rep.bce) r.bce += b;
      if (validate) r.val_rmse = evaluate(model, val).rmse;
      records.push_back(r);
      if (log) log(r);
    }
  }
  return records;
}

// ---------------------------------------------------------------------------
// VTCK checkpoints. Architecture travels as pseudo-layers ("arch.*") ahead of
// the parameter arrays, so a file is self-describing.

namespace detail {

struct RawLayer {
  std::string name;
  std::vector<std::uint32_t> shape;
  std::vector<float> data;
};

inline std::vector<RawLayer> arch_layers(const ModelSpec& s) {
  auto f = [](const auto& v) { return std::vector<float>(v.begin(), v.end()); };
  auto u32 = [](std::size_t n) { return static_cast<std::uint32_t>(n); };
  const std::vector<float> misc{static_cast<float>(s.in_channels), static_cast<float>(s.final_channels),
                                static_cast<float>(s.kernel),      static_cast<float>(s.extent[0]),
                                static_cast<float>(s.extent[1]),   static_cast<float>(s.extent[2])};
  return {{"arch.spec", {u32(misc.size())}, misc},
          {"arch.encoder", {u32(s.enc_channels.size())}, f(s.enc_channels)},
          {"arch.skips", {u32(s.skips.size())}, f(s.skips)}};
}

inline std::vector<int> to_ints(const RawLayer& l) {
  std::vector<int> out;
  for (float v : l.data) {
    if (!(v >= 0 && v <= 1e6 && v == std::floor(v))) throw FormatError("layer '" + l.name + "' holds a non-integer", 0);
    out.push_back(static_cast<int>(v));
  }
  return out;
}

}  // namespace detail

inline constexpr std::uint32_t kCheckpointVersion = 1;

template <typename T>
ByteWriter encode_vtck(const Model<T>& model) {
  ByteWriter w;
  w.put_magic("VTCK");
  w.put<std::uint32_t>(kCheckpointVersion);
  w.put<std::uint8_t>(static_cast<std::uint8_t>(model.spec().head));
  auto layers = detail::arch_layers(model.spec());
  for (const auto& p : model.params()) layers.push_back({p.name, p.shape, std::vector<float>(p.value.begin(), p.value.end())});
  w.put<std::uint32_t>(static_cast<std::uint32_t>(layers.size()));
  for (const auto& l : layers) {
    w.put<std::uint32_t>(static_cast<std::uint32_t>(l.name.size()));
    w.put_bytes(l.name);
    w.put<std::uint8_t>(static_cast<std::uint8_t>(l.shape.size()));
    for (auto d : l.shape) w.put<std::uint32_t>(d);
    for (float v : l.data) w.put<float>(v);
  }
  return w;
}

/// Parses a checkpoint; with `expected` set, any architectural difference is
/// reported against the first layer that disagrees.
inline Model<float> decode_vtck(ByteReader& r, const ModelSpec* expected = nullptr) {
  r.expect_magic("VTCK");
  r.expect_version(kCheckpointVersion);
  const auto head_at = r.offset();
  const int head = r.get<std::uint8_t>();
  const auto count = r.get<std::uint32_t>();
  r.expect_records(count, 5);
  std::vector<detail::RawLayer> layers;
  std::vector<std::uint64_t> offsets;
  for (std::uint32_t n = 0; n < count; ++n) {
    detail::RawLayer l;
    offsets.push_back(r.offset());
    const auto len = r.get<std::uint32_t>();
    r.expect_records(len, 1);
    l.name = r.get_bytes(len);
    const int rank = r.get<std::uint8_t>();
    std::uint64_t size = 1;
    for (int d = 0; d < rank; ++d) {
      l.shape.push_back(r.get<std::uint32_t>());
      size *= l.shape.back();
    }
    r.expect_records(size, 4);
    l.data.resize(size);
    for (auto& v : l.data) v = r.get<float>();
    layers.push_back(std::move(l));
  }
  r.expect_end();

  auto find = [&](const std::string& name) -> const detail::RawLayer& {
    for (const auto& l : layers)
      if (l.name == name) return l;
    throw FormatError("missing layer '" + name + "'", r.offset());
  };
  ModelSpec spec = expected ? *expected : ModelSpec{};
  {
    const auto misc = detail::to_ints(find("arch.spec"));
    if (misc.size() != 6) throw FormatError("layer 'arch.spec' has wrong size", 0);
    spec.in_channels = misc[0], spec.final_channels = misc[1], spec.kernel = misc[2];
    spec.extent = {misc[3], misc[4], misc[5]};
    spec.enc_channels = detail::to_ints(find("arch.encoder"));
    spec.skips = detail::to_ints(find("arch.skips"));
    spec.head = head;
  }
  if (expected) {
    auto mismatch = [](const std::string& layer, const std::string& what) {
      return FormatError("layer '" + layer + "' does not match the model: " + what, 0);
    };
    if (spec.head != expected->head)
      throw mismatch("head.weight", "head " + std::to_string(spec.head) + " vs " + std::to_string(expected->head));
    if (spec.enc_channels != expected->enc_channels) throw mismatch("arch.encoder", "encoder widths differ");
    if (spec.skips != expected->skips) throw mismatch("arch.skips", "skip levels differ");
    if (spec.in_channels != expected->in_channels || spec.final_channels != expected->final_channels ||
        spec.kernel != expected->kernel || spec.extent != expected->extent)
      throw mismatch("arch.spec", "architecture constants differ");
  }
  try {
    spec.validate();
  } catch (const UsageError& e) {
    throw FormatError(std::string("invalid architecture: ") + e.what(), head_at);
  }
  Model<float> model(spec);
  const std::size_t arch = detail::arch_layers(spec).size();
  if (layers.size() != arch + model.params().size())
    throw FormatError("expected " + std::to_string(arch + model.params().size()) + " layers, found " +
                          std::to_string(layers.size()),
                      head_at);
  for (std::size_t n = 0; n < model.params().size(); ++n) {
    auto& p = model.params()[n];
    const auto& l = layers[arch + n];
    if (l.name != p.name) throw FormatError("layer '" + l.name + "' found where '" + p.name + "' belongs", offsets[arch + n]);
    if (l.shape != p.shape) throw FormatError("layer '" + p.name + "' has the wrong shape", offsets[arch + n]);
    for (std::size_t q = 0; q < l.data.size(); ++q) {
      if (!std::isfinite(l.data[q])) throw FormatError("layer '" + p.name + "' holds a non-finite value", offsets[arch + n]);
      if (!p.trainable && p.name.ends_with("running_var") && !(l.data[q] > 0))
        throw FormatError("layer '" + p.name + "' holds a non-positive variance", offsets[arch + n]);
      p.value[q] = l.data[q];
    }
  }
  return model;
}

template <typename T>
void save_checkpoint(const std::string& path, const Model<T>& model) {
  encode_vtck(model).save(path);
}

inline Model<float> load_checkpoint(const std::string& path, const ModelSpec* expected = nullptr) {
  auto r = ByteReader::load(path);
  return decode_vtck(r, expected);
}

}  // namespace voxtrav
