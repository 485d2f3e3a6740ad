#pragma once

// Pipeline configuration: one flat key=value namespace over every tunable.
// Lines are `key = value`; '#' starts a comment; unknown keys are rejected.

#include <charconv>
#include <functional>
#include <istream>
#include <sstream>

#include "voxtrav/dataset.hpp"
#include "voxtrav/oracle.hpp"
#include "voxtrav/train.hpp"

namespace voxtrav {

struct PipelineConfig {
  std::uint64_t seed = 0;
  TerrainConfig terrain{};
  double resolution = 0.1;
  RobotModel robot{};
  int trials = 10;
  int jobs = 1;
  TrialRandomization randomization{};
  MotionConfig motion{};
  SamplingConfig sampling{};
  int window_count = 64;
  Head head = Head::total;
  AugmentConfig augment{};
  std::string variant = "m2";
  double prune_threshold = 0.5;
  TrainConfig train{};
  double lambda = 0.1;
  double tau = 0.05;

  void validate() const {
    terrain.validate();
    robot.validate();
    randomization.validate();
    augment.validate();
    train.validate();
    if (!(resolution > 0)) throw UsageError("voxel.resolution must be positive");
    if (trials < 1) throw UsageError("oracle.trials must be >= 1");
    if (jobs < 1) throw UsageError("jobs must be >= 1");
    if (sampling.xy_stride < 1 || sampling.heading_stride < 1) throw UsageError("sampling strides must be >= 1");
    if (!(motion.translation > 0 && motion.rotation > 0 && motion.translation_increment > 0 &&
          motion.rotation_increment > 0))
      throw UsageError("motion sizes must be positive");
    if (window_count < 1) throw UsageError("window.count must be >= 1");
    if (!(lambda >= 0)) throw UsageError("plan.lambda must be >= 0");
    if (!(tau >= 0 && tau <= 1)) throw UsageError("plan.tau must be in [0,1]");
    ModelSpec::variant(variant, channels(head)).validate();
    if (!(prune_threshold > 0 && prune_threshold < 1)) throw UsageError("model.prune_threshold must be in (0,1)");
  }

  ModelSpec model_spec() const {
    auto s = ModelSpec::variant(variant, channels(head));
    s.prune_threshold = prune_threshold;
    return s;
  }
};

struct ConfigKey {
  std::string name;
  std::string doc;
  std::function<std::string()> get;
  std::function<void(const std::string&)> set;
};

namespace detail {

inline std::string fmt(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

template <typename T>
T parse_number(const std::string& key, const std::string& text) {
  T v{};
  const char* b = text.data();
  const char* e = b + text.size();
  const auto r = std::from_chars(b, e, v);
  if (r.ec != std::errc() || r.ptr != e) throw UsageError("config key '" + key + "': cannot parse '" + text + "'");
  if constexpr (std::is_floating_point_v<T>) {
    if (!std::isfinite(v)) throw UsageError("config key '" + key + "': value must be finite");
  }
  return v;
}

inline std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace detail

/// Every key bound to the fields of `c`.
inline std::vector<ConfigKey> config_keys(PipelineConfig& c) {
  std::vector<ConfigKey> k;
  auto real = [&k](std::string name, double& f, std::string doc) {
    k.push_back({name, std::move(doc), [&f] { return detail::fmt(f); },
                 [&f, name](const std::string& s) { f = detail::parse_number<double>(name, s); }});
  };
  auto degrees = [&k](std::string name, double& rad, std::string doc) {
    k.push_back({name, std::move(doc), [&rad] { return detail::fmt(rad2deg(rad)); },
                 [&rad, name](const std::string& s) { rad = deg2rad(detail::parse_number<double>(name, s)); }});
  };
  auto integer = [&k](std::string name, int& f, std::string doc) {
    k.push_back({name, std::move(doc), [&f] { return std::to_string(f); },
                 [&f, name](const std::string& s) { f = detail::parse_number<int>(name, s); }});
  };
  auto flag = [&k](std::string name, bool& f, std::string doc) {
    k.push_back({name, std::move(doc), [&f] { return std::string(f ? "true" : "false"); },
                 [&f, name](const std::string& s) {
                   if (s == "true" || s == "1") {
                     f = true;
                   } else if (s == "false" || s == "0") {
                     f = false;
                   } else {
                     throw UsageError("config key '" + name + "': expected true|false");
                   }
                 }});
  };

  k.push_back({"seed", "default seed of every subcommand", [&c] { return std::to_string(c.seed); },
               [&c](const std::string& s) { c.seed = detail::parse_number<std::uint64_t>("seed", s); }});

  auto& t = c.terrain;
  real("terrain.patch_size", t.patch_size, "square patch edge (m)");
  real("terrain.height_budget", t.height_budget, "vertical extent of the voxel grid (m)");
  k.push_back({"terrain.mode", "ground mode: smooth|stepped",
               [&t] { return std::string(t.ground_mode == GroundMode::smooth ? "smooth" : "stepped"); },
               [&t](const std::string& s) {
                 if (s == "smooth") {
                   t.ground_mode = GroundMode::smooth;
                 } else if (s == "stepped") {
                   t.ground_mode = GroundMode::stepped;
                 } else {
                   throw UsageError("config key 'terrain.mode': expected smooth|stepped");
                 }
               }});
  integer("terrain.perlin.octaves", t.perlin.octaves, "noise octaves");
  real("terrain.perlin.wavelength", t.perlin.base_wavelength, "octave-0 wavelength (m)");
  real("terrain.perlin.amplitude", t.perlin.amplitude, "octave-0 amplitude (m)");
  real("terrain.perlin.persistence", t.perlin.persistence, "amplitude ratio between octaves");
  real("terrain.sample_spacing", t.sample_spacing, "heightfield vertex spacing (m)");
  real("terrain.step_height_min", t.step_height_min, "stepped mode: smallest terrace height (m)");
  real("terrain.step_height_max", t.step_height_max, "stepped mode: largest terrace height (m)");
  integer("terrain.objects_min", t.objects_min, "fewest obstacles per patch");
  integer("terrain.objects_max", t.objects_max, "most obstacles per patch");
  real("terrain.diameter_min", t.diameter_min, "smallest obstacle diameter (m)");
  real("terrain.diameter_max", t.diameter_max, "largest obstacle diameter (m)");
  real("terrain.scale_min", t.scale_min, "smallest obstacle scale factor");
  real("terrain.scale_max", t.scale_max, "largest obstacle scale factor");
  real("terrain.ground_align_prob", t.ground_align_prob, "probability an obstacle rests on the ground");
  real("terrain.float_min", t.float_min, "lowest lift of a floating obstacle (m)");
  real("terrain.float_max", t.float_max, "highest lift of a floating obstacle (m)");

  real("voxel.resolution", c.resolution, "voxel edge (m)");

  auto& r = c.robot;
  real("robot.body_length", r.body_length, "body box length (m)");
  real("robot.body_width", r.body_width, "body box width (m)");
  real("robot.body_height", r.body_height, "body box height (m)");
  real("robot.standing_clearance", r.standing_clearance, "body bottom above mean foot support (m)");
  real("robot.foot_length", r.foot_length, "fore-aft foot spacing (m)");
  real("robot.foot_width", r.foot_width, "lateral foot spacing (m)");
  real("robot.nominal_speed", r.nominal_speed, "nominal walking speed (m/s)");

  integer("oracle.trials", c.trials, "randomized trials per pose and command");
  integer("oracle.jobs", c.jobs, "worker threads for collect and windows");
  real("oracle.step_up_min", c.randomization.step_up_min, "lowest per-trial step-up limit (m)");
  real("oracle.step_up_max", c.randomization.step_up_max, "highest per-trial step-up limit (m)");
  real("oracle.slope_min_deg", c.randomization.slope_min_deg, "lowest per-trial tilt limit (deg)");
  real("oracle.slope_max_deg", c.randomization.slope_max_deg, "highest per-trial tilt limit (deg)");
  real("oracle.drop_margin", c.randomization.drop_margin, "drop limit minus step-up limit (m)");
  real("oracle.clearance_height", c.randomization.clearance_height, "free space required above a foothold (m)");
  real("oracle.translation", c.motion.translation, "translation command length (m)");
  degrees("oracle.rotation_deg", c.motion.rotation, "yaw command size (deg)");
  real("oracle.translation_increment", c.motion.translation_increment, "rollout sub-step (m)");
  degrees("oracle.rotation_increment_deg", c.motion.rotation_increment, "rollout yaw sub-step (deg)");
  integer("oracle.xy_stride", c.sampling.xy_stride, "start poses on every n-th voxel column");
  integer("oracle.heading_stride", c.sampling.heading_stride, "start poses on every n-th 10-degree heading");

  integer("window.count", c.window_count, "windows sampled per grid");
  k.push_back({"window.head", "label head: total|dir4|orient", [&c] { return std::string(head_name(c.head)); },
               [&c](const std::string& s) { c.head = parse_head(s); }});
  flag("augment.flood_fill", c.augment.flood_fill, "drop labels unreachable from the window center");
  real("augment.dropout_min", c.augment.p_min, "voxel dropout at the window center");
  real("augment.dropout_max", c.augment.p_max, "voxel dropout at the dropout radius");
  real("augment.dropout_radius", c.augment.radius, "horizontal distance of maximal dropout (m)");
  real("augment.spawn_prob", c.augment.spawn_prob, "surface-noise probability per occupied voxel");

  k.push_back({"model.variant", "skip layout: m2 (two coarsest levels) | m1 (all)", [&c] { return c.variant; },
               [&c](const std::string& s) {
                 ModelSpec::variant(s, 1);
                 c.variant = s;
               }});
  real("model.prune_threshold", c.prune_threshold, "keep probability threshold at inference");

  auto& tr = c.train;
  integer("train.steps", tr.steps, "optimizer steps");
  integer("train.batch", tr.batch, "windows per step");
  real("train.lr", tr.lr, "peak learning rate");
  real("train.warmup", tr.warmup, "fraction of steps spent warming up");
  real("train.div_factor", tr.div_factor, "peak / initial learning rate");
  real("train.final_div_factor", tr.final_div_factor, "initial / final learning rate");
  real("train.beta1", tr.beta1, "first-moment decay");
  real("train.beta2", tr.beta2, "second-moment decay");
  real("train.eps", tr.eps, "optimizer epsilon");
  real("train.weight_decay", tr.weight_decay, "decoupled weight decay");
  real("train.bce_weight", tr.loss.bce_weight, "weight of each pruning BCE term");
  real("train.mse_weight", tr.loss.mse_weight, "weight of the score MSE term");
  real("train.pos_weight_min", tr.loss.pos_weight_min, "lower clamp of the positive-class weight");
  real("train.pos_weight_max", tr.loss.pos_weight_max, "upper clamp of the positive-class weight");
  integer("train.log_every", tr.log_every, "steps between metric lines");
  integer("train.val_every", tr.val_every, "steps between validation passes (0: end only)");

  real("plan.lambda", c.lambda, "risk weight of the edge cost");
  real("plan.tau", c.tau, "smallest score of a graph node");
  return k;
}

inline void set_config(PipelineConfig& c, const std::string& key, const std::string& value) {
  for (auto& k : config_keys(c))
    if (k.name == key) {
      k.set(value);
      return;
    }
  throw UsageError("unknown config key '" + key + "'");
}

/// Applies `key = value` lines in order.
inline void apply_config(PipelineConfig& c, std::istream& in, const std::string& source = "config") {
  std::string line;
  int n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (auto h = line.find('#'); h != std::string::npos) line.resize(h);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw UsageError(source + ":" + std::to_string(n) + ": expected key = value");
    set_config(c, detail::trim(line.substr(0, eq)), detail::trim(line.substr(eq + 1)));
  }
}

inline void apply_config_file(PipelineConfig& c, const std::string& path) {
  std::ifstream f(path);
  if (!f) throw UsageError("cannot open config '" + path + "'");
  apply_config(c, f, path);
}

inline std::string format_config(PipelineConfig& c, const std::string& prefix = "config.") {
  std::ostringstream o;
  for (const auto& k : config_keys(c)) o << prefix << k.name << "=" << k.get() << "\n";
  return o.str();
}

/// Help block: every key with its default and meaning.
inline std::string config_help() {
  PipelineConfig d;
  std::ostringstream o;
  o << "Config keys (defaults):\n";
  for (const auto& k : config_keys(d)) {
    std::string left = "  " + k.name + " = " + k.get();
    if (left.size() < 44) left.resize(44, ' ');
    o << left << "  " << k.doc << "\n";
  }
  return o.str();
}

}  // namespace voxtrav
