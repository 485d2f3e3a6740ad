// voxtrav: terrain -> voxels -> oracle labels -> windows -> network -> plans.

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>

#include "CLI11.hpp"
#include "voxtrav/config.hpp"
#include "voxtrav/eval.hpp"
#include "voxtrav/planner.hpp"
#include "voxtrav/predict.hpp"
#include "voxtrav/train.hpp"
#include "voxtrav/voxelize.hpp"

using namespace voxtrav;

namespace {

std::vector<double> parse_tuple(const std::string& text, std::size_t n, const char* what) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, ',')) out.push_back(detail::parse_number<double>(what, detail::trim(part)));
  if (out.size() != n) throw UsageError(std::string(what) + " expects " + std::to_string(n) + " comma-separated numbers");
  return out;
}

Vec3 parse_point(const std::string& text, const char* what) {
  const auto v = parse_tuple(text, 3, what);
  return {v[0], v[1], v[2]};
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw UsageError("cannot open '" + path + "' for writing");
  f << text;
  if (!f) throw UsageError("write failed for '" + path + "'");
}

struct Cli {
  PipelineConfig cfg;
  std::string config_path;
  std::vector<std::string> sets;

  // per-subcommand flags; unset ones fall back to the config
  std::optional<std::uint64_t> seed, augment_seed;
  std::optional<std::string> mode, head, variant;
  std::optional<double> res, lr, lambda, tau;
  std::optional<int> trials, jobs, count, steps, batch;
  std::string out, mesh, grid, trav, model, pred, train_path, val_path, ds, pose, start, goal, log, obj;
  std::vector<std::string> grids, travs;
  bool snap = false;

  void resolve() {
    if (config_path.empty())
      if (const char* env = std::getenv("VOXTRAV_CONFIG"); env && *env) config_path = env;
    if (!config_path.empty()) apply_config_file(cfg, config_path);
    for (const auto& s : sets) {
      const auto eq = s.find('=');
      if (eq == std::string::npos) throw UsageError("--set expects key=value, got '" + s + "'");
      set_config(cfg, detail::trim(s.substr(0, eq)), detail::trim(s.substr(eq + 1)));
    }
    if (seed) cfg.seed = *seed;
    if (mode) set_config(cfg, "terrain.mode", *mode);
    if (head) set_config(cfg, "window.head", *head);
    if (variant) set_config(cfg, "model.variant", *variant);
    if (res) cfg.resolution = *res;
    if (lr) cfg.train.lr = *lr;
    if (lambda) cfg.lambda = *lambda;
    if (tau) cfg.tau = *tau;
    if (trials) cfg.trials = *trials;
    if (jobs) cfg.jobs = *jobs;
    if (count) cfg.window_count = *count;
    if (steps) cfg.train.steps = *steps;
    if (batch) cfg.train.batch = *batch;
    cfg.validate();
    std::cout << format_config(cfg);
  }
};

void run_terrain(Cli& c) {
  const auto world = generate_terrain(c.cfg.seed, c.cfg.terrain);
  write_obj(c.out, world.mesh);
  std::cout << "vertices=" << world.mesh.vertices.size() << "\ntriangles=" << world.mesh.triangles.size()
            << "\nobjects=" << world.primitives.size() << "\n";
}

void run_voxelize(Cli& c) {
  const auto mesh = read_obj(c.mesh);
  const auto grid = voxelize_mesh(mesh, patch_bounds(c.cfg.terrain, c.cfg.resolution));
  write_voxg(c.out, grid);
  const auto& d = grid.meta().dims;
  std::cout << "dims=" << d[0] << "," << d[1] << "," << d[2] << "\noccupied=" << grid.count() << "\n";
}

void run_collect(Cli& c) {
  const auto grid = read_voxg(c.grid);
  CollectConfig cc;
  cc.n_total = c.cfg.trials;
  cc.seed = c.cfg.seed;
  cc.jobs = c.cfg.jobs;
  cc.sampling = c.cfg.sampling;
  cc.motion = c.cfg.motion;
  cc.randomization = c.cfg.randomization;
  const auto trav = collect(grid, c.cfg.robot, cc);
  write_trav(c.out, trav);
  std::cout << "entries=" << trav.entries.size() << "\nvoxels=" << trav.voxels().size() << "\n";
}

void run_windows(Cli& c) {
  if (c.grids.size() != c.travs.size()) throw UsageError("--grid and --trav must be given the same number of times");
  Dataset ds;
  ds.head = c.cfg.head;
  for (std::size_t n = 0; n < c.grids.size(); ++n) {
    const auto grid = read_voxg(c.grids[n]);
    const auto trav = read_trav(c.travs[n]);
    WindowSampling ws;
    ws.count = c.cfg.window_count;
    ws.seed = mix_seed(c.augment_seed.value_or(c.cfg.seed), n);
    ws.jobs = c.cfg.jobs;
    ws.augment = c.cfg.augment;
    auto part = sample_windows(grid, trav, c.cfg.head, ws);
    for (auto& w : part.windows) ds.windows.push_back(std::move(w));
  }
  write_dataset(c.out, ds);
  std::size_t in = 0, labels = 0;
  for (const auto& w : ds.windows) in += w.input.size(), labels += w.labels.size();
  std::cout << "windows=" << ds.windows.size() << "\ninput_voxels=" << in << "\nlabelled_voxels=" << labels << "\n";
}

void run_train(Cli& c) {
  const auto train_set = read_dataset(c.train_path);
  const auto val = c.val_path.empty() ? Dataset{} : read_dataset(c.val_path);
  if (!val.windows.empty() && val.head != train_set.head) throw UsageError("train and val heads differ");
  c.cfg.head = train_set.head;
  auto tc = c.cfg.train;
  tc.seed = c.cfg.seed;
  Model<float> model(c.cfg.model_spec());
  const std::string log_path = c.log.empty() ? c.out + ".log" : c.log;
  std::ofstream log(log_path, std::ios::trunc);
  if (!log) throw UsageError("cannot open '" + log_path + "' for writing");
  train(model, train_set, val, tc, [&log](const TrainRecord& r) {
    const auto line = format_record(r);
    log << line << "\n";
    std::cout << line << "\n";
  });
  save_checkpoint(c.out, model);
  std::cout << "parameters=" << model.parameter_count() << "\n";
}

void run_eval(Cli& c) {
  auto model = load_checkpoint(c.model);
  model.set_prune_threshold(c.cfg.prune_threshold);
  const auto ds = read_dataset(c.ds);
  const auto report = evaluate(model, ds);
  std::ostringstream o;
  write_report(o, report);
  std::cout << o.str();
  if (!c.out.empty()) write_text(c.out, o.str());
}

void run_predict(Cli& c) {
  auto model = load_checkpoint(c.model);
  model.set_prune_threshold(c.cfg.prune_threshold);
  const auto grid = read_voxg(c.grid);
  const auto p = parse_tuple(c.pose, 4, "--pose");
  const auto center = world_to_index(grid.meta(), {p[0], p[1], p[2]});
  if (!center) throw UsageError("--pose lies outside the grid");
  const auto pred = predict_world(model, grid, *center, p[3]);
  write_prediction(c.out, pred);
  if (!c.obj.empty()) write_text(c.obj, format_colored_obj(pred));
  std::cout << "predicted_voxels=" << pred.scores.size() << "\n";
}

void run_plan(Cli& c) {
  const auto pred = read_prediction(c.pred);
  const auto graph = build_graph(pred.total(), pred.meta, c.cfg.tau, c.cfg.lambda);
  auto endpoint = [&](const std::string& text, const char* what) {
    const Vec3 p = parse_point(text, what);
    if (c.snap) {
      if (auto v = nearest_node(graph, p)) return *v;
      throw NotTraversable(what, Index3{});
    }
    const auto v = world_to_index(pred.meta, p);
    if (!v) throw UsageError(std::string(what) + " lies outside the grid");
    return *v;
  };
  const Index3 s = endpoint(c.start, "start"), g = endpoint(c.goal, "goal");
  const auto path = dijkstra(graph, s, g);
  std::ostringstream o;
  if (path) {
    o << "reachable=true\n";
    write_path(o, *path, pred.meta);
  } else {
    o << "reachable=false\n";
  }
  write_text(c.out, o.str());
  std::cout << "nodes=" << graph.size() << "\n" << o.str().substr(0, o.str().find("# x"));
}

}  // namespace

int main(int argc, char** argv) {
  Cli c;
  CLI::App app{"voxtrav: sparse voxel traversability pipeline"};
  app.footer(config_help() + "\nThe config file may also be named by the VOXTRAV_CONFIG environment variable.\n"
                             "Exit codes: 0 ok, 1 usage or config error, 2 malformed input file, 3 numeric failure.");
  app.require_subcommand(1, 1);
  app.fallthrough();
  app.add_option("--config", c.config_path, "key = value config file");
  app.add_option("--set", c.sets, "override one config key (key=value); repeatable");

  auto* terrain = app.add_subcommand("terrain", "generate a terrain mesh (OBJ)");
  terrain->add_option("--seed", c.seed, "terrain seed");
  terrain->add_option("--mode", c.mode, "smooth|stepped");
  terrain->add_option("--out", c.out, "output mesh")->required();

  auto* voxelize = app.add_subcommand("voxelize", "mesh -> occupancy grid (VOXG)");
  voxelize->add_option("--mesh", c.mesh, "input OBJ")->required();
  voxelize->add_option("--res", c.res, "voxel edge (m)");
  voxelize->add_option("--out", c.out, "output grid")->required();

  auto* collect_cmd = app.add_subcommand("collect", "label a grid with the traversal oracle (TRAV)");
  collect_cmd->add_option("--grid", c.grid, "input VOXG")->required();
  collect_cmd->add_option("--trials", c.trials, "trials per pose and command");
  collect_cmd->add_option("--seed", c.seed, "trial seed");
  collect_cmd->add_option("--jobs", c.jobs, "worker threads");
  collect_cmd->add_option("--out", c.out, "output TRAV")->required();

  auto* windows = app.add_subcommand("windows", "sample robot-centric training windows (TWND)");
  windows->add_option("--grid", c.grids, "input VOXG; repeat for several patches")->required();
  windows->add_option("--trav", c.travs, "matching TRAV; repeat in the same order")->required();
  windows->add_option("--head", c.head, "total|dir4|orient");
  windows->add_option("--augment-seed", c.augment_seed, "sampling and augmentation seed");
  windows->add_option("--count", c.count, "windows per patch");
  windows->add_option("--jobs", c.jobs, "worker threads");
  windows->add_option("--out", c.out, "output dataset")->required();

  auto* train_cmd = app.add_subcommand("train", "fit the network (VTCK checkpoint + metrics log)");
  train_cmd->add_option("--train", c.train_path, "training dataset")->required();
  train_cmd->add_option("--val", c.val_path, "validation dataset");
  train_cmd->add_option("--steps", c.steps, "optimizer steps");
  train_cmd->add_option("--batch", c.batch, "windows per step");
  train_cmd->add_option("--lr", c.lr, "peak learning rate");
  train_cmd->add_option("--seed", c.seed, "initialisation and batch seed");
  train_cmd->add_option("--variant", c.variant, "m2|m1");
  train_cmd->add_option("--log", c.log, "metrics log (default: <out>.log)");
  train_cmd->add_option("--out", c.out, "output checkpoint")->required();

  auto* eval_cmd = app.add_subcommand("eval", "RMSE of a checkpoint on a dataset");
  eval_cmd->add_option("--ds", c.ds, "dataset")->required();
  eval_cmd->add_option("--model", c.model, "checkpoint")->required();
  eval_cmd->add_option("--out", c.out, "also write the report here");

  auto* predict = app.add_subcommand("predict", "scores around a pose (TPRD)");
  predict->add_option("--grid", c.grid, "input VOXG")->required();
  predict->add_option("--pose", c.pose, "x,y,z,yaw (meters, radians)")->required();
  predict->add_option("--model", c.model, "checkpoint")->required();
  predict->add_option("--out", c.out, "output prediction")->required();
  predict->add_option("--obj", c.obj, "optional colored OBJ of the scores");

  auto* plan = app.add_subcommand("plan", "risk-aware path over a prediction");
  plan->add_option("--pred", c.pred, "input TPRD")->required();
  plan->add_option("--start", c.start, "x,y,z (m)")->required();
  plan->add_option("--goal", c.goal, "x,y,z (m)")->required();
  plan->add_option("--lambda", c.lambda, "risk weight");
  plan->add_option("--tau", c.tau, "node threshold");
  plan->add_flag("--snap", c.snap, "move start and goal to the nearest node");
  plan->add_option("--out", c.out, "output path file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: usage: " << e.what() << "\n";
    return 1;
  }

  try {
    c.resolve();
    if (*terrain) run_terrain(c);
    if (*voxelize) run_voxelize(c);
    if (*collect_cmd) run_collect(c);
    if (*windows) run_windows(c);
    if (*train_cmd) run_train(c);
    if (*eval_cmd) run_eval(c);
    if (*predict) run_predict(c);
    if (*plan) run_plan(c);
  } catch (const FormatError& e) {
    std::cerr << "error: format: " << e.what() << "\n";
    return 2;
  } catch (const NumericError& e) {
    std::cerr << "error: numeric: " << e.what() << "\n";
    return 3;
  } catch (const UsageError& e) {
    std::cerr << "error: usage: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: internal: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
