#include <gtest/gtest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "voxtrav/config.hpp"
#include "voxtrav/eval.hpp"
#include "voxtrav/predict.hpp"
#include "voxtrav/terrain.hpp"
#include "voxtrav/train.hpp"

using namespace voxtrav;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  int code = -1;
  std::string out;  // stdout and stderr
};

Outcome voxtrav_cli(const std::string& args) {
  const std::string cmd = std::string(VOXTRAV_CLI) + " " + args + " 2>&1";
  Outcome r;
  FILE* p = popen(cmd.c_str(), "r");
  if (!p) return r;
  char buf[4096];
  for (std::size_t n; (n = fread(buf, 1, sizeof buf, p)) > 0;) r.out.append(buf, n);
  const int status = pclose(p);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// Small enough that the whole chain runs in seconds.
const char* kSmall =
    "--set terrain.patch_size=4 --set terrain.height_budget=3 --set terrain.objects_min=3 "
    "--set terrain.objects_max=6 --set terrain.diameter_max=1.5 --set window.count=4 ";

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir = fs::temp_directory_path() / ("voxtrav_cli_" + std::to_string(::getpid()) + "_" +
                                       ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::create_directories(dir);
  }
  void TearDown() override { fs::remove_all(dir); }
  std::string f(const char* name) const { return (dir / name).string(); }
  Outcome run(const std::string& args) const { return voxtrav_cli(kSmall + args); }
  fs::path dir;
};

}  // namespace

TEST_F(Cli, PipelineOutputsParseBack) {
  ASSERT_EQ(run("terrain --seed 3 --out " + f("t.obj")).code, 0);
  EXPECT_FALSE(read_obj(f("t.obj")).triangles.empty());

  const auto vox = run("voxelize --mesh " + f("t.obj") + " --out " + f("g.voxg"));
  ASSERT_EQ(vox.code, 0) << vox.out;
  EXPECT_NE(vox.out.find("config.voxel.resolution=0.1"), std::string::npos);
  const auto grid = read_voxg(f("g.voxg"));
  EXPECT_GT(grid.count(), 0u);

  ASSERT_EQ(run("collect --grid " + f("g.voxg") + " --out " + f("t.trav")).code, 0);
  EXPECT_FALSE(read_trav(f("t.trav")).entries.empty());

  ASSERT_EQ(run("windows --grid " + f("g.voxg") + " --trav " + f("t.trav") + " --out " + f("w.twnd")).code, 0);
  EXPECT_EQ(read_dataset(f("w.twnd")).windows.size(), 4u);

  const auto tr = run("train --train " + f("w.twnd") + " --val " + f("w.twnd") + " --steps 3 --batch 1 --out " +
                      f("m.vtck"));
  ASSERT_EQ(tr.code, 0) << tr.out;
  EXPECT_NE(tr.out.find("val_rmse="), std::string::npos);
  EXPECT_EQ(load_checkpoint(f("m.vtck")).spec().skips, (std::vector<int>{4, 3}));
  EXPECT_NE(slurp(f("m.vtck.log")).find("step=2 "), std::string::npos);

  const auto ev = run("eval --ds " + f("w.twnd") + " --model " + f("m.vtck") + " --out " + f("e.txt"));
  ASSERT_EQ(ev.code, 0) << ev.out;
  EXPECT_EQ(slurp(f("e.txt")).rfind("rmse=", 0), 0u);

  const auto pr = run("--set model.prune_threshold=0.01 predict --grid " + f("g.voxg") + " --pose 2,2,0,0.5 --model " +
                      f("m.vtck") + " --out " + f("p.tprd") + " --obj " + f("p.obj"));
  ASSERT_EQ(pr.code, 0) << pr.out;
  const auto pred = read_prediction(f("p.tprd"));
  ASSERT_FALSE(pred.scores.empty());
  EXPECT_EQ(pred.meta, grid.meta());

  const auto pl = run("plan --pred " + f("p.tprd") + " --start 1.5,1.5,0 --goal 2.5,2.5,0 --tau 0 --snap --out " +
                      f("path.txt"));
  ASSERT_EQ(pl.code, 0) << pl.out;
  const auto path = slurp(f("path.txt"));
  EXPECT_EQ(path.rfind("reachable=", 0), 0u);
}

TEST_F(Cli, CollectIndependentOfJobs) {
  ASSERT_EQ(run("terrain --seed 8 --out " + f("t.obj")).code, 0);
  ASSERT_EQ(run("voxelize --mesh " + f("t.obj") + " --out " + f("g.voxg")).code, 0);
  ASSERT_EQ(run("collect --grid " + f("g.voxg") + " --jobs 1 --out " + f("a.trav")).code, 0);
  ASSERT_EQ(run("collect --grid " + f("g.voxg") + " --jobs 8 --out " + f("b.trav")).code, 0);
  EXPECT_EQ(slurp(f("a.trav")), slurp(f("b.trav")));
}

TEST_F(Cli, UnknownConfigKeyIsUsageError) {
  const auto r = run("--set terrain.bogus=1 terrain --out " + f("t.obj"));
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.out.find("terrain.bogus"), std::string::npos);
  EXPECT_NE(r.out.find("error: usage"), std::string::npos);

  std::ofstream(f("bad.cfg")) << "# comment\nvoxel.resolution = 0.1\nwindow.size = 3\n";
  const auto c = voxtrav_cli("--config " + f("bad.cfg") + " terrain --out " + f("t.obj"));
  EXPECT_EQ(c.code, 1);
  EXPECT_NE(c.out.find("window.size"), std::string::npos);
}

TEST_F(Cli, ExitCodesByFailureKind) {
  std::ofstream(f("junk.voxg")) << "not a grid";
  const auto fmt = run("collect --grid " + f("junk.voxg") + " --out " + f("x.trav"));
  EXPECT_EQ(fmt.code, 2);
  EXPECT_NE(fmt.out.find("error: format"), std::string::npos);
  // config echo on stdout, then a single diagnostic line
  const auto last = fmt.out.rfind('\n', fmt.out.size() - 2);
  EXPECT_EQ(fmt.out.find("error: "), last + 1) << fmt.out;

  EXPECT_EQ(run("collect --out " + f("x.trav")).code, 1);
  EXPECT_EQ(run("train --train " + f("missing.twnd") + " --out " + f("m.vtck")).code, 1);
}

TEST_F(Cli, HelpListsEveryKey) {
  const auto r = voxtrav_cli("--help");
  EXPECT_EQ(r.code, 0);
  PipelineConfig c;
  for (const auto& k : config_keys(c)) EXPECT_NE(r.out.find(k.name), std::string::npos) << k.name;
}
