#include <gtest/gtest.h>

#include <filesystem>

#include "reference.hpp"
#include "voxtrav/train.hpp"

using namespace voxtrav;
using namespace voxtrav::test;

TEST(OneCycle, Endpoints) {
  const OneCycle s(1e-3, 5000);
  EXPECT_NEAR(s(0), 1e-3 / 25, 1e-18);
  EXPECT_EQ(s.warmup_steps(), 500);
  EXPECT_NEAR(s(500), 1e-3, 1e-18);
  EXPECT_NEAR(s(4999), 1e-3 / 25 / 1e4, 1e-15);
  for (int t = 1; t <= 500; ++t) EXPECT_GE(s(t), s(t - 1));
  for (int t = 501; t < 5000; ++t) EXPECT_LE(s(t), s(t - 1));
}

TEST(AdamW, FirstStepMovesByLearningRate) {
  Model<double> m(tiny_spec());
  m.init(1);
  auto before = m.params();
  for (auto& p : m.params())
    for (std::size_t q = 0; q < p.grad.size(); ++q) p.grad[q] = q % 2 ? 3.0 : -0.5;
  TrainConfig cfg;
  cfg.weight_decay = 0;
  AdamW<double> opt(m, cfg);
  opt.step(m, 0.01);
  for (std::size_t n = 0; n < m.params().size(); ++n) {
    const auto& p = m.params()[n];
    for (std::size_t q = 0; q < p.value.size(); ++q) {
      const double moved = p.value[q] - before[n].value[q];
      if (!p.trainable) {
        EXPECT_EQ(moved, 0.0);
      } else {
        EXPECT_NEAR(moved, q % 2 ? -0.01 : 0.01, 1e-8);
      }
    }
  }
}

TEST(AdamW, DecoupledDecayWithZeroGradient) {
  Model<double> m(tiny_spec());
  m.init(2);
  const auto before = m.params();
  m.zero_grad();
  TrainConfig cfg;
  cfg.weight_decay = 0.1;
  AdamW<double> opt(m, cfg);
  opt.step(m, 0.5);
  const auto& p = m.param(m.enc(0).conv);
  for (std::size_t q = 0; q < p.value.size(); ++q)
    EXPECT_NEAR(p.value[q], before[static_cast<std::size_t>(m.enc(0).conv)].value[q] * 0.95, 1e-12);
}

TEST(BatchIndices, DeterministicInRange) {
  const auto a = batch_indices(7, 3, 8, 5);
  EXPECT_EQ(a, batch_indices(7, 3, 8, 5));
  EXPECT_NE(a, batch_indices(7, 4, 8, 5));
  for (auto i : a) EXPECT_LT(i, 5u);
}

namespace {

Dataset tiny_dataset(int head, int windows, std::uint64_t seed) {
  Rng rng(seed);
  Dataset ds;
  ds.head = head == 1 ? Head::total : head == 4 ? Head::dir4 : Head::orient;
  for (int w = 0; w < windows; ++w) {
    Window win;
    for (int i = 0; i < 8; ++i)
      for (int j = 0; j < 8; ++j) {
        const int h = static_cast<int>(uniform_int(rng, 1, 2));
        win.input.push_back({i, j, h});
        Label l;
        for (int c = 0; c < head; ++c) {
          l.value.push_back(static_cast<float>(h == 1 ? 0.9 : 0.2));
          l.present.push_back(1);
        }
        win.labels[{i, j, h}] = l;
      }
    std::sort(win.input.begin(), win.input.end());
    ds.windows.push_back(win);
  }
  return ds;
}

}  // namespace

TEST(Train, RerunIsBitIdenticalAndLogs) {
  const auto ds = tiny_dataset(1, 3, 1);
  TrainConfig cfg;
  cfg.steps = 30;
  cfg.batch = 2;
  cfg.seed = 5;
  cfg.val_every = 10;
  cfg.log_every = 5;
  Model<float> a(tiny_spec()), b(tiny_spec());
  std::vector<std::string> lines;
  const auto ra = train(a, ds, ds, cfg, [&](const TrainRecord& r) { lines.push_back(format_record(r)); });
  train(b, ds, ds, cfg);
  EXPECT_EQ(encode_vtck(a).bytes(), encode_vtck(b).bytes());
  EXPECT_EQ(lines.size(), ra.size());
  int with_val = 0;
  for (const auto& r : ra) with_val += r.val_rmse.has_value();
  EXPECT_EQ(with_val, 3);
  EXPECT_EQ(ra.back().step, 29);
}

TEST(Train, ReducesLossOnTinyData) {
  const auto ds = tiny_dataset(1, 2, 2);
  TrainConfig cfg;
  cfg.steps = 400;
  cfg.batch = 2;
  cfg.lr = 0.01;
  cfg.val_every = 0;
  cfg.log_every = 1;
  ModelSpec spec = tiny_spec();
  spec.enc_channels = {8, 16};
  spec.final_channels = 8;
  spec.kernel = 4;
  Model<float> m(spec);
  const auto log = train(m, ds, Dataset{}, cfg);
  EXPECT_LT(log.back().loss, 0.5 * log.front().loss);
  const auto rep = evaluate(m, ds);
  ASSERT_TRUE(rep.rmse.has_value());
  EXPECT_LT(*rep.rmse, 0.15);
}

TEST(Train, NonFiniteLossAborts) {
  auto ds = tiny_dataset(1, 1, 3);
  TrainConfig cfg;
  cfg.steps = 5;
  cfg.batch = 1;
  cfg.lr = 1e30;
  Model<float> m(tiny_spec());
  try {
    train(m, ds, Dataset{}, cfg);
    FAIL() << "expected a numeric error";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("step"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("enc1.conv.weight"), std::string::npos);
  }
}

TEST(Train, RejectsBadInput) {
  Model<float> m(tiny_spec());
  EXPECT_THROW(train(m, Dataset{}, Dataset{}, TrainConfig{}), UsageError);
  EXPECT_THROW(train(m, tiny_dataset(4, 1, 1), Dataset{}, TrainConfig{}), UsageError);
}

TEST(Checkpoint, RoundTripBitwise) {
  for (const char* v : {"m1", "m2"}) {
    Model<float> m(ModelSpec::variant(v, 4));
    m.init(9);
    for (auto& p : m.params())
      if (!p.trainable)
        for (auto& x : p.value) x += 0.25f;
    const auto bytes = encode_vtck(m).bytes();
    ByteReader r(bytes);
    const auto back = decode_vtck(r);
    EXPECT_EQ(encode_vtck(back).bytes(), bytes);
    EXPECT_EQ(back.spec().skips, m.spec().skips);
    for (std::size_t n = 0; n < m.params().size(); ++n) EXPECT_EQ(back.params()[n].value, m.params()[n].value);
  }
}

TEST(Checkpoint, RejectsHeadMismatch) {
  Model<float> m(ModelSpec::variant("m2", 1));
  ByteReader r(encode_vtck(m).bytes());
  const auto want = ModelSpec::variant("m2", 4);
  try {
    decode_vtck(r, &want);
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("head.weight"), std::string::npos);
  }
  ByteReader r2(encode_vtck(m).bytes());
  const auto m1 = ModelSpec::variant("m1", 1);
  EXPECT_THROW(decode_vtck(r2, &m1), FormatError);
}

TEST(Checkpoint, TruncationAndCorruption) {
  Model<float> m(tiny_spec());
  m.init(4);
  const auto bytes = encode_vtck(m).bytes();
  for (std::size_t cut : {std::size_t{0}, std::size_t{3}, std::size_t{9}, bytes.size() / 2, bytes.size() - 1}) {
    ByteReader r(std::vector<unsigned char>(bytes.begin(), bytes.begin() + static_cast<std::ptrdiff_t>(cut)));
    EXPECT_THROW(decode_vtck(r), FormatError) << cut;
  }
  auto bad = bytes;
  bad[4] = 9;  // version
  ByteReader rv(bad);
  EXPECT_THROW(decode_vtck(rv), FormatError);
  auto extra = bytes;
  extra.push_back(0);
  ByteReader re(extra);
  EXPECT_THROW(decode_vtck(re), FormatError);
}

TEST(Checkpoint, FileRoundTrip) {
  const auto path = (std::filesystem::temp_directory_path() / "voxtrav_ckpt_test.vtck").string();
  Model<float> m(ModelSpec::variant("m2", 18));
  m.init(3);
  save_checkpoint(path, m);
  const auto spec = ModelSpec::variant("m2", 18);
  const auto back = load_checkpoint(path, &spec);
  EXPECT_EQ(encode_vtck(back).bytes(), encode_vtck(m).bytes());
  std::filesystem::remove(path);
}
