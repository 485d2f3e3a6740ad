#include <gtest/gtest.h>

#include "reference.hpp"

using namespace voxtrav;
using namespace voxtrav::test;

TEST(ModelSpec, VariantsAndShapes) {
  const auto m2 = ModelSpec::variant("m2", 1);
  EXPECT_EQ(m2.skips.size(), 2u);
  EXPECT_EQ(m2.enc_channels, (std::vector<int>{8, 16, 32, 64, 128}));
  EXPECT_EQ(ModelSpec::variant("m1", 4).skips.size(), 4u);
  EXPECT_THROW(ModelSpec::variant("m3", 1), UsageError);
  Model<float> m(m2);
  EXPECT_EQ(m.param(m.enc(0).conv).shape, (std::vector<std::uint32_t>{64, 1, 8}));
  EXPECT_EQ(m.param(m.dec(4).tconv).shape, (std::vector<std::uint32_t>{64, 128, 64}));
  EXPECT_EQ(m.param(m.dec(0).tconv).shape, (std::vector<std::uint32_t>{64, 8, 8}));
  EXPECT_EQ(m.param(m.head_w()).shape, (std::vector<std::uint32_t>{8, 1}));
  ModelSpec bad = m2;
  bad.skips = {0};
  EXPECT_THROW(Model<float>{bad}, UsageError);
}

TEST(Model, TinyHasFewParameters) {
  Model<double> m(tiny_spec());
  EXPECT_LE(m.parameter_count(), 200u);
  EXPECT_GT(m.parameter_count(), 100u);
}

TEST(Model, EmptyWindowGivesEmptyPrediction) {
  Model<float> m(ModelSpec::variant("m2", 1));
  m.init(1);
  EXPECT_TRUE(predict_window(m, {}).scores.empty());
}

TEST(Model, OutputsInUnitIntervalAndDeterministic) {
  Model<float> m(ModelSpec::variant("m1", 4));
  m.init(3);
  // bias pruning open so that every level keeps coordinates
  for (int l = 0; l < m.spec().levels(); ++l) m.param(m.dec(l).prune_b).value[0] = 5.f;
  Rng rng(4);
  std::vector<Index3> in;
  for (int i = 30; i < 50; ++i)
    for (int j = 30; j < 50; ++j) in.push_back({i, j, 18 + static_cast<int>(uniform_int(rng, 0, 1))});
  std::sort(in.begin(), in.end());
  const auto a = predict_window(m, in);
  ASSERT_FALSE(a.scores.empty());
  for (const auto& [v, s] : a.scores)
    for (float x : s) {
      EXPECT_GE(x, 0.f);
      EXPECT_LE(x, 1.f);
    }
  auto shuffled = in;
  std::reverse(shuffled.begin(), shuffled.end());
  const auto b = predict_window(m, shuffled);
  EXPECT_EQ(a.scores, b.scores);
}

TEST(Model, TeacherForcingMatchesTargetSupport) {
  Rng rng(5);
  Model<double> m(tiny_spec());
  m.init(6);
  const auto batch = tiny_batch(rng, 1);
  const auto masks = teacher_masks(batch, 2);
  const auto tape = forward(m, batch.input, true, &masks);
  for (int l = 0; l < 2; ++l) {
    const auto& D = tape.dec[static_cast<std::size_t>(l)];
    // kept support = generated coordinates that are targets
    std::vector<std::uint64_t> want;
    std::set_intersection(D.u.keys.begin(), D.u.keys.end(), masks[static_cast<std::size_t>(l)].begin(),
                          masks[static_cast<std::size_t>(l)].end(), std::back_inserter(want));
    EXPECT_EQ(D.out.keys, want);
    EXPECT_LE(D.out.size(), D.u.size());
  }
  // labels on occupied voxels are always regenerated
  const auto on_input = tiny_batch(rng, 1, 2, 0);
  const auto m2 = teacher_masks(on_input, 2);
  EXPECT_EQ(forward(m, on_input.input, true, &m2).dec[0].out.keys, on_input.target);
}

TEST(Loss, PositiveWeightClamp) {
  const LossConfig cfg{};
  EXPECT_EQ(positive_weight(10, 5, cfg), 1.0);
  EXPECT_EQ(positive_weight(10, 50, cfg), 5.0);
  EXPECT_EQ(positive_weight(1, 500, cfg), 100.0);
  Rng rng(7);
  Model<double> m(tiny_spec());
  m.init(8);
  const auto batch = tiny_batch(rng, 1);
  Tape<double> tape;
  const auto rep = loss_and_grads(m, batch, cfg, &tape);
  const auto masks = teacher_masks(batch, 2);
  for (int l = 0; l < 2; ++l) {
    const auto y = member_mask(tape.dec[static_cast<std::size_t>(l)].u.keys, masks[static_cast<std::size_t>(l)]);
    std::size_t pos = 0;
    for (auto v : y) pos += v;
    EXPECT_EQ(rep.pos_weight[static_cast<std::size_t>(l)],
              std::clamp(static_cast<double>(y.size() - pos) / static_cast<double>(pos), 1.0, 100.0));
  }
}

TEST(Loss, PerfectScoresGiveZeroMse) {
  Rng rng(9);
  Model<float> m(tiny_spec(4));
  m.init(10);
  auto batch = tiny_batch(rng, 4, 2, 0);
  const auto masks = teacher_masks(batch, 2);
  const auto tape = forward(m, batch.input, true, &masks);
  ASSERT_EQ(tape.scores.keys, batch.target);
  batch.labels = tape.scores.feats;
  const auto rep = loss_and_grads(m, batch, LossConfig{});
  EXPECT_EQ(rep.mse, 0.0);
  EXPECT_GT(rep.true_positives, 0u);
}

TEST(Gradients, TinyModelMatchesFiniteDifferences) {
  for (int head : {1, 4}) {
    for (bool skip : {true, false}) {
      Rng rng(11 + static_cast<std::uint64_t>(head));
      Model<double> m(tiny_spec(head, skip));
      m.init(12);
      // perturb batch-norm affine terms away from their identity init
      for (auto& p : m.params())
        if (p.trainable && p.shape.size() == 1)
          for (auto& v : p.value) v += uniform(rng, -0.3, 0.3);
      const auto batch = tiny_batch(rng, head);
      const auto res = gradient_check(m, batch, 20, 13);
      EXPECT_LT(res.worst_rel, 1e-4) << "head " << head << " skip " << skip;
    }
  }
}

TEST(Gradients, EveryTensorSeparately) {
  Rng rng(21);
  Model<double> m(tiny_spec(4, true));
  m.init(22);
  const auto batch = tiny_batch(rng, 4);
  for (std::size_t n = 0; n < m.params().size(); ++n) {
    if (!m.params()[n].trainable) continue;
    const auto res = gradient_check(m, batch, 3, 23 + n, 1e-5, static_cast<int>(n));
    EXPECT_LT(res.worst_rel, 1e-4) << m.params()[n].name;
  }
}
