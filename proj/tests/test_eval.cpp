#include <gtest/gtest.h>

#include "voxtrav/eval.hpp"

using namespace voxtrav;

namespace {

Label label(std::vector<float> v) {
  Label l;
  l.present.assign(v.size(), 1);
  l.value = std::move(v);
  return l;
}

}  // namespace

TEST(Classify, Partitions) {
  std::map<Index3, std::vector<float>> pred{{{0, 0, 0}, {1}}, {{1, 0, 0}, {1}}};
  std::map<Index3, Label> target{{{1, 0, 0}, label({1})}, {{2, 0, 0}, label({1})}};
  auto c = classify(pred, target);
  EXPECT_EQ(c.tp, (std::vector<Index3>{{1, 0, 0}}));
  EXPECT_EQ(c.fp, (std::vector<Index3>{{0, 0, 0}}));
  EXPECT_EQ(c.fn, (std::vector<Index3>{{2, 0, 0}}));
  c = classify(std::map<Index3, std::vector<float>>{}, target);
  EXPECT_EQ(c.fn.size(), 2u);
  EXPECT_TRUE(c.tp.empty() && c.fp.empty());
}

TEST(Classify, MatchesSetAlgebra) {
  Rng rng(1);
  for (int t = 0; t < 50; ++t) {
    std::map<Index3, std::vector<float>> pred;
    std::map<Index3, Label> target;
    std::set<Index3> a, b;
    for (int n = 0; n < 40; ++n) {
      const Index3 v{static_cast<int>(uniform_int(rng, 0, 4)), static_cast<int>(uniform_int(rng, 0, 4)), 0};
      if (uniform01(rng) < 0.5) {
        pred[v] = {0.5f};
        a.insert(v);
      } else {
        target[v] = label({0.5f});
        b.insert(v);
      }
    }
    const auto c = classify(pred, target);
    std::vector<Index3> tp, fp, fn;
    std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(tp));
    std::set_difference(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(fp));
    std::set_difference(b.begin(), b.end(), a.begin(), a.end(), std::back_inserter(fn));
    EXPECT_EQ(c.tp, tp);
    EXPECT_EQ(c.fp, fp);
    EXPECT_EQ(c.fn, fn);
  }
}

TEST(Rmse, HandComputedCases) {
  std::map<Index3, Label> t{{{0, 0, 0}, label({0.7f})}};
  EXPECT_EQ(rmse({{{0, 0, 0}, {0.7f}}}, t, 1).rmse, 0.0);
  // one exact TP, one FP at 0.5
  const auto r = rmse({{{0, 0, 0}, {0.7f}}, {{1, 0, 0}, {0.5f}}}, t, 1);
  EXPECT_EQ(*r.rmse, std::sqrt(0.25 / 2));
  EXPECT_EQ(r.tp, 1u);
  EXPECT_EQ(r.fp, 1u);
  // one FN with label 1
  EXPECT_EQ(*rmse({}, {{{0, 0, 0}, label({1.f})}}, 1).rmse, 1.0);
  EXPECT_FALSE(rmse({}, {}, 1).rmse.has_value());
}

TEST(Rmse, ChannelsAveragePresentOnly) {
  Label l = label({1.f, 0.f, 0.f, 1.f});
  l.present = {1, 1, 0, 0};
  const auto r = rmse({{{0, 0, 0}, {0.f, 0.f, 0.9f, 0.9f}}}, {{{0, 0, 0}, l}}, 4);
  EXPECT_DOUBLE_EQ(*r.rmse, std::sqrt(0.5));
  EXPECT_EQ(*r.channel_rmse[0], 1.0);
  EXPECT_EQ(*r.channel_rmse[1], 0.0);
  EXPECT_FALSE(r.channel_rmse[2].has_value());
}

TEST(Rmse, Properties) {
  Rng rng(2);
  for (int t = 0; t < 100; ++t) {
    std::map<Index3, std::vector<float>> pred;
    std::map<Index3, Label> target;
    for (int n = 0; n < 30; ++n) {
      const Index3 v{static_cast<int>(uniform_int(rng, 0, 6)), static_cast<int>(uniform_int(rng, 0, 6)), 0};
      if (uniform01(rng) < 0.6) pred[v] = {static_cast<float>(uniform01(rng))};
      if (uniform01(rng) < 0.6) target[v] = label({static_cast<float>(uniform01(rng))});
    }
    const auto r = rmse(pred, target, 1);
    if (!r.rmse) continue;
    EXPECT_GE(*r.rmse, 0.0);
    EXPECT_LE(*r.rmse, 1.0);
    EXPECT_EQ(r.tp + r.fp + r.fn, [&] {
      std::set<Index3> u;
      for (auto& [v, s] : pred) u.insert(v);
      for (auto& [v, s] : target) u.insert(v);
      return u.size();
    }());
    // a zero-error TP far away only dilutes
    auto p2 = pred;
    auto t2 = target;
    p2[{100, 100, 100}] = {0.25f};
    t2[{100, 100, 100}] = label({0.25f});
    const auto r2 = rmse(p2, t2, 1);
    if (*r.rmse > 0) { EXPECT_LT(*r2.rmse, *r.rmse); }
    // order of accumulation does not matter: pool the two halves
    ErrorSums a(1), b(1);
    std::size_t k = 0;
    const auto cls = classify(pred, target);
    for (const auto& v : cls.tp) (k++ % 2 ? a : b).add(pred.at(v).data(), &target.at(v));
    for (const auto& v : cls.fp) (k++ % 2 ? a : b).add(pred.at(v).data(), nullptr);
    for (const auto& v : cls.fn) (k++ % 2 ? a : b).add(nullptr, &target.at(v));
    b.merge(a);
    EXPECT_NEAR(*finish(b).rmse, *r.rmse, 1e-12);
  }
}

TEST(Report, UndefinedMarker) {
  std::ostringstream o;
  write_report(o, EvalReport{});
  EXPECT_NE(o.str().find("rmse=undefined"), std::string::npos);
}
