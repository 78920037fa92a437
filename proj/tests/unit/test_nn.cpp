#include <gtest/gtest.h>

#include "../support/gradcheck.hpp"
#include "marss2l/nn/adam.hpp"

using namespace marss2l;
using namespace marss2l::nn;

TEST(UNet, MicroGradientMatchesFiniteDifferences) {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    auto problem = oracle::micro_problem(seed);
    for (const auto& [name, err] : oracle::gradient_errors(problem)) EXPECT_LT(err, 1e-4) << name << " seed " << seed;
  }
}

TEST(UNet, RejectsIndivisibleInput) {
  auto p = init_params<float>(UNetConfig::with_base_width(2, 2), 1);
  Tensor<float> x(1, 16, 6, 8);
  EXPECT_THROW(predict_probabilities(p, x), ArgumentError);
  Tensor<float> y(1, 15, 8, 8);
  EXPECT_THROW(predict_probabilities(p, y), ArgumentError);
}

TEST(UNet, ParameterTableIsContiguous) {
  auto p = make_params<float>(UNetConfig{});
  std::size_t off = 0;
  for (const auto& t : p.table) {
    EXPECT_EQ(t.offset, off);
    off += t.count;
  }
  EXPECT_EQ(off, p.values.size());
  EXPECT_FALSE(p.info("enc0.bn.running_var").trainable);
  EXPECT_EQ(p.values[p.info("enc0.bn.running_var").offset], 1.0f);
}

TEST(UNet, EvalModeIsBatchIndependent) {
  auto p = init_params<float>(UNetConfig::with_base_width(2, 2), 4);
  Rng rng(9);
  Tensor<float> a(2, 16, 8, 8);
  for (float& v : a.data) v = float(normal(rng, 0, 1));
  Tensor<float> one(1, 16, 8, 8);
  std::copy_n(a.data.begin(), one.size(), one.data.begin());
  auto pa = predict_probabilities(p, a), po = predict_probabilities(p, one);
  for (std::size_t i = 0; i < po.size(); ++i) EXPECT_FLOAT_EQ(pa.data[i], po.data[i]);
}

TEST(UNet, TrainForwardUpdatesRunningStatistics) {
  auto p = init_params<double>(UNetConfig::with_base_width(2, 2), 4);
  Tensor<double> x(2, 16, 8, 8, 3.0);
  x.data[5] = 4.0;
  auto before = p.values[p.info("enc0.bn.running_mean").offset];
  forward_logits(p, x, Mode::train, nullptr, true);
  EXPECT_NE(before, p.values[p.info("enc0.bn.running_mean").offset]);
}

TEST(Loss, WeightedBceMatchesClosedForm) {
  Tensor<double> z(1, 1, 1, 2), y(1, 1, 1, 2), w(1, 1, 1, 2);
  z.data = {0.0, 2.0};
  y.data = {1.0, 0.0};
  w.data = {3.0, 1.0};
  Tensor<double> g;
  double l = weighted_bce(z, y, w, &g);
  double p1 = 1 / (1 + std::exp(-2.0));
  EXPECT_NEAR(l, (3 * std::log(2.0) - std::log(1 - p1)) / 2, 1e-12);
  EXPECT_NEAR(g.data[0], 3 * (0.5 - 1) / 2, 1e-12);
  EXPECT_NEAR(g.data[1], p1 / 2, 1e-12);
}

TEST(Loss, ClampedPixelsHaveZeroGradient) {
  Tensor<double> z(1, 1, 1, 1, 40.0), y(1, 1, 1, 1, 0.0), w(1, 1, 1, 1, 1.0), g;
  double l = weighted_bce(z, y, w, &g);
  EXPECT_NEAR(l, -std::log(1e-7), 1e-9);
  EXPECT_EQ(g.data[0], 0.0);
}

TEST(Loss, PositiveWeightsGrowWithConcentration) {
  Tensor<float> y(1, 1, 1, 3), d(1, 1, 1, 3);
  y.data = {0, 1, 1};
  d.data = {5, 0.5, 1.0};
  auto w = pixel_weights(y, d, 8.0);
  EXPECT_FLOAT_EQ(w.data[0], 1.0f);
  EXPECT_FLOAT_EQ(w.data[1], 5.0f);
  EXPECT_FLOAT_EQ(w.data[2], 9.0f);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  auto p = make_params<double>(UNetConfig::with_base_width(2, 2));
  Adam<double> opt(p, {.lr = 0.01, .weight_decay = 0.0});
  std::vector<double> g(p.values.size(), 0.0);
  std::size_t i = p.info("head.bias").offset, r = p.info("enc0.bn.running_mean").offset;
  g[i] = -3.0;
  g[r] = 5.0;
  opt.step(p, g);
  EXPECT_NEAR(p.values[i], 0.01, 1e-8);
  EXPECT_EQ(p.values[r], 0.0);
}

TEST(Adam, DecoupledDecayShrinksWeights) {
  auto p = make_params<double>(UNetConfig::with_base_width(2, 2));
  std::size_t i = p.info("head.weight").offset;
  p.values[i] = 2.0;
  Adam<double> opt(p, {.lr = 0.1, .weight_decay = 0.5});
  opt.step(p, std::vector<double>(p.values.size(), 0.0));
  EXPECT_NEAR(p.values[i], 2.0 * (1 - 0.05), 1e-12);
}
