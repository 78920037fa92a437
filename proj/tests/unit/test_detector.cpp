#include <gtest/gtest.h>

#include "../support/gradcheck.hpp"
#include "../support/scenes.hpp"
#include "../support/tempdir.hpp"
#include "marss2l/model_io.hpp"

using namespace marss2l;
using testing_support::textured_scene;

namespace {

TrainingExample constant_example(int size = 16) {
  TrainingExample e;
  e.input = nn::Tensor<float>(1, nn::kInputChannels, size, size, 0.5f);
  e.mask = Mask(size, size, 0);
  e.delta_ch4 = Plane(size, size, 0.0f);
  for (int y = 4; y < 8; ++y)
    for (int x = 4; x < 8; ++x) {
      e.mask(x, y) = 1;
      e.delta_ch4(x, y) = 0.4f;
    }
  return e;
}

std::vector<ValidationScene> constant_validation(int size = 16) {
  std::vector<ValidationScene> v(2);
  for (int i = 0; i < 2; ++i) {
    v[i].input = nn::Tensor<float>(1, nn::kInputChannels, size, size, float(i));
    v[i].excluded = Mask(size, size, 0);
    v[i].has_plume = i == 1;
  }
  return v;
}

TrainConfig micro_config() {
  TrainConfig c;
  c.base_width = 2;
  c.depth = 2;
  c.batch_size = 2;
  c.steps_per_epoch = 2;
  c.max_epochs = 20;
  c.patience = 3;
  c.alpha = 5.0;
  c.component_pixels = 1;
  return c;
}

}  // namespace

TEST(Input, SixteenPlanesWithBroadcastWind) {
  SceneImage s = textured_scene(16, 16, 1);
  s.wind_u = 3.0;
  s.wind_v = -4.0;
  RetrievalProduct r = mbmp(s, s);
  nn::Tensor<float> t = raw_input(s, s, r);
  EXPECT_EQ(t.c, 16);
  for (std::size_t i = 0; i < t.plane_size(); ++i) {
    EXPECT_EQ(t.plane(0, kWindUChannel)[i], 3.0f);
    EXPECT_EQ(t.plane(0, kWindVChannel)[i], -4.0f);
    EXPECT_NEAR(t.plane(0, kRatioChannel)[i], 1.0f, 1e-6);
    EXPECT_EQ(t.plane(0, 4)[i], s.bands[4][i]);
    EXPECT_EQ(t.plane(0, 10)[i], s.bands[4][i]);
  }
  ChannelStats st = ChannelStats::identity();
  st.mean[kWindUChannel] = 1.0;
  st.std[kWindUChannel] = 2.0;
  st.mean[kRatioChannel] = 1.0;
  nn::Tensor<float> z = assemble_input(s, s, r, st);
  EXPECT_EQ(z.plane(0, kWindUChannel)[7], 1.0f);
  EXPECT_NEAR(z.plane(0, kRatioChannel)[7], 0.0f, 1e-6);
  EXPECT_THROW(raw_input(s, textured_scene(16, 8, 1), r), ArgumentError);
}

TEST(Input, ChannelStatsSkipCloudyPixels) {
  nn::Tensor<float> t(1, nn::kInputChannels, 2, 1, 0.0f);
  t.plane(0, 0)[0] = 1.0f;
  t.plane(0, 0)[1] = 100.0f;
  t.plane(0, kCloudChannel)[1] = 1.0f;
  std::vector<nn::Tensor<float>> v{t};
  ChannelStats s = compute_channel_stats(v);
  EXPECT_EQ(s.mean[0], 1.0);
  EXPECT_EQ(s.std[0], 1.0);  // single value: degenerate spread
  EXPECT_EQ(s.mean[kCloudChannel], 0.5);
}

TEST(Forward, ShapeAndZeroWeights) {
  auto p = nn::init_params<float>(nn::UNetConfig::with_base_width(2, 4), 3);
  nn::Tensor<float> x(1, 16, 64, 64, 0.3f);
  auto out = nn::predict_probabilities(p, x);
  EXPECT_EQ(out.h, 64);
  EXPECT_EQ(out.w, 64);
  for (const auto& t : p.table)
    if (t.trainable) std::fill_n(p.values.begin() + std::ptrdiff_t(t.offset), t.count, 0.0f);
  for (float v : nn::predict_probabilities(p, x).data) EXPECT_EQ(v, 0.5f);
  auto again = nn::predict_probabilities(p, x);
  EXPECT_EQ(again.data, nn::predict_probabilities(p, x).data);
}

TEST(Loss, AnalyticValues) {
  nn::Tensor<double> z(1, 1, 2, 2, 0.0), y(1, 1, 2, 2, 0.0), w(1, 1, 2, 2, 1.0);
  EXPECT_NEAR(nn::weighted_bce(z, y, w, nullptr), std::log(2.0), 1e-12);
  nn::Tensor<double> perfect(1, 1, 2, 2, -40.0), g;
  EXPECT_NEAR(nn::weighted_bce(perfect, y, w, &g), -std::log(1.0 - 1e-7), 1e-9);
  for (double v : g.data) EXPECT_EQ(v, 0.0);
}

TEST(Loss, HigherConcentrationWeighsMore) {
  nn::Tensor<float> y(1, 1, 1, 2, 1.0f), d(1, 1, 1, 2);
  d.data = {0.3f, 0.6f};
  auto w = nn::pixel_weights(y, d, 5.0);
  nn::Tensor<double> z(1, 1, 1, 2, -0.5), yd(1, 1, 1, 2, 1.0), wa(1, 1, 1, 1), wb(1, 1, 1, 1);
  nn::Tensor<double> z1(1, 1, 1, 1, -0.5), y1(1, 1, 1, 1, 1.0);
  wa.data = {double(w.data[0])};
  wb.data = {double(w.data[1])};
  EXPECT_GT(nn::weighted_bce(z1, y1, wb, nullptr), nn::weighted_bce(z1, y1, wa, nullptr));
  EXPECT_NEAR(alpha_for_median_weight({0.1, 0.2, 0.5}, 5.0), 4.0 / 0.2, 1e-12);
}

TEST(Backward, CentralDifferencesAtCoarseStep) {
  for (std::uint64_t seed : {4u, 5u}) {
    auto problem = oracle::micro_problem(seed);
    for (const auto& [name, err] : oracle::gradient_errors(problem, 1e-3)) EXPECT_LT(err, 1e-4) << name;
  }
}

TEST(Backward, ZeroedSkipChannelGetsNoGradient) {
  auto problem = oracle::micro_problem(6);
  // Zero every decoder weight reading the first skip channel of the shallowest level;
  // the first encoder's output channel 0 then has no path to the loss through that skip,
  // so the matching weight slice in the decoder conv gets zero gradient only if its input is zero.
  auto& p = problem.params;
  const auto& enc = p.info("enc0.conv.weight");
  const auto& gamma = p.info("enc0.bn.gamma");
  const auto& beta = p.info("enc0.bn.beta");
  // Kill encoder channel 0: gamma = beta = 0 makes its activation identically zero.
  p.values[gamma.offset] = 0.0;
  p.values[beta.offset] = 0.0;
  nn::ForwardCache<double> cache;
  auto logits = nn::forward_logits(p, problem.x, nn::Mode::train, &cache, false);
  nn::Tensor<double> g;
  nn::weighted_bce(logits, problem.target, problem.weight, &g);
  std::vector<double> grad;
  nn::backward(p, cache, g, grad);
  const std::size_t per_out = enc.count / std::size_t(enc.shape[0]);
  for (std::size_t i = 0; i < per_out; ++i) EXPECT_EQ(grad[enc.offset + i], 0.0);
}

TEST(Adam, ConstantGradientStepApproachesLearningRate) {
  auto p = nn::make_params<double>(nn::UNetConfig::with_base_width(2, 2));
  nn::Adam<double> opt(p, {.lr = 0.01, .weight_decay = 0.0});
  std::size_t i = p.info("head.bias").offset;
  std::vector<double> g(p.values.size(), 0.0);
  g[i] = 0.7;
  double before = 0;
  for (int s = 0; s < 200; ++s) {
    before = p.values[i];
    opt.step(p, g);
  }
  EXPECT_NEAR(before - p.values[i], 0.01, 1e-6);
}

TEST(Adam, EqualSeedsGiveBitwiseEqualParams) {
  auto run = [] {
    auto p = nn::init_params<double>(nn::UNetConfig::with_base_width(2, 2), 17);
    nn::Adam<double> opt(p, {.lr = 1e-3, .weight_decay = 1e-6});
    Rng rng(3);
    for (int s = 0; s < 5; ++s) {
      std::vector<double> g(p.values.size());
      for (double& v : g) v = normal(rng);
      opt.step(p, g);
    }
    return p.values;
  };
  EXPECT_EQ(run(), run());
}

TEST(Train, PatienceStopsOnConstantData) {
  TrainingExample e = constant_example();
  auto val = constant_validation();
  TrainResult r = train([&](Rng&) { return e; }, val, ChannelStats::identity(), micro_config());
  EXPECT_LE(r.history.size(), 4u);
  EXPECT_EQ(r.best_epoch, 1);
}

TEST(Train, DefaultsAccepted) {
  TrainConfig c;
  EXPECT_EQ(c.learning_rate, 5e-4);
  EXPECT_EQ(c.weight_decay, 1e-6);
  EXPECT_NO_THROW(c.validate());
  c.learning_rate = 0;
  EXPECT_THROW(c.validate(), ArgumentError);
  TrainConfig m = micro_config();
  TrainingExample e = constant_example();
  auto val = constant_validation();
  EXPECT_THROW(train([&](Rng&) { return e; }, {}, ChannelStats::identity(), m), ArgumentError);
}

TEST(Train, IdenticalSeedsReproduce) {
  TrainConfig c = micro_config();
  c.max_epochs = 2;
  TrainingExample e = constant_example();
  auto val = constant_validation();
  auto src = [&](Rng& rng) {
    TrainingExample x = e;
    for (float& v : x.input.data) v += float(uniform01(rng));
    return x;
  };
  auto a = train(src, val, ChannelStats::identity(), c);
  auto b = train(src, val, ChannelStats::identity(), c);
  EXPECT_EQ(a.detector.params.values, b.detector.params.values);
}

TEST(Finetune, StepBookkeepingAndEmptySet) {
  Detector d;
  d.params = nn::init_params<float>(nn::UNetConfig::with_base_width(2, 2), 1);
  auto none = finetune_offshore(d, {});
  EXPECT_EQ(none.steps, 0u);
  EXPECT_EQ(none.detector.params.values, d.params.values);
  EXPECT_EQ(none.detector.tag, "base");
  std::vector<TrainingExample> ex(11, constant_example());
  auto r = finetune_offshore(d, ex, 4);
  EXPECT_EQ(r.steps, 3u);
  EXPECT_EQ(r.detector.tag, "offshore");
  EXPECT_NE(r.detector.params.values, d.params.values);
}

TEST(ModelIo, RoundTripIsBitwise) {
  testing_support::TempDir dir("model");
  Detector d;
  d.params = nn::init_params<float>(nn::UNetConfig::with_base_width(3, 3), 8);
  d.stats.mean[2] = 0.25;
  d.stats.std[2] = 0.5;
  d.alpha = 13.5;
  d.seed = 77;
  save_model(d, dir / "m.bin");
  Detector back = load_model(dir / "m.bin");
  EXPECT_EQ(back.params.values, d.params.values);
  EXPECT_EQ(back.stats, d.stats);
  EXPECT_EQ(back.alpha, d.alpha);
  EXPECT_EQ(back.seed, d.seed);
  EXPECT_EQ(encode_model(back), encode_model(d));
}

TEST(ModelIo, CorruptionIsDetected) {
  Detector d;
  d.params = nn::init_params<float>(nn::UNetConfig::with_base_width(2, 2), 8);
  std::string bytes = encode_model(d);
  EXPECT_THROW(decode_model(bytes + "x"), IntegrityError);
  EXPECT_THROW(decode_model(bytes.substr(0, bytes.size() - 4)), FormatError);
  std::string bad = bytes;
  bad[6] = '#';
  EXPECT_THROW(decode_model(bad), FormatError);
  bad = bytes;
  float nan = std::numeric_limits<float>::quiet_NaN();
  std::memcpy(bad.data() + bad.size() - 4, &nan, 4);
  EXPECT_THROW(decode_model(bad), IntegrityError);
}
