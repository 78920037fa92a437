#include <gtest/gtest.h>

#include "../support/oracles.hpp"
#include "marss2l/scene_analysis.hpp"

using namespace marss2l;
using testing_support::brute_force_scene_score;
using testing_support::random_probability_map;

namespace {

Plane blob(int w, int h, std::size_t pixels, float p) {
  Plane out(w, h, 0.0f);
  for (std::size_t i = 0; i < pixels; ++i) out(int(i % 10) + 3, int(i / 10) + 3) = p;
  return out;
}

}  // namespace

TEST(Components, SmallCases) {
  Mask m(5, 5, 0);
  EXPECT_EQ(connected_components(m).count(), 0u);
  m(2, 2) = 1;
  auto c = connected_components(m);
  ASSERT_EQ(c.count(), 1u);
  EXPECT_EQ(c.sizes[0], 1u);
  m(3, 3) = 1;
  c = connected_components(m);
  ASSERT_EQ(c.count(), 1u);
  EXPECT_EQ(c.sizes[0], 2u);
  EXPECT_EQ(connected_components(m, 4).count(), 2u);
  EXPECT_THROW(connected_components(m, 6), ArgumentError);
}

TEST(Components, MatchesFloodFill) {
  Rng rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    Mask m(31, 17, 0);
    std::vector<char> on(m.size());
    double density = uniform(rng, 0.1, 0.7);
    for (std::size_t i = 0; i < m.size(); ++i) on[i] = m[i] = bernoulli(rng, density);
    auto c = connected_components(m);
    auto oracle = testing_support::bfs_component_sizes(on, 31, 17);
    auto got = c.sizes;
    std::sort(got.begin(), got.end());
    std::sort(oracle.begin(), oracle.end());
    ASSERT_EQ(got, oracle) << trial;
    for (std::size_t i = 0; i < m.size(); ++i) ASSERT_EQ(c.labels[i] != 0, bool(m[i]));
  }
}

TEST(SceneScore, BlobAtThresholdSize) {
  EXPECT_FLOAT_EQ(scene_score(blob(20, 20, 100, 0.7f)), 0.7);
  EXPECT_EQ(scene_score(blob(20, 20, 99, 0.9f)), 0.0);
  EXPECT_EQ(scene_score(Plane(10, 10, 0.3f)), 0.3f);
  EXPECT_EQ(scene_score(Plane(9, 11, 0.3f)), 0.0);
  EXPECT_THROW(scene_score(Plane(2, 2), 0), ArgumentError);
}

TEST(SceneScore, ExcludedPixelsNeverJoinComponents) {
  Plane p = blob(20, 20, 100, 0.7f);
  Mask cloud(20, 20, 0);
  cloud(3, 3) = 1;
  EXPECT_EQ(scene_score(p, 100, &cloud), 0.0);
  EXPECT_FLOAT_EQ(scene_score(p, 99, &cloud), 0.7);
}

TEST(SceneScore, MatchesBruteForceOnRandomMaps) {
  Rng rng(11);
  for (int trial = 0; trial < 300; ++trial) {
    Plane p = random_probability_map(64, 64, rng);
    std::size_t k = 1 + uniform_index(rng, 150);
    Mask excluded(64, 64, 0);
    bool use_clouds = trial % 3 == 0;
    if (use_clouds)
      for (std::size_t i = 0; i < excluded.size(); ++i) excluded[i] = bernoulli(rng, 0.1);
    const Mask* ex = use_clouds ? &excluded : nullptr;
    ASSERT_EQ(scene_score(p, k, ex), brute_force_scene_score(p, k, ex)) << trial << " k=" << k;
  }
}

TEST(SceneScore, MonotoneInPixelsAndNonIncreasingInK) {
  Rng rng(12);
  for (int trial = 0; trial < 50; ++trial) {
    Plane p = random_probability_map(40, 40, rng);
    double prev = 1.0;
    for (std::size_t k : {1, 10, 25, 50, 100, 175, 400}) {
      double s = scene_score(p, k);
      EXPECT_LE(s, prev);
      prev = s;
    }
    double before = scene_score(p, 60);
    std::size_t i = uniform_index(rng, p.size());
    p[i] = std::min(1.0f, p[i] + 0.3f);
    EXPECT_GE(scene_score(p, 60), before);
  }
}

TEST(ExtractMask, InclusiveThreshold) {
  EXPECT_EQ(count_set(extract_mask(Plane(4, 4, 0.49f))), 0u);
  EXPECT_EQ(count_set(extract_mask(Plane(4, 4, 0.5f))), 16u);
  Plane p(3, 1, 0.0f);
  p[0] = 0.2f;
  p[1] = 0.8f;
  p[2] = 0.5f;
  Mask m = extract_mask(p);
  EXPECT_EQ(m.values()[0], 0);
  EXPECT_EQ(m.values()[1], 1);
  EXPECT_EQ(m.values()[2], 1);
}

TEST(Quantification, ImeArithmetic) {
  Mask m(20, 20, 0);
  Plane d(20, 20, 0.5f);
  EXPECT_EQ(ime(m, d), 0.0);
  for (int i = 0; i < 100; ++i) m[i] = 1;
  EXPECT_NEAR(ime(m, d), 100 * 0.5 * 100 * 0.01604, 1e-9);
  EXPECT_NEAR(ime(m, d), 80.2, 1e-9);
  Plane d2(20, 20, 1.0f);
  EXPECT_NEAR(ime(m, d2), 2 * ime(m, d), 1e-9);
  // Relabelling: the same pixel set in a different layout gives the same IME.
  Mask m2(20, 20, 0);
  for (int i = 0; i < 100; ++i) m2[399 - 3 * i] = 1;
  EXPECT_NEAR(ime(m2, d), ime(m, d), 1e-9);
}

TEST(Quantification, FluxArithmetic) {
  Mask m(20, 20, 0);
  for (int i = 0; i < 100; ++i) m[i] = 1;
  const double expected = 80.2 * (0.33 * 3.2 + 0.45) / 100.0 * 3.6;
  EXPECT_NEAR(flux(80.2, m, 3.2), expected, 1e-9);
  EXPECT_NEAR(flux(80.2, m, 3.2), 4.35, 0.005);
  EXPECT_EQ(flux(80.2, m, 0.0, FluxModel{0.33, 0.0}), 0.0);
  EXPECT_NEAR(flux(160.4, m, 3.2), 2 * flux(80.2, m, 3.2), 1e-9);
  EXPECT_EQ(flux(80.2, Mask(20, 20, 0), 3.2), 0.0);
}

TEST(Quantification, Co2EquivalentArithmetic) {
  auto g20 = co2_equivalent(27500, GwpHorizon::GWP20);
  EXPECT_DOUBLE_EQ(g20.tonnes_co2e, 2227500.0);
  EXPECT_NEAR(g20.car_equivalents, 484239, 1.0);
  auto g100 = co2_equivalent(27500, GwpHorizon::GWP100);
  EXPECT_NEAR(g100.tonnes_co2e, 767250.0, 1e-6);
  EXPECT_EQ(std::lround(std::floor(g100.car_equivalents)), 166793);
  EXPECT_EQ(co2_equivalent(0, GwpHorizon::GWP20).car_equivalents, 0.0);
  EXPECT_THROW(co2_equivalent(-1, GwpHorizon::GWP20), ArgumentError);
}

TEST(DetectionRecordJson, RoundTripWithRleMask) {
  Rng rng(4);
  Mask m(13, 7, 0);
  for (auto& v : m.values()) v = bernoulli(rng, 0.4);
  EXPECT_EQ(rle_decode(rle_encode(m)), m);
  EXPECT_EQ(rle_encode(Mask(3, 1, 1)), "3,1:0,3");
  EXPECT_THROW(rle_decode("3,1:0,4"), FormatError);
  EXPECT_THROW(rle_decode("garbage"), FormatError);

  DetectionRecord r;
  r.id = "s-1";
  r.site_id = "s";
  r.acquisition_time = make_time(2024, 3, 1);
  r.scene_score = 0.8;
  r.mask = m;
  r.n_plume_pixels = count_set(m);
  r.flux_t_per_h = 2.5;
  r.review_status = ReviewStatus::confirmed;
  DetectionRecord back = detection_from_json(to_json(r));
  EXPECT_EQ(to_json(back), to_json(r));
  json bad = to_json(r);
  bad["scene_score"] = 1.5;
  EXPECT_THROW(detection_from_json(bad), IntegrityError);
  bad = to_json(r);
  bad["schema_version"] = 9;
  EXPECT_THROW(detection_from_json(bad), FormatError);
  bad = to_json(r);
  bad["n_plume_pixels"] = 0;
  EXPECT_THROW(detection_from_json(bad), IntegrityError);
}
