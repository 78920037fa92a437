#include <gtest/gtest.h>

#include "../support/tempdir.hpp"
#include "marss2l/retrieval.hpp"
#include "marss2l/scene_analysis.hpp"
#include "marss2l/synthetic.hpp"

using namespace marss2l;

namespace {

const PlumePhysics& physics() {
  static const PlumePhysics p = PlumePhysics::standard();
  return p;
}

FixtureConfig small_config() {
  FixtureConfig c;
  c.n_sites = 6;
  c.scenes_per_site = 6;
  c.width = c.height = 32;
  return c;
}

double clear_mean(const SceneImage& s, Band b) {
  double sum = 0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < s.cloud_mask.size(); ++i)
    if (s.cloud_mask[i] == CloudState::clear) sum += s.band(b)[i], ++n;
  return n ? sum / double(n) : 0.0;
}

double recomputed_flux(const PlumeLabel& l, const SceneImage& s) {
  return flux(ime(l.mask, l.delta_ch4), l.mask, s.wind_speed());
}

}  // namespace

TEST(FixtureConfig, Validation) {
  FixtureConfig c = small_config();
  EXPECT_NO_THROW(c.validate());
  c.plume_frequency = 1.5;
  EXPECT_THROW(c.validate(), ArgumentError);
  c = small_config();
  c.flux_min = 3, c.flux_max = 2;
  EXPECT_THROW(c.validate(), ArgumentError);
  c = small_config();
  c.arid_fraction = 0.7, c.offshore_fraction = 0.5;
  EXPECT_THROW(c.validate(), ArgumentError);
  c = small_config();
  c.seed = 99;
  c.offshore_fraction = 0.2;
  EXPECT_EQ(to_json(fixture_config_from_json(to_json(c))), to_json(c));
}

TEST(SiteSeries, DeterministicPerSeedAndSite) {
  FixtureConfig c = small_config();
  auto a = generate_site_series(physics(), c, 3);
  auto b = generate_site_series(physics(), c, 3);
  ASSERT_EQ(a.scenes.size(), b.scenes.size());
  EXPECT_EQ(a.archive, b.archive);
  for (std::size_t i = 0; i < a.scenes.size(); ++i) {
    EXPECT_EQ(a.scenes[i].scene, b.scenes[i].scene);
    EXPECT_EQ(a.scenes[i].label.delta_ch4, b.scenes[i].label.delta_ch4);
  }
  // Sites are independent of generation order.
  auto all = generate_fixture(physics(), c);
  EXPECT_EQ(all[3].scenes.back().scene, a.scenes.back().scene);
  EXPECT_NE(generate_site_series(physics(), c, 4).archive, a.archive);
  c.seed += 1;
  EXPECT_NE(generate_site_series(physics(), c, 3).archive, a.archive);
}

TEST(SiteSeries, SeriesLayout) {
  FixtureConfig c = small_config();
  auto s = generate_site_series(physics(), c, 0);
  ASSERT_EQ(s.archive.size(), 1u);
  ASSERT_EQ(int(s.scenes.size()), c.scenes_per_site);
  EXPECT_LT(s.archive[0].acquisition_time, s.scenes[0].scene.acquisition_time);
  for (std::size_t i = 1; i < s.scenes.size(); ++i)
    EXPECT_EQ(s.scenes[i].scene.acquisition_time - s.scenes[i - 1].scene.acquisition_time,
              std::chrono::days(c.revisit_days));
  for (const auto& ls : s.scenes) {
    EXPECT_NO_THROW(validate(ls.scene));
    EXPECT_EQ(ls.scene.site_id, s.site.site_id);
    EXPECT_EQ(ls.has_plume, count_set(ls.label.mask) > 0);
  }
}

TEST(SiteSeries, BackgroundReflectanceLevels) {
  FixtureConfig c = small_config();
  c.offshore_fraction = 1.0, c.arid_fraction = 0.0;
  for (int site = 0; site < 4; ++site) {
    auto s = generate_site_series(physics(), c, site);
    ASSERT_EQ(s.background, Background::offshore);
    for (const auto& ls : s.scenes) {
      EXPECT_LT(clear_mean(ls.scene, Band::swir2), 0.05);
      EXPECT_LT(clear_mean(ls.scene, Band::swir1), 0.05);
    }
  }
  c.offshore_fraction = 0.0, c.arid_fraction = 1.0;
  c.artifact_probability = 0.0;
  for (int site = 0; site < 4; ++site) {
    auto s = generate_site_series(physics(), c, site);
    ASSERT_EQ(s.background, Background::arid);
    for (const auto& ls : s.scenes) EXPECT_GT(clear_mean(ls.scene, Band::swir2), 0.25);
  }
}

TEST(SiteSeries, PlumeFrequencyAndFluxRange) {
  FixtureConfig c = small_config();
  c.n_sites = 40;
  c.scenes_per_site = 10;
  int plumes = 0, total = 0;
  for (const auto& s : generate_fixture(physics(), c))
    for (const auto& ls : s.scenes) {
      ++total;
      if (!ls.has_plume) continue;
      ++plumes;
      EXPECT_GE(ls.flux_t_per_h, c.flux_min);
      EXPECT_LE(ls.flux_t_per_h, c.flux_max);
    }
  EXPECT_NEAR(double(plumes) / total, c.plume_frequency, 0.05);
}

TEST(SiteSeries, LabelFluxRecomputedFromMap) {
  FixtureConfig c = small_config();
  c.width = c.height = 64;
  c.n_sites = 12;
  c.plume_frequency = 0.5;
  c.active_site_fraction = 1.0;
  int checked = 0;
  for (const auto& s : generate_fixture(physics(), c))
    for (const auto& ls : s.scenes) {
      if (!ls.has_plume) continue;
      ++checked;
      EXPECT_NEAR(recomputed_flux(ls.label, ls.scene) / ls.flux_t_per_h, 1.0, 0.10);
    }
  EXPECT_GT(checked, 10);
}

TEST(SiteSeries, InjectedPlumeDarkensSwirInsideMask) {
  FixtureConfig c = small_config();
  c.plume_frequency = 1.0, c.active_site_fraction = 1.0, c.noise = 0, c.noise_floor = 0;
  c.cloud_probability = 0.0, c.artifact_probability = 0.0;
  auto s = generate_site_series(physics(), c, 1);
  const auto& ls = s.scenes[0];
  ASSERT_TRUE(ls.has_plume);
  auto r = mbmp(ls.scene, s.archive[0]);
  double in = 0, out = 0;
  std::size_t ni = 0, no = 0;
  for (std::size_t i = 0; i < ls.label.mask.size(); ++i)
    (ls.label.mask[i] ? (in += r.ratio[i], ++ni) : (out += r.ratio[i], ++no));
  EXPECT_LT(in / double(ni), out / double(no) - 0.01);
}

TEST(GeneratePlume, ExactFluxAndDownwindShape) {
  Rng rng(5);
  PlumeLabel l = generate_plume(3.0, 4.0, 0.0, 20, 32, 64, 64, rng);
  EXPECT_NEAR(flux(ime(l.mask, l.delta_ch4), l.mask, 4.0), 3.0, 0.3);
  double cx = 0;
  std::size_t n = 0;
  for (int y = 0; y < 64; ++y)
    for (int x = 0; x < 64; ++x)
      if (l.mask(x, y)) cx += x, ++n;
  EXPECT_GT(cx / double(n), 20.0);
  EXPECT_NEAR(double(n), plume_area_for_flux(3.0), 0.5 * plume_area_for_flux(3.0));
}

TEST(ControlledRelease, Layout) {
  ReleaseConfig cfg;
  cfg.width = cfg.height = 32;
  auto series = controlled_release_scenario(physics(), cfg);
  ASSERT_EQ(series.size(), cfg.ladder.size() * std::size_t(cfg.repeats) + std::size_t(cfg.no_emission));
  bool low_band = false, high_band = false;
  int empty = 0;
  for (const auto& s : series) {
    ASSERT_EQ(s.archive.size(), 1u);
    ASSERT_EQ(s.scenes.size(), 1u);
    const auto& ls = s.scenes[0];
    EXPECT_LT(s.archive[0].acquisition_time, ls.scene.acquisition_time);
    if (!ls.has_plume) {
      ++empty;
      EXPECT_EQ(count_set(ls.label.mask), 0u);
      EXPECT_EQ(ls.flux_t_per_h, 0.0);
      continue;
    }
    low_band |= ls.flux_t_per_h >= 0.75 && ls.flux_t_per_h <= 1.5;
    high_band |= ls.flux_t_per_h > 3.0;
    EXPECT_GT(count_set(ls.label.mask), 0u);
  }
  EXPECT_EQ(empty, cfg.no_emission);
  EXPECT_TRUE(low_band);
  EXPECT_TRUE(high_band);
  cfg.ladder = {1.0, -2.0};
  EXPECT_THROW(controlled_release_scenario(physics(), cfg), ArgumentError);
}

TEST(WriteFixture, FilesManifestAndLabels) {
  testing_support::TempDir dir("fixture");
  FixtureConfig c = small_config();
  c.n_sites = 2;
  c.plume_frequency = 0.5;
  c.active_site_fraction = 1.0;
  auto series = generate_fixture(physics(), c);
  json manifest = write_fixture(series, dir.path());
  EXPECT_EQ(manifest.size(), std::size_t(2 * (1 + c.scenes_per_site)));
  EXPECT_EQ(read_json_file(dir / "sites.json").size(), 2u);
  EXPECT_EQ(read_json_file(dir / "labels.json"), manifest);
  int labels = 0;
  for (const auto& e : manifest) {
    SceneImage s = load_scene(dir / e["scene"].get<std::string>());
    EXPECT_EQ(s.site_id, e["site_id"].get<std::string>());
    if (e["has_plume"].get<bool>()) {
      ++labels;
      PlumeLabel l = load_label(dir / e["label"].get<std::string>());
      EXPECT_NEAR(*l.flux_t_per_h, e["flux_t_per_h"].get<double>(), 1e-12);
      EXPECT_GT(count_set(l.mask), 0u);
    } else {
      EXPECT_FALSE(e.contains("label"));
    }
  }
  EXPECT_GT(labels, 0);
  const auto& first = series[0].scenes[0];
  std::string stem = first.scene.site_id + "_" + compact_time(first.scene.acquisition_time);
  EXPECT_EQ(load_scene(dir / "scenes" / (stem + ".ms2l")), first.scene);
}
