#include <gtest/gtest.h>

#include <fstream>

#include "../support/tempdir.hpp"
#include "marss2l/alert/pipeline.hpp"
#include "marss2l/alert/service.hpp"
#include "marss2l/synthetic.hpp"

using namespace marss2l;
using namespace marss2l::alert;
using testing_support::TempDir;

namespace {

const PlumePhysics& physics() {
  static const PlumePhysics p = PlumePhysics::standard();
  return p;
}

// Stand-in detector: probability rises linearly as the retrieval ratio drops below 1.
ProbabilityMap ratio_predictor(const SceneImage&, const SceneImage&, const RetrievalProduct& r) {
  ProbabilityMap m{Plane(r.ratio.width(), r.ratio.height(), 0.0f)};
  for (std::size_t i = 0; i < r.ratio.size(); ++i)
    if (r.valid(i)) m.values[i] = std::clamp(float((0.985 - r.ratio[i]) / 0.03), 0.0f, 1.0f);
  return m;
}

FixtureConfig quiet_config() {
  FixtureConfig c;
  c.seed = 5;
  c.n_sites = 2;
  c.scenes_per_site = 4;
  c.plume_frequency = 0.0;
  c.cloud_probability = 0.0;
  c.artifact_probability = 0.0;
  return c;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(f), {});
}

std::vector<SiteRecord> registry_of(const std::vector<SiteSeries>& series) {
  std::vector<SiteRecord> out;
  for (const auto& s : series) out.push_back(s.site);
  return out;
}

std::shared_ptr<FixedClock> fixed_clock() {
  return std::make_shared<FixedClock>(make_time(2025, 2, 1, 6, 30), std::chrono::seconds(60));
}

}  // namespace

TEST(Pipeline, InjectedPlumeBecomesPendingDetection) {
  auto series = generate_fixture(physics(), quiet_config(), 0, 1);
  auto& last = series[0].scenes.back();
  Rng rng(3);
  last.label = generate_plume(6.0, last.scene.wind_u, last.scene.wind_v, 32, 32, 64, 64, rng);
  last.scene = simulate_plume(physics(), last.scene, last.label.delta_ch4);
  last.has_plume = true;
  TempDir data("data"), store_dir("store");
  write_fixture(series, data.path());
  AlertStore store(store_dir.path(), fixed_clock());
  Pipeline pipe(store, physics(), ratio_predictor, registry_of(series));
  auto report = pipe.run(data / "scenes");

  ASSERT_EQ(report.detections.size(), 1u);
  const DetectionRecord& d = report.detections[0];
  EXPECT_EQ(d.acquisition_time, last.scene.acquisition_time);
  EXPECT_EQ(d.review_status, ReviewStatus::pending);
  EXPECT_GT(d.flux_t_per_h, 0.0);
  EXPECT_GT(d.n_plume_pixels, 0u);
  EXPECT_EQ(d.retrieval_method, "MBMP");
  EXPECT_FALSE(d.reference_ref.empty());
  EXPECT_TRUE(fs::exists(store_dir / d.product_ref));
  EXPECT_EQ(report.observations.size(), 5u);  // archive pass plus four observations
}

TEST(Pipeline, RerunAddsNothingAndStateIsByteIdentical) {
  FixtureConfig c = quiet_config();
  c.plume_frequency = 0.6;
  c.cloud_probability = 0.3;
  auto series = generate_fixture(physics(), c);
  TempDir data("data"), s1("s1"), s2("s2");
  write_fixture(series, data.path());
  auto run = [&](const fs::path& dir) {
    AlertStore store(dir, fixed_clock());
    Pipeline pipe(store, physics(), ratio_predictor, registry_of(series), {.threads = 2});
    return pipe.run(data / "scenes");
  };
  auto first = run(s1.path());
  EXPECT_FALSE(first.observations.empty());
  const std::string log = slurp(s1 / "events.jsonl");

  auto second = run(s1.path());
  EXPECT_TRUE(second.detections.empty());
  EXPECT_TRUE(second.observations.empty());
  EXPECT_EQ(slurp(s1 / "events.jsonl"), log);

  // Without the cursor the store's (site, time) key still prevents duplicates.
  fs::remove(s1 / "cursor.json");
  auto third = run(s1.path());
  EXPECT_TRUE(third.detections.empty());
  EXPECT_EQ(third.already_processed, first.observations.size());
  EXPECT_EQ(slurp(s1 / "events.jsonl"), log);

  run(s2.path());
  EXPECT_EQ(slurp(s2 / "events.jsonl"), log);
  EXPECT_EQ(slurp(s2 / "index.json"), slurp(s1 / "index.json"));
}

TEST(Pipeline, CloudySceneIsSkippedAndLogged) {
  auto series = generate_fixture(physics(), quiet_config(), 0, 1);
  Rng rng(9);
  auto& s = series[0].scenes[1].scene;
  synth::add_clouds(s, 0.7, rng);
  ASSERT_FALSE(passes_clear_filter(s));
  TempDir data("data"), store_dir("store");
  write_fixture(series, data.path());
  AlertStore store(store_dir.path(), fixed_clock());
  PipelineConfig cfg;
  cfg.alert_threshold = 0.0;  // every clear scene alerts
  Pipeline pipe(store, physics(), ratio_predictor, registry_of(series), cfg);
  auto report = pipe.run(data / "scenes");
  EXPECT_EQ(report.detections.size(), 4u);
  EXPECT_FALSE(store.find(detection_id(s.site_id, s.acquisition_time)));
  bool logged = false;
  for (const auto& l : report.log) logged |= l.find("clear filter") != std::string::npos;
  EXPECT_TRUE(logged);
  std::size_t cloudy = 0;
  for (const auto& o : store.scenes(s.site_id)) cloudy += o.outcome == SceneOutcome::cloudy;
  EXPECT_EQ(cloudy, 1u);
}

TEST(Pipeline, SiteThresholdOverride) {
  auto series = generate_fixture(physics(), quiet_config());
  TempDir data("data"), store_dir("store");
  write_fixture(series, data.path());
  AlertStore store(store_dir.path(), fixed_clock());
  PipelineConfig cfg;
  cfg.alert_threshold = 1.0;
  cfg.site_thresholds[series[1].site.site_id] = 0.0;
  EXPECT_DOUBLE_EQ(cfg.threshold_for(series[0].site.site_id), 1.0);
  Pipeline pipe(store, physics(), ratio_predictor, registry_of(series), cfg);
  auto report = pipe.run(data / "scenes");
  ASSERT_EQ(report.detections.size(), 5u);
  for (const auto& d : report.detections) EXPECT_EQ(d.site_id, series[1].site.site_id);
}

TEST(Pipeline, FailuresAreIsolated) {
  auto series = generate_fixture(physics(), quiet_config());
  TempDir data("data"), store_dir("store");
  write_fixture(series, data.path());
  std::ofstream(data / "scenes/zz_broken.ms2l", std::ios::binary) << "not a band stack";
  auto registry = registry_of(series);
  registry.pop_back();  // second site unknown to the registry
  AlertStore store(store_dir.path(), fixed_clock());
  Pipeline pipe(store, physics(), ratio_predictor, registry, {.alert_threshold = 0.0});
  auto report = pipe.run(data / "scenes");
  EXPECT_EQ(report.detections.size(), 5u);
  std::size_t failed = 0;
  for (const auto& o : report.observations) failed += o.outcome == SceneOutcome::failed;
  EXPECT_EQ(failed, 5u);
  EXPECT_EQ(report.log.size(), 6u);
  EXPECT_TRUE(pipe.cursor().count("zz_broken.ms2l"));
}

TEST(Pipeline, OffshoreSitesUseSinglePass) {
  FixtureConfig c = quiet_config();
  c.arid_fraction = 0.0;
  c.offshore_fraction = 1.0;
  auto series = generate_fixture(physics(), c, 0, 1);
  ASSERT_TRUE(series[0].site.offshore);
  TempDir data("data"), store_dir("store");
  write_fixture(series, data.path());
  AlertStore store(store_dir.path(), fixed_clock());
  Pipeline pipe(store, physics(), ratio_predictor, registry_of(series), {.alert_threshold = 0.0});
  auto report = pipe.run(data / "scenes");
  ASSERT_FALSE(report.detections.empty());
  for (const auto& d : report.detections) {
    EXPECT_EQ(d.retrieval_method, "MBSP");
    EXPECT_TRUE(d.reference_ref.empty());
  }
}

TEST(Pipeline, NewScenesArePickedUpIncrementally) {
  auto series = generate_fixture(physics(), quiet_config(), 0, 1);
  TempDir data("data"), store_dir("store");
  auto partial = series;
  partial[0].scenes.pop_back();
  write_fixture(partial, data.path());
  AlertStore store(store_dir.path(), fixed_clock());
  Pipeline pipe(store, physics(), ratio_predictor, registry_of(series), {.alert_threshold = 0.0});
  EXPECT_EQ(pipe.run(data / "scenes").observations.size(), 4u);
  write_fixture(series, data.path());
  auto second = pipe.run(data / "scenes");
  ASSERT_EQ(second.observations.size(), 1u);
  EXPECT_EQ(second.observations[0].acquisition_time, series[0].scenes.back().scene.acquisition_time);
}

TEST(Pipeline, DetectionMaskDropsSmallComponentsAndClouds) {
  Plane p(20, 20, 0.0f);
  for (int y = 0; y < 10; ++y)
    for (int x = 0; x < 10; ++x) p(x, y) = 0.9f;  // 100 px
  for (int x = 15; x < 18; ++x) p(x, 15) = 0.9f;   // 3 px
  Mask excluded(20, 20, 0);
  excluded(0, 0) = 1;
  Mask m = detection_mask(p, excluded, 0.5, 50);
  EXPECT_EQ(count_set(m), 99u);
  EXPECT_FALSE(m(0, 0));
  EXPECT_FALSE(m(16, 15));
}
