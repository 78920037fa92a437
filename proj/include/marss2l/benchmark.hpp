#pragma once

// Closed-loop synthetic benchmark: split a generated fixture by site, train the
// detector with the stratified sampler, then score held-out scenes with the model
// and with the MBMP-threshold baseline.

#include "marss2l/report.hpp"
#include "marss2l/sampler.hpp"

namespace marss2l {

/// Laptop-sized training schedule used by the benchmark and the CLI default.
inline TrainConfig desk_train_config() {
  TrainConfig c;
  c.base_width = 8;
  c.steps_per_epoch = 40;
  c.max_epochs = 25;
  c.learning_rate = 2e-3;
  c.patience = 6;
  return c;
}

struct BenchmarkConfig {
  FixtureConfig fixture;
  double train_fraction = 0.5;
  double validation_fraction = 0.1;
  TrainConfig train = desk_train_config();
  SamplerConfig sampler;
  double alert_threshold = 0.5;
  double pixel_threshold = 0.5;
  double mbmp_threshold = 0.99;
};

inline json to_json(const TrainConfig& c) {
  return {{"learning_rate", c.learning_rate}, {"weight_decay", c.weight_decay}, {"batch_size", c.batch_size},
          {"steps_per_epoch", c.steps_per_epoch}, {"max_epochs", c.max_epochs}, {"patience", c.patience},
          {"seed", c.seed}, {"base_width", c.base_width}, {"depth", c.depth},
          {"alpha", c.alpha ? json(*c.alpha) : json(nullptr)}, {"component_pixels", c.component_pixels}};
}

inline TrainConfig train_config_from_json(const json& j, TrainConfig c = desk_train_config()) {
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.weight_decay = j.value("weight_decay", c.weight_decay);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.steps_per_epoch = j.value("steps_per_epoch", c.steps_per_epoch);
  c.max_epochs = j.value("max_epochs", c.max_epochs);
  c.patience = j.value("patience", c.patience);
  c.seed = j.value("seed", c.seed);
  c.base_width = j.value("base_width", c.base_width);
  c.depth = j.value("depth", c.depth);
  if (j.contains("alpha") && !j["alpha"].is_null()) c.alpha = j["alpha"].get<double>();
  c.component_pixels = j.value("component_pixels", c.component_pixels);
  c.validate();
  return c;
}

inline BenchmarkConfig benchmark_config_from_json(const json& j) {
  BenchmarkConfig c;
  if (j.contains("fixture")) c.fixture = fixture_config_from_json(j["fixture"]);
  if (j.contains("train")) c.train = train_config_from_json(j["train"]);
  c.train_fraction = j.value("train_fraction", c.train_fraction);
  c.validation_fraction = j.value("validation_fraction", c.validation_fraction);
  c.alert_threshold = j.value("alert_threshold", c.alert_threshold);
  c.pixel_threshold = j.value("pixel_threshold", c.pixel_threshold);
  c.mbmp_threshold = j.value("mbmp_threshold", c.mbmp_threshold);
  if (!(c.train_fraction > 0 && c.validation_fraction > 0 && c.train_fraction + c.validation_fraction < 1))
    throw ArgumentError("split fractions must leave room for a test set");
  return c;
}

struct SiteSplit {
  std::vector<TrainingSite> train, validation, test;
};

/// Sites in index order: the first share trains, the next validates, the rest is held out.
inline SiteSplit split_sites(const std::vector<SiteSeries>& fixture, double train_fraction, double validation_fraction,
                             const RetrievalConfig& rc = {}) {
  const auto n = fixture.size();
  const auto n_train = std::size_t(std::lround(train_fraction * double(n)));
  const auto n_val = std::max<std::size_t>(1, std::size_t(std::lround(validation_fraction * double(n))));
  if (n_train < 1 || n_train + n_val >= n) throw ArgumentError("fixture too small to split");
  SiteSplit s;
  for (std::size_t i = 0; i < n; ++i) {
    TrainingSite t = make_training_site(fixture[i], rc);
    if (t.scenes.empty()) continue;
    (i < n_train ? s.train : i < n_train + n_val ? s.validation : s.test).push_back(std::move(t));
  }
  return s;
}

/// Every clear observation of the given sites, unsimulated.
inline std::vector<ValidationScene> validation_set(std::span<const TrainingSite> sites, const RetrievalConfig& rc = {}) {
  std::vector<ValidationScene> out;
  for (const auto& s : sites) {
    auto v = validation_scenes(s, rc);
    std::move(v.begin(), v.end(), std::back_inserter(out));
  }
  return out;
}

/// Channel statistics over the real training scenes.
inline ChannelStats training_channel_stats(const TrainingSampler& sampler) {
  std::vector<nn::Tensor<float>> raws;
  for (const auto& s : sampler.sites())
    for (const auto& sc : s.scenes) raws.push_back(sampler.real_example(s, sc).input);
  return compute_channel_stats(raws);
}

/// Model output for one held-out scene, kept so it can be re-scored at other k.
struct ScenePrediction {
  std::string scene_ref;
  bool has_plume = false;
  std::optional<double> flux_t_per_h;
  Mask truth, excluded;
  Plane probability;
  RetrievalProduct retrieval;
};

inline std::vector<ScenePrediction> predict_sites(const Detector& d, std::span<const TrainingSite> sites,
                                                  const RetrievalConfig& rc = {}) {
  std::vector<ScenePrediction> out;
  for (const auto& site : sites)
    for (const auto& s : site.scenes) {
      const SceneImage& scene = site.pool[s.scene];
      const SceneImage* ref = s.reference ? &site.pool[*s.reference] : nullptr;
      ScenePrediction p;
      p.scene_ref = site.site_id + "_" + compact_time(scene.acquisition_time);
      p.has_plume = s.has_plume;
      p.flux_t_per_h = s.label.flux_t_per_h;
      p.truth = s.label.mask;
      p.excluded = cloud_binary(scene);
      p.retrieval = retrieve(scene, ref, rc);
      p.probability = predict(d, scene, ref ? *ref : scene, p.retrieval).values;
      out.push_back(std::move(p));
    }
  return out;
}

/// Pixels at or above the threshold inside components of at least k pixels, clouds excluded.
inline Mask component_mask(const Plane& prob, const Mask& excluded, double pixel_threshold, std::size_t k) {
  Mask m = extract_mask(prob, pixel_threshold);
  for (std::size_t i = 0; i < m.size(); ++i)
    if (excluded[i]) m[i] = 0;
  Components cc = connected_components(m, kConnectivity);
  for (std::size_t i = 0; i < m.size(); ++i) m[i] = cc.labels[i] && cc.sizes[cc.labels[i] - 1] >= k;
  return m;
}

inline std::vector<ScoredScene> model_scored(std::span<const ScenePrediction> preds, std::size_t k,
                                             double pixel_threshold = 0.5) {
  std::vector<ScoredScene> out;
  for (const auto& p : preds)
    out.push_back({p.scene_ref, scene_score(p.probability, k, &p.excluded), p.has_plume, p.flux_t_per_h,
                   component_mask(p.probability, p.excluded, pixel_threshold, k), p.truth});
  return out;
}

/// Baseline ranked by absorption depth, so a score >= 1 - threshold means positive at that ratio threshold.
inline std::vector<ScoredScene> mbmp_scored(std::span<const ScenePrediction> preds, std::size_t k,
                                            double ratio_threshold = 0.99) {
  std::vector<ScoredScene> out;
  for (const auto& p : preds) {
    Plane depth(p.retrieval.ratio.width(), p.retrieval.ratio.height(), 0.0f);
    for (std::size_t i = 0; i < depth.size(); ++i)
      if (p.retrieval.valid(i)) depth[i] = std::clamp(1.0f - p.retrieval.ratio[i], 0.0f, 1.0f);
    out.push_back({p.scene_ref, mbmp_baseline_strength(p.retrieval, k, &p.excluded), p.has_plume, p.flux_t_per_h,
                   component_mask(depth, p.excluded, float(1.0 - ratio_threshold), k), p.truth});
  }
  return out;
}

inline std::vector<KSweepRow> k_sweep(std::span<const ScenePrediction> preds, std::span<const std::size_t> ks,
                                      double threshold = 0.5) {
  std::vector<KSweepRow> rows;
  for (std::size_t k : ks) {
    auto scored = model_scored(preds, k);
    auto c = confusion_metrics(scored, threshold);
    rows.push_back({k, average_precision(scored), c.precision, c.recall, c.fpr});
  }
  return rows;
}

struct ReleaseOutcome {
  double true_flux_t_per_h = 0.0;
  double score = 0.0;
  bool detected = false;
  std::optional<double> estimated_flux_t_per_h;
};

/// Scores every controlled-release overpass against its earlier clean pass.
inline std::vector<ReleaseOutcome> evaluate_release(const PlumePhysics& physics, const Detector& d,
                                                    std::span<const SiteSeries> series, double threshold = 0.5,
                                                    std::size_t k = kDefaultComponentPixels) {
  std::vector<ReleaseOutcome> out;
  for (const auto& s : series)
    for (const auto& ls : s.scenes) {
      const SceneImage& scene = ls.scene;
      const SceneImage* ref = s.archive.empty() ? nullptr : &s.archive.back();
      RetrievalProduct r = ref ? mbmp(scene, *ref) : mbsp(scene);
      Plane prob = predict(d, scene, ref ? *ref : scene, r).values;
      Mask excluded = cloud_binary(scene);
      ReleaseOutcome o{ls.has_plume ? ls.flux_t_per_h : 0.0, scene_score(prob, k, &excluded), false, std::nullopt};
      o.detected = o.score >= threshold;
      if (o.detected) {
        Mask m = component_mask(prob, excluded, 0.5, k);
        Plane delta = invert_to_concentration(r, physics.lut, physics.ctx, scene.geometry, scene.sensor);
        o.estimated_flux_t_per_h = flux(ime(m, delta), m, scene.wind_speed());
      }
      out.push_back(o);
    }
  return out;
}

inline json to_json(const ReleaseOutcome& o) {
  return {{"true_flux_t_per_h", o.true_flux_t_per_h},
          {"score", o.score},
          {"detected", o.detected},
          {"estimated_flux_t_per_h", o.estimated_flux_t_per_h ? json(*o.estimated_flux_t_per_h) : json(nullptr)}};
}

struct BenchmarkResult {
  TrainResult training;
  std::vector<ScenePrediction> test;
  ModelMetricsRow model, mbmp;
  WorkloadCurve workload;
  std::size_t train_sites = 0, validation_scenes = 0, test_scenes = 0, bank_size = 0;
  double seconds = 0.0;
};

inline BenchmarkResult run_benchmark(const PlumePhysics& physics, const BenchmarkConfig& cfg,
                                     const std::function<void(const EpochRecord&)>& on_epoch = {}) {
  auto t0 = std::chrono::steady_clock::now();
  auto fixture = generate_fixture(physics, cfg.fixture);
  SiteSplit split = split_sites(fixture, cfg.train_fraction, cfg.validation_fraction, cfg.sampler.retrieval);
  BenchmarkResult r;
  r.train_sites = split.train.size();
  auto bank = build_plume_bank(split.train);
  r.bank_size = bank.size();
  TrainingSampler sampler(physics, split.train, std::move(bank), cfg.sampler);
  auto validation = validation_set(split.validation, cfg.sampler.retrieval);
  r.validation_scenes = validation.size();
  r.training = train(std::ref(sampler), validation, training_channel_stats(sampler), cfg.train, on_epoch);
  r.test = predict_sites(r.training.detector, split.test, cfg.sampler.retrieval);
  r.test_scenes = r.test.size();
  const std::size_t k = cfg.train.component_pixels;
  auto model = model_scored(r.test, k, cfg.pixel_threshold);
  auto mbmp = mbmp_scored(r.test, k, cfg.mbmp_threshold);
  r.model = model_metrics("MARS-S2L", model, cfg.alert_threshold);
  r.mbmp = model_metrics("MBMP", mbmp, 1.0 - cfg.mbmp_threshold);
  r.workload = workload_curve(model);
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

}  // namespace marss2l
