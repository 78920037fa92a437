#pragma once

// Scheduled processing of newly delivered scenes: every *.ms2l file in a scene
// directory not yet listed in the store's cursor file is run through retrieval,
// the detector and scene scoring, and above-threshold scenes become pending
// detections. Scenes are computed in parallel; store writes happen in (site, time) order.

#include <algorithm>
#include <functional>
#include <future>
#include <map>
#include <set>
#include <thread>

#include "marss2l/alert/store.hpp"
#include "marss2l/band_stack.hpp"
#include "marss2l/detector.hpp"
#include "marss2l/plume_sim.hpp"
#include "marss2l/retrieval.hpp"
#include "marss2l/scene_analysis.hpp"

namespace marss2l::alert {

struct PipelineConfig {
  double alert_threshold = 0.5;
  std::map<std::string, double> site_thresholds;
  double pixel_threshold = 0.5;
  std::size_t component_pixels = kDefaultComponentPixels;
  RetrievalConfig retrieval;
  FluxModel flux_model;
  unsigned threads = 0;  // 0: hardware concurrency

  double threshold_for(const std::string& site_id) const {
    auto it = site_thresholds.find(site_id);
    return it == site_thresholds.end() ? alert_threshold : it->second;
  }
};

inline PipelineConfig pipeline_config_from_json(const json& j) {
  PipelineConfig c;
  c.alert_threshold = j.value("alert_threshold", c.alert_threshold);
  c.pixel_threshold = j.value("pixel_threshold", c.pixel_threshold);
  c.component_pixels = j.value("component_pixels", c.component_pixels);
  c.threads = j.value("threads", c.threads);
  if (j.contains("site_thresholds"))
    for (const auto& [site, t] : j.at("site_thresholds").items()) c.site_thresholds[site] = t.get<double>();
  auto check = [](double t) {
    if (!(t >= 0.0 && t <= 1.0)) throw ArgumentError("alert thresholds must lie in [0,1]");
  };
  check(c.alert_threshold);
  check(c.pixel_threshold);
  for (const auto& [s, t] : c.site_thresholds) check(t);
  return c;
}

/// Pixels at or above `pixel_threshold` in components of at least k pixels, clouds excluded.
inline Mask detection_mask(const Plane& prob, const Mask& excluded, double pixel_threshold, std::size_t k) {
  Mask m = extract_mask(prob, pixel_threshold);
  for (std::size_t i = 0; i < m.size(); ++i)
    if (excluded[i]) m[i] = 0;
  Components cc = connected_components(m, kConnectivity);
  for (std::size_t i = 0; i < m.size(); ++i) m[i] = cc.labels[i] && cc.sizes[cc.labels[i] - 1] >= k;
  return m;
}

struct SceneFile {
  fs::path path;
  SceneImage scene;
};

struct SceneResult {
  SceneObservation observation;
  std::optional<DetectionRecord> detection;
  std::optional<BandStack> product;
};

struct PipelineReport {
  std::vector<DetectionRecord> detections;  // newly persisted
  std::vector<SceneObservation> observations;
  std::size_t already_processed = 0;
  std::vector<std::string> log;
};

/// Per-pixel plume probability for a scene, its reference (the scene itself when
/// single-pass) and the retrieval between them. Must be safe to call concurrently.
using Predictor = std::function<ProbabilityMap(const SceneImage&, const SceneImage&, const RetrievalProduct&)>;

inline Predictor detector_predictor(const Detector& d) {
  return [&d](const SceneImage& s, const SceneImage& ref, const RetrievalProduct& r) { return predict(d, s, ref, r); };
}

class Pipeline {
 public:
  Pipeline(AlertStore& store, const PlumePhysics& physics, Predictor predictor, std::vector<SiteRecord> registry,
           PipelineConfig cfg = {})
      : store_(&store), physics_(&physics), predictor_(std::move(predictor)), cfg_(std::move(cfg)) {
    for (auto& s : registry) sites_[s.site_id] = std::move(s);
  }
  Pipeline(AlertStore& store, const PlumePhysics& physics, const Detector& detector, std::vector<SiteRecord> registry,
           PipelineConfig cfg = {})
      : Pipeline(store, physics, detector_predictor(detector), std::move(registry), std::move(cfg)) {}

  fs::path cursor_path() const { return store_->dir() / "cursor.json"; }

  std::set<std::string> cursor() const {
    std::set<std::string> out;
    if (!fs::exists(cursor_path())) return out;
    json j = read_json_file(cursor_path());
    for (const auto& s : j.at("processed")) out.insert(s.get<std::string>());
    return out;
  }

  PipelineReport run(const fs::path& scene_dir) {
    PipelineReport report;
    std::set<std::string> seen = cursor();
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(scene_dir))
      if (e.is_regular_file() && e.path().extension() == ".ms2l") files.push_back(e.path());
    std::sort(files.begin(), files.end());

    // Every readable scene is a reference candidate; only uncursored ones are processed.
    std::map<std::string, std::vector<SceneFile>> by_site;
    std::vector<std::pair<std::string, std::size_t>> todo;
    for (const auto& f : files) {
      const std::string name = f.filename().string();
      SceneImage s;
      try {
        s = load_scene(f);
      } catch (const std::exception& e) {
        report.log.push_back("skip " + name + ": " + e.what());
        seen.insert(name);
        continue;
      }
      auto& list = by_site[s.site_id];
      list.push_back({f, std::move(s)});
      if (seen.count(name)) continue;
      todo.emplace_back(list.back().scene.site_id, list.size() - 1);
    }
    std::sort(todo.begin(), todo.end(), [&](const auto& a, const auto& b) {
      const SceneImage& sa = by_site[a.first][a.second].scene;
      const SceneImage& sb = by_site[b.first][b.second].scene;
      return std::tie(sa.site_id, sa.acquisition_time) < std::tie(sb.site_id, sb.acquisition_time);
    });

    std::vector<std::optional<SceneResult>> results(todo.size());
    std::vector<std::string> errors(todo.size());
    auto work = [&](std::size_t i) {
      const auto& [site, idx] = todo[i];
      const SceneFile& f = by_site.at(site)[idx];
      if (store_->has_scene(f.scene.site_id, f.scene.acquisition_time)) return;
      try {
        results[i] = process(f, by_site.at(site));
      } catch (const std::exception& e) {
        errors[i] = e.what();
      }
    };
    parallel_for(todo.size(), work);

    for (std::size_t i = 0; i < todo.size(); ++i) {
      const SceneFile& f = by_site.at(todo[i].first)[todo[i].second];
      const std::string name = f.path.filename().string();
      seen.insert(name);
      if (!results[i] && errors[i].empty()) {
        ++report.already_processed;
        continue;
      }
      SceneObservation obs;
      if (!errors[i].empty()) {
        obs = {f.scene.site_id, f.scene.acquisition_time, f.path.string(), SceneOutcome::failed, 0.0, errors[i]};
        report.log.push_back("failed " + name + ": " + errors[i]);
      } else {
        obs = results[i]->observation;
        if (obs.outcome == SceneOutcome::cloudy) report.log.push_back("skip " + name + ": fails clear filter");
      }
      if (results[i] && results[i]->detection) {
        DetectionRecord& r = *results[i]->detection;
        write_band_stack(store_->dir() / r.product_ref, *results[i]->product);
        if (store_->add_detection(r)) report.detections.push_back(store_->get(r.id));
      }
      if (store_->record_scene(obs)) report.observations.push_back(obs);
    }
    write_cursor(seen);
    return report;
  }

  SceneResult process(const SceneFile& f, const std::vector<SceneFile>& site_scenes) const {
    const SceneImage& scene = f.scene;
    auto site_it = sites_.find(scene.site_id);
    if (site_it == sites_.end()) throw RegistryError("site " + scene.site_id + " is not in the registry");
    const SiteRecord& site = site_it->second;
    SceneResult out;
    out.observation = {scene.site_id, scene.acquisition_time, f.path.string(), SceneOutcome::no_detection, 0.0, ""};
    if (!passes_clear_filter(scene)) {
      out.observation.outcome = SceneOutcome::cloudy;
      return out;
    }
    const SceneFile* ref = nullptr;
    if (!site.offshore) {
      std::vector<const SceneImage*> cands;
      for (const auto& c : site_scenes) cands.push_back(&c.scene);
      if (auto idx = select_reference_index(scene, cands, cfg_.retrieval)) ref = &site_scenes[*idx];
    }
    RetrievalProduct product = ref ? mbmp(scene, ref->scene, cfg_.retrieval) : mbsp(scene, cfg_.retrieval);
    const SceneImage& ref_scene = ref ? ref->scene : scene;
    ProbabilityMap prob = predictor_(scene, ref_scene, product);
    validate(prob);
    Mask excluded = cloud_binary(scene);
    const double score = scene_score(prob, cfg_.component_pixels, &excluded);
    out.observation.scene_score = score;
    if (score < cfg_.threshold_for(scene.site_id)) return out;

    Plane delta = invert_to_concentration(product, physics_->lut, physics_->ctx, scene.geometry, scene.sensor);
    DetectionRecord r;
    r.id = detection_id(scene.site_id, scene.acquisition_time);
    r.site_id = scene.site_id;
    r.scene_ref = f.path.string();
    r.reference_ref = ref ? ref->path.string() : "";
    r.product_ref = "products/" + r.id + ".ms2l";
    r.acquisition_time = scene.acquisition_time;
    r.scene_score = score;
    r.mask = detection_mask(prob.values, excluded, cfg_.pixel_threshold, cfg_.component_pixels);
    r.n_plume_pixels = count_set(r.mask);
    r.ime_kg = ime(r.mask, delta);
    r.flux_t_per_h = flux(r.ime_kg, r.mask, scene.wind_speed(), cfg_.flux_model);
    r.wind_speed_mps = scene.wind_speed();
    r.retrieval_method = to_string(product.method);
    r.component_pixels = cfg_.component_pixels;
    out.product = BandStack{scene.width(), scene.height(),
                            {{"probability", prob.values}, {"ratio", product.ratio}, {"delta_ch4", delta}, {"mask", r.mask}}};
    out.observation.outcome = SceneOutcome::detection;
    out.observation.detail = r.id;
    out.detection = std::move(r);
    return out;
  }

 private:
  void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn) const {
    unsigned t = cfg_.threads ? cfg_.threads : std::max(1u, std::thread::hardware_concurrency());
    t = unsigned(std::min<std::size_t>(t, n));
    if (t <= 1) {
      for (std::size_t i = 0; i < n; ++i) fn(i);
      return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::future<void>> workers;
    for (unsigned w = 0; w < t; ++w)
      workers.push_back(std::async(std::launch::async, [&] {
        for (std::size_t i; (i = next++) < n;) fn(i);
      }));
    for (auto& w : workers) w.get();
  }

  void write_cursor(const std::set<std::string>& seen) const {
    json j = {{"processed", json(std::vector<std::string>(seen.begin(), seen.end()))}};
    fs::path tmp = cursor_path();
    tmp += ".tmp";
    write_json_file(tmp, j);
    fs::rename(tmp, cursor_path());
  }

  AlertStore* store_;
  const PlumePhysics* physics_;
  Predictor predictor_;
  std::map<std::string, SiteRecord> sites_;
  PipelineConfig cfg_;
};

}  // namespace marss2l::alert
