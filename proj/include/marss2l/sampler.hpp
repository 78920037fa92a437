#pragma once

// Stratified training-example builder: real labelled scenes mixed with simulated
// ones made by injecting wind-compatible donor plumes into plume-free passes.

#include <optional>
#include <span>
#include <vector>

#include "marss2l/detector.hpp"
#include "marss2l/plume_sim.hpp"
#include "marss2l/retrieval.hpp"
#include "marss2l/synthetic.hpp"

namespace marss2l {

struct TrainingScene {
  std::size_t scene = 0;                  // index into TrainingSite::pool
  std::optional<std::size_t> reference;  // index into pool; none means single-pass retrieval
  PlumeLabel label;
  bool has_plume = false;
};

struct TrainingSite {
  std::string site_id;
  std::vector<SceneImage> pool;  // archive passes followed by observations
  std::vector<TrainingScene> scenes;

  std::size_t real_plumes() const {
    std::size_t n = 0;
    for (const auto& s : scenes) n += s.has_plume;
    return n;
  }
};

/// Pairs each observation passing the clear filter with its reference pass.
inline TrainingSite make_training_site(const SiteSeries& series, const RetrievalConfig& rc = {}) {
  TrainingSite t;
  t.site_id = series.site.site_id;
  for (const auto& a : series.archive) t.pool.push_back(a);
  for (const auto& s : series.scenes) t.pool.push_back(s.scene);
  std::vector<const SceneImage*> cands;
  for (const auto& p : t.pool) cands.push_back(&p);
  for (std::size_t i = 0; i < series.scenes.size(); ++i) {
    std::size_t idx = series.archive.size() + i;
    const SceneImage& s = t.pool[idx];
    if (!passes_clear_filter(s)) continue;
    TrainingScene ts{idx, select_reference_index(s, cands, rc), series.scenes[i].label, series.scenes[i].has_plume};
    t.scenes.push_back(std::move(ts));
  }
  return t;
}

/// A labelled plume usable as a simulation donor, with the wind it was observed under.
struct PlumeDonor {
  PlumeLabel label;
  double wind_speed = 0.0;
  double wind_direction_deg = 0.0;
};

inline std::vector<PlumeDonor> build_plume_bank(std::span<const TrainingSite> sites) {
  std::vector<PlumeDonor> bank;
  for (const auto& site : sites)
    for (const auto& s : site.scenes)
      if (s.has_plume) {
        const SceneImage& sc = site.pool[s.scene];
        bank.push_back({s.label, sc.wind_speed(), wind_direction_deg(sc.wind_u, sc.wind_v)});
      }
  return bank;
}

struct SamplerConfig {
  double positive_fraction = 0.5;
  int max_donor_draws = 50;
  std::size_t few_plumes_max = 5;
  double p_simulate_few = 0.9;
  double p_simulate_many = 0.1;
  RetrievalConfig retrieval;
};

/// Probability of simulating for a site with `real_plumes` labelled plumes.
inline double simulation_probability(std::size_t real_plumes, const SamplerConfig& cfg = {}) {
  if (real_plumes == 0) return 1.0;
  return real_plumes <= cfg.few_plumes_max ? cfg.p_simulate_few : cfg.p_simulate_many;
}

inline RetrievalProduct retrieve(const SceneImage& scene, const SceneImage* reference, const RetrievalConfig& rc) {
  if (reference) return mbmp(scene, *reference, rc);
  return mbsp(scene, rc);
}

class TrainingSampler {
 public:
  TrainingSampler(const PlumePhysics& physics, std::vector<TrainingSite> sites, std::vector<PlumeDonor> bank,
                  SamplerConfig cfg = {})
      : physics_(&physics), sites_(std::move(sites)), bank_(std::move(bank)), cfg_(cfg) {
    if (sites_.empty()) throw ArgumentError("sampler needs at least one site");
    for (const auto& s : sites_)
      if (s.scenes.empty()) throw ArgumentError("site " + s.site_id + " has no usable scene");
  }

  /// Site chosen uniformly, then the stratified rule.
  TrainingExample operator()(Rng& rng) { return sample(uniform_index(rng, sites_.size()), rng); }

  TrainingExample sample(std::size_t site_index, Rng& rng) {
    const TrainingSite& site = sites_.at(site_index);
    std::vector<std::size_t> real, clean;
    for (std::size_t i = 0; i < site.scenes.size(); ++i) (site.scenes[i].has_plume ? real : clean).push_back(i);
    const bool simulate = bernoulli(rng, simulation_probability(real.size(), cfg_));
    const bool positive = bernoulli(rng, cfg_.positive_fraction);
    if (positive && !simulate) return real_example(site, real[uniform_index(rng, real.size())]);
    if (clean.empty()) {
      // Only plume scenes: nothing to simulate into and no negative to emit.
      TrainingExample e = real_example(site, real[uniform_index(rng, real.size())]);
      e.skipped = positive;
      return e;
    }
    const TrainingScene& target = site.scenes[clean[uniform_index(rng, clean.size())]];
    if (!positive) return real_example(site, target);
    const SceneImage& scene = site.pool[target.scene];
    std::optional<PlumeLabel> plume;
    if (!bank_.empty() && scene.wind_speed() <= kMaxSimulationWindSpeed) {
      const double to_dir = wind_direction_deg(scene.wind_u, scene.wind_v);
      for (int attempt = 0; attempt < cfg_.max_donor_draws && !plume; ++attempt) {
        const PlumeDonor& d = bank_[uniform_index(rng, bank_.size())];
        if (!d.label.mask.same_shape(scene.bands[0])) continue;
        if (!wind_compatible(d.wind_speed, scene.wind_speed())) continue;
        plume = rotate_plume(d.label, d.wind_direction_deg, to_dir);
      }
    }
    if (!plume) {
      ++skipped_;
      TrainingExample e = real_example(site, target);
      e.skipped = true;
      return e;
    }
    SceneImage injected = simulate_plume(*physics_, scene, plume->delta_ch4);
    const SceneImage* ref = target.reference ? &site.pool[*target.reference] : nullptr;
    TrainingExample e;
    e.input = raw_input(injected, ref ? *ref : injected, retrieve(injected, ref, cfg_.retrieval));
    e.mask = plume->mask;
    e.delta_ch4 = plume->delta_ch4;
    e.positive = true;
    e.simulated = true;
    return e;
  }

  TrainingExample real_example(const TrainingSite& site, std::size_t scene_index) const {
    return real_example(site, site.scenes.at(scene_index));
  }

  TrainingExample real_example(const TrainingSite& site, const TrainingScene& s) const {
    const SceneImage& scene = site.pool[s.scene];
    const SceneImage* ref = s.reference ? &site.pool[*s.reference] : nullptr;
    TrainingExample e;
    e.input = raw_input(scene, ref ? *ref : scene, retrieve(scene, ref, cfg_.retrieval));
    e.mask = s.label.mask;
    e.delta_ch4 = s.label.delta_ch4;
    e.positive = s.has_plume;
    return e;
  }

  std::size_t skipped() const { return skipped_; }
  const std::vector<TrainingSite>& sites() const { return sites_; }
  const SamplerConfig& config() const { return cfg_; }

 private:
  const PlumePhysics* physics_;
  std::vector<TrainingSite> sites_;
  std::vector<PlumeDonor> bank_;
  SamplerConfig cfg_;
  std::size_t skipped_ = 0;
};

/// Real validation scenes (every clear observation with its reference), no simulation.
inline std::vector<ValidationScene> validation_scenes(const TrainingSite& site, const RetrievalConfig& rc = {}) {
  std::vector<ValidationScene> out;
  for (const auto& s : site.scenes) {
    const SceneImage& scene = site.pool[s.scene];
    const SceneImage* ref = s.reference ? &site.pool[*s.reference] : nullptr;
    out.push_back({raw_input(scene, ref ? *ref : scene, retrieve(scene, ref, rc)), cloud_binary(scene), s.has_plume});
  }
  return out;
}

}  // namespace marss2l
