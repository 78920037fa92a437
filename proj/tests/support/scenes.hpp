#pragma once

#include "marss2l/raster.hpp"
#include "marss2l/random.hpp"
#include "marss2l/sampler.hpp"

namespace testing_support {

// Noise-free textured scene: every band a smooth positive field.
inline marss2l::SceneImage textured_scene(int w, int h, std::uint64_t seed, const std::string& site = "site-a",
                                          marss2l::Timestamp t = marss2l::make_time(2024, 6, 1, 10, 30)) {
  using namespace marss2l;
  Rng rng(seed);
  SceneImage s;
  s.site_id = site;
  s.acquisition_time = t;
  for (int b = 0; b < kBandCount; ++b) {
    s.bands[b] = Plane(w, h);
    double base = uniform(rng, 0.08, 0.3), ax = uniform(rng, -0.001, 0.001), ay = uniform(rng, -0.001, 0.001);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        s.bands[b](x, y) = float(base + ax * x + ay * y + 0.02 * std::sin(0.7 * x + b) * std::cos(0.5 * y));
  }
  s.cloud_mask = Grid<CloudState>(w, h, CloudState::clear);
  s.wind_u = 3.0;
  s.wind_v = 1.0;
  return s;
}

inline marss2l::Plane patch(int w, int h, int x0, int y0, int x1, int y1, float inside, float outside = 1.0f) {
  marss2l::Plane p(w, h, outside);
  for (int y = y0; y < y1; ++y)
    for (int x = x0; x < x1; ++x) p(x, y) = inside;
  return p;
}

// Eleven textured passes two days apart, each observation referenced to the previous
// pass; the first `plumes` observations are flagged as real plume scenes.
inline marss2l::TrainingSite textured_training_site(std::size_t plumes, std::uint64_t seed) {
  using namespace marss2l;
  TrainingSite t;
  t.site_id = "site-" + std::to_string(plumes);
  for (int i = 0; i < 11; ++i) t.pool.push_back(textured_scene(32, 32, seed + i, t.site_id, make_time(2024, 1, 1 + 2 * i)));
  for (std::size_t i = 1; i < t.pool.size(); ++i)
    t.scenes.push_back({i, i - 1, PlumeLabel{Mask(32, 32, 0), Plane(32, 32, 0.0f), {}}, i <= plumes});
  return t;
}

// Fraction of draws that chose to simulate. With an empty donor bank every such
// decision surfaces as a skipped example, so the skip count measures it directly.
inline double simulated_fraction(const marss2l::PlumePhysics& physics, std::size_t plumes, int draws) {
  using namespace marss2l;
  SamplerConfig cfg;
  cfg.positive_fraction = 1.0;
  TrainingSampler sampler(physics, {textured_training_site(plumes, 100)}, {}, cfg);
  Rng rng(derive_seed(42, plumes));
  int sim = 0;
  for (int i = 0; i < draws; ++i) sim += sampler.sample(0, rng).skipped;
  return double(sim) / draws;
}

}  // namespace testing_support
