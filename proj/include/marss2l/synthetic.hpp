#pragma once

// Deterministic desk-scale fixtures: textured multiband backgrounds, site time
// series with injected plumes and ground truth, and a controlled-release ladder.

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include <json.hpp>

#include "marss2l/band_stack.hpp"
#include "marss2l/plume_sim.hpp"
#include "marss2l/random.hpp"
#include "marss2l/scene_analysis.hpp"
#include "marss2l/site.hpp"
#include "marss2l/time.hpp"

namespace marss2l {

enum class Background { arid, vegetated, offshore };

inline const char* to_string(Background b) {
  switch (b) {
    case Background::arid: return "arid";
    case Background::vegetated: return "vegetated";
    case Background::offshore: return "offshore";
  }
  return "arid";
}

inline Background background_from_string(const std::string& s) {
  if (s == "arid") return Background::arid;
  if (s == "vegetated") return Background::vegetated;
  if (s == "offshore") return Background::offshore;
  throw ArgumentError("unknown background type " + s);
}

struct FixtureConfig {
  std::uint64_t seed = 42;
  int n_sites = 50;
  int scenes_per_site = 20;
  int width = 64, height = 64;
  // background mix; vegetated takes the remainder
  double arid_fraction = 0.6;
  double offshore_fraction = 0.0;
  double active_site_fraction = 0.6;  // sites that emit at all
  double plume_frequency = 0.1;       // expected plume scenes over all scenes
  double flux_min = 1.0, flux_max = 8.0;  // t/h, uniform
  double wind_min = 1.0, wind_max = 7.0;  // m/s
  double noise = 0.003;                   // relative per band
  double noise_floor = 0.0005;            // absolute reflectance
  double cloud_probability = 0.25;
  double max_cloud_fraction = 0.4;
  double artifact_probability = 0.3;
  int revisit_days = 5;
  double landsat_fraction = 0.0;
  Timestamp start = make_time(2024, 3, 1, 10, 30);

  void validate() const {
    auto prob = [](double p) { return p >= 0.0 && p <= 1.0; };
    if (n_sites < 1 || scenes_per_site < 1 || width < 16 || height < 16 || revisit_days < 1)
      throw ArgumentError("fixture sizes must be positive");
    if (!prob(arid_fraction) || !prob(offshore_fraction) || arid_fraction + offshore_fraction > 1.0 ||
        !prob(active_site_fraction) || !prob(plume_frequency) || !prob(cloud_probability) ||
        !prob(max_cloud_fraction) || !prob(artifact_probability) || !prob(landsat_fraction))
      throw ArgumentError("fixture probabilities must lie in [0,1]");
    if (!(flux_min > 0 && flux_max >= flux_min) || !(wind_min > 0 && wind_max >= wind_min))
      throw ArgumentError("flux and wind bounds must be positive and ordered");
    if (noise < 0 || noise_floor < 0) throw ArgumentError("noise levels must be non-negative");
    if (active_site_fraction > 0 && plume_frequency / active_site_fraction > 1.0)
      throw ArgumentError("plume frequency exceeds what the active sites can carry");
  }
};

inline json to_json(const FixtureConfig& c) {
  return {{"seed", c.seed},
          {"n_sites", c.n_sites},
          {"scenes_per_site", c.scenes_per_site},
          {"width", c.width},
          {"height", c.height},
          {"arid_fraction", c.arid_fraction},
          {"offshore_fraction", c.offshore_fraction},
          {"active_site_fraction", c.active_site_fraction},
          {"plume_frequency", c.plume_frequency},
          {"flux_min", c.flux_min},
          {"flux_max", c.flux_max},
          {"wind_min", c.wind_min},
          {"wind_max", c.wind_max},
          {"noise", c.noise},
          {"noise_floor", c.noise_floor},
          {"cloud_probability", c.cloud_probability},
          {"max_cloud_fraction", c.max_cloud_fraction},
          {"artifact_probability", c.artifact_probability},
          {"revisit_days", c.revisit_days},
          {"landsat_fraction", c.landsat_fraction},
          {"start", to_rfc3339(c.start)}};
}

inline FixtureConfig fixture_config_from_json(const json& j) {
  FixtureConfig c;
#define MARSS2L_FIELD(name) c.name = j.value(#name, c.name)
  MARSS2L_FIELD(seed);
  MARSS2L_FIELD(n_sites);
  MARSS2L_FIELD(scenes_per_site);
  MARSS2L_FIELD(width);
  MARSS2L_FIELD(height);
  MARSS2L_FIELD(arid_fraction);
  MARSS2L_FIELD(offshore_fraction);
  MARSS2L_FIELD(active_site_fraction);
  MARSS2L_FIELD(plume_frequency);
  MARSS2L_FIELD(flux_min);
  MARSS2L_FIELD(flux_max);
  MARSS2L_FIELD(wind_min);
  MARSS2L_FIELD(wind_max);
  MARSS2L_FIELD(noise);
  MARSS2L_FIELD(noise_floor);
  MARSS2L_FIELD(cloud_probability);
  MARSS2L_FIELD(max_cloud_fraction);
  MARSS2L_FIELD(artifact_probability);
  MARSS2L_FIELD(revisit_days);
  MARSS2L_FIELD(landsat_fraction);
#undef MARSS2L_FIELD
  if (j.contains("start")) c.start = parse_rfc3339(j.at("start").get<std::string>());
  c.validate();
  return c;
}

struct LabelledScene {
  SceneImage scene;
  PlumeLabel label;
  bool has_plume = false;
  double flux_t_per_h = 0.0;
};

struct SiteSeries {
  SiteRecord site;
  Background background = Background::arid;
  std::vector<SceneImage> archive;  // earlier clear passes, usable as references only
  std::vector<LabelledScene> scenes;
};

namespace synth {

using Spectrum = std::array<double, kBandCount>;

/// Zero-mean, unit-variance Gaussian-smoothed white noise.
inline Plane smooth_field(int width, int height, double sigma, Rng& rng) {
  const int pad = int(std::ceil(3 * sigma));
  const int W = width + 2 * pad, H = height + 2 * pad;
  std::vector<double> a(std::size_t(W) * H), b(a.size());
  for (double& v : a) v = normal(rng);
  std::vector<double> k(std::size_t(2 * pad + 1));
  double ks = 0;
  for (int i = -pad; i <= pad; ++i) ks += k[std::size_t(i + pad)] = std::exp(-0.5 * i * i / (sigma * sigma));
  for (double& v : k) v /= ks;
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      double s = 0;
      for (int i = -pad; i <= pad; ++i) s += k[std::size_t(i + pad)] * a[std::size_t(y) * W + std::clamp(x + i, 0, W - 1)];
      b[std::size_t(y) * W + x] = s;
    }
  Plane out(width, height);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) {
      double s = 0;
      for (int i = -pad; i <= pad; ++i)
        s += k[std::size_t(i + pad)] * b[std::size_t(std::clamp(y + pad + i, 0, H - 1)) * W + x + pad];
      out(x, y) = float(s);
    }
  double mean = 0, var = 0;
  for (float v : out.values()) mean += v;
  mean /= double(out.size());
  for (float v : out.values()) var += (v - mean) * (v - mean);
  double sd = std::sqrt(var / double(out.size()));
  for (float& v : out.values()) v = float((v - mean) / (sd > 0 ? sd : 1.0));
  return out;
}

struct SiteProfile {
  Background background;
  Spectrum e1, e2;
  Plane material, albedo;
  int source_x = 32, source_y = 32;
  double plume_rate = 0.0;
};

inline SiteProfile make_profile(Background bg, int width, int height, Rng& rng) {
  SiteProfile p{bg, {}, {}, smooth_field(width, height, 7.0, rng), Plane(width, height), width / 2, height / 2, 0.0};
  Plane coarse = smooth_field(width, height, 5.0, rng), fine = smooth_field(width, height, 1.2, rng);
  for (std::size_t i = 0; i < p.albedo.size(); ++i) p.albedo[i] = 0.75f * coarse[i] + 0.35f * fine[i];
  auto jitter = [&](Spectrum s) {
    double g = 1.0 + normal(rng, 0.0, 0.05);
    for (double& v : s) v *= g * (1.0 + normal(rng, 0.0, 0.02));
    return s;
  };
  switch (bg) {
    case Background::arid:
      p.e1 = jitter({0.12, 0.17, 0.22, 0.28, 0.39, 0.31});
      p.e2 = jitter({0.10, 0.13, 0.17, 0.23, 0.34, 0.28});
      break;
    case Background::vegetated:
      p.e1 = jitter({0.03, 0.07, 0.04, 0.38, 0.21, 0.11});
      p.e2 = jitter({0.08, 0.11, 0.14, 0.24, 0.30, 0.22});
      break;
    case Background::offshore:
      p.e1 = jitter({0.07, 0.06, 0.05, 0.045, 0.042, 0.034});
      p.e2 = jitter({0.06, 0.05, 0.04, 0.038, 0.036, 0.030});
      break;
  }
  p.source_x = int(uniform(rng, 0.35, 0.65) * width);
  p.source_y = int(uniform(rng, 0.35, 0.65) * height);
  return p;
}

inline Spectrum background_at(const SiteProfile& p, std::size_t i) {
  double m = 0.5 + 0.5 * std::tanh(0.9 * p.material[i]);
  double texture = p.background == Background::offshore ? 0.05 : 0.12;
  double a = 1.0 + texture * p.albedo[i];
  Spectrum s;
  for (int b = 0; b < kBandCount; ++b) s[std::size_t(b)] = ((1.0 - m) * p.e1[std::size_t(b)] + m * p.e2[std::size_t(b)]) * a;
  return s;
}

struct Acquisition {
  Timestamp time;
  Sensor sensor = Sensor::S2;
  Geometry geometry;
  double wind_u = 0, wind_v = 0;
};

inline Acquisition draw_acquisition(const FixtureConfig& cfg, Timestamp t, Rng& rng) {
  Acquisition a;
  a.time = t;
  a.sensor = bernoulli(rng, cfg.landsat_fraction) ? Sensor::Landsat : Sensor::S2;
  a.geometry = {uniform(rng, 20.0, 50.0), uniform(rng, 0.0, 8.0)};
  double speed = uniform(rng, cfg.wind_min, cfg.wind_max), dir = uniform(rng, 0.0, 2 * std::numbers::pi);
  a.wind_u = speed * std::cos(dir);
  a.wind_v = speed * std::sin(dir);
  return a;
}

/// Clean scene from the site background with per-pass illumination gain.
inline SceneImage base_scene(const SiteProfile& p, const std::string& site_id, const Acquisition& a, int width,
                             int height, Rng& rng) {
  SceneImage s;
  s.site_id = site_id;
  s.acquisition_time = a.time;
  s.sensor = a.sensor;
  s.geometry = a.geometry;
  s.wind_u = a.wind_u;
  s.wind_v = a.wind_v;
  for (Plane& b : s.bands) b = Plane(width, height);
  s.cloud_mask = Grid<CloudState>(width, height, CloudState::clear);
  double gain = 1.0 + normal(rng, 0.0, 0.03);
  Spectrum tilt;
  for (double& t : tilt) t = 1.0 + normal(rng, 0.0, 0.01);
  for (std::size_t i = 0; i < s.bands[0].size(); ++i) {
    Spectrum r = background_at(p, i);
    for (int b = 0; b < kBandCount; ++b) s.bands[std::size_t(b)][i] = float(r[std::size_t(b)] * gain * tilt[std::size_t(b)]);
  }
  return s;
}

/// Surface change (e.g. wet soil) that darkens both SWIR bands unequally and the
/// visible bands strongly, so a band ratio alone mistakes it for absorption.
inline void add_surface_artifact(SceneImage& s, Rng& rng) {
  const int W = s.width(), H = s.height();
  double cx = uniform(rng, 8, W - 8), cy = uniform(rng, 8, H - 8);
  double ra = uniform(rng, 5, 12), rb = uniform(rng, 5, 12), th = uniform(rng, 0, std::numbers::pi);
  double k = uniform(rng, 0.6, 1.4);
  const Spectrum factor = {1 - 0.15 * k, 1 - 0.15 * k, 1 - 0.15 * k, 1 - 0.10 * k, 1 - 0.04 * k, 1 - 0.07 * k};
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      double dx = x - cx, dy = y - cy;
      double u = (dx * std::cos(th) + dy * std::sin(th)) / ra, v = (-dx * std::sin(th) + dy * std::cos(th)) / rb;
      double r2 = u * u + v * v;
      if (r2 > 1.0) continue;
      double edge = std::min(1.0, 4.0 * (1.0 - r2));
      for (int b = 0; b < kBandCount; ++b) s.bands[std::size_t(b)](x, y) *= float(1.0 - edge * (1.0 - factor[std::size_t(b)]));
    }
}

inline void add_clouds(SceneImage& s, double fraction, Rng& rng) {
  const int W = s.width(), H = s.height();
  Plane f = smooth_field(W, H, 4.0, rng);
  std::vector<float> sorted(f.values().begin(), f.values().end());
  std::sort(sorted.begin(), sorted.end());
  float cut = sorted[std::min(sorted.size() - 1, std::size_t((1.0 - fraction) * double(sorted.size())))];
  const Spectrum cloud = {0.45, 0.45, 0.47, 0.50, 0.35, 0.25};
  const int sx = 5, sy = 3;
  Mask is_cloud(W, H, 0);
  for (std::size_t i = 0; i < f.size(); ++i) is_cloud[i] = f[i] >= cut;
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      if (is_cloud(x, y)) {
        for (int b = 0; b < kBandCount; ++b) {
          float& v = s.bands[std::size_t(b)](x, y);
          v = float(0.15 * v + 0.85 * cloud[std::size_t(b)]);
        }
        s.cloud_mask(x, y) = CloudState::cloud;
      } else {
        int ox = x - sx, oy = y - sy;
        if (ox >= 0 && oy >= 0 && is_cloud(ox, oy)) {
          for (Plane& b : s.bands) b(x, y) *= 0.45f;
          s.cloud_mask(x, y) = CloudState::shadow;
        }
      }
    }
}

inline void add_noise(SceneImage& s, double relative, double floor, Rng& rng) {
  for (Plane& b : s.bands)
    for (float& v : b.values()) v = std::max(0.0f, float(v * (1.0 + normal(rng, 0.0, relative)) + normal(rng, 0.0, floor)));
}

}  // namespace synth

/// Plume mask area in pixels targeted for a given flux.
inline double plume_area_for_flux(double flux_t_per_h) { return 100.0 + 35.0 * flux_t_per_h; }

/// Elongated plume drifting downwind from a source pixel, scaled so that the IME/flux
/// model returns exactly `flux_t_per_h` for the generated mask and wind.
inline PlumeLabel generate_plume(double flux_t_per_h, double wind_u, double wind_v, int source_x, int source_y,
                                 int width, int height, Rng& rng, const FluxModel& model = {}) {
  if (!(flux_t_per_h > 0)) throw ArgumentError("plume flux must be positive");
  double speed = std::hypot(wind_u, wind_v);
  if (!(speed > 0)) throw ArgumentError("plume generation needs a non-zero wind");
  const double dx = wind_u / speed, dy = -wind_v / speed;  // rows grow southward
  Plane texture = synth::smooth_field(width, height, 2.0, rng);
  double meander = normal(rng, 0.0, 0.015);
  auto field = [&](double length, Plane& f) {
    for (int y = 0; y < height; ++y)
      for (int x = 0; x < width; ++x) {
        double rx = x - source_x, ry = y - source_y;
        double a = rx * dx + ry * dy, c = -rx * dy + ry * dx - meander * a * a;
        double sc = 1.2 + 0.3 * std::max(a, 0.0);
        double g = a >= 0 ? std::exp(-a / length) : std::exp(-a * a / 4.5);
        double t = std::max(0.3, 1.0 + 0.25 * texture(x, y));
        f(x, y) = float(std::exp(-c * c / (2 * sc * sc)) * g * t / std::sqrt(sc));
      }
  };
  auto area_of = [&](const Plane& f) {
    float peak = *std::max_element(f.values().begin(), f.values().end());
    std::size_t n = 0;
    for (float v : f.values()) n += v >= 0.15f * peak;
    return double(n);
  };
  const double target = plume_area_for_flux(flux_t_per_h);
  Plane f(width, height);
  double lo = 0.5, hi = 200.0;
  for (int it = 0; it < 40; ++it) {
    double mid = std::sqrt(lo * hi);
    field(mid, f);
    (area_of(f) < target ? lo : hi) = mid;
  }
  field(hi, f);
  float peak = *std::max_element(f.values().begin(), f.values().end());
  PlumeLabel label{Mask(width, height, 0), Plane(width, height, 0.0f), flux_t_per_h};
  double sum = 0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < f.size(); ++i)
    if (f[i] >= 0.15f * peak) label.mask[i] = 1, sum += f[i], ++n;
  double length_m = std::sqrt(double(n) * kPixelAreaM2);
  double ime_kg = flux_t_per_h * 1000.0 / 3600.0 * length_m / model.effective_wind(speed);
  double scale = ime_kg / (sum * kPixelAreaM2 * kMethaneMolarMass);
  for (std::size_t i = 0; i < f.size(); ++i)
    if (label.mask[i]) label.delta_ch4[i] = float(f[i] * scale);
  return label;
}

inline SiteRecord synthetic_site_record(const FixtureConfig& cfg, int site_index, Background bg, Rng& rng) {
  SiteRecord r;
  char id[32];
  std::snprintf(id, sizeof id, "site-%03d", site_index);
  r.site_id = id;
  r.name = std::string(to_string(bg)) + " facility " + std::to_string(site_index);
  static const std::array<const char*, 5> countries = {"DZ", "TM", "US", "LY", "IQ"};
  r.country = countries[uniform_index(rng, countries.size())];
  r.latitude = uniform(rng, -60.0, 60.0);
  r.longitude = uniform(rng, -179.0, 179.0);
  r.facility_type = bg == Background::offshore ? "offshore_platform"
                    : bg == Background::arid   ? "oil_gas_production"
                                               : "landfill";
  if (bernoulli(rng, 0.7)) r.operator_name = "Operator " + std::to_string(1 + uniform_index(rng, 12));
  r.offshore = bg == Background::offshore;
  (void)cfg;
  return r;
}

/// One site's archive pass plus `scenes_per_site` acquisitions, a pure function of
/// (config, site_index).
inline SiteSeries generate_site_series(const PlumePhysics& physics, const FixtureConfig& cfg, int site_index) {
  cfg.validate();
  Rng rng(derive_seed(cfg.seed, std::uint64_t(site_index)));
  double u = uniform01(rng);
  Background bg = u < cfg.offshore_fraction                      ? Background::offshore
                  : u < cfg.offshore_fraction + cfg.arid_fraction ? Background::arid
                                                                  : Background::vegetated;
  SiteSeries series;
  series.background = bg;
  series.site = synthetic_site_record(cfg, site_index, bg, rng);
  synth::SiteProfile profile = synth::make_profile(bg, cfg.width, cfg.height, rng);
  bool active = bernoulli(rng, cfg.active_site_fraction);
  profile.plume_rate = active && cfg.active_site_fraction > 0 ? cfg.plume_frequency / cfg.active_site_fraction : 0.0;

  const auto step = std::chrono::days(cfg.revisit_days);
  {
    auto acq = synth::draw_acquisition(cfg, cfg.start - step, rng);
    SceneImage s = synth::base_scene(profile, series.site.site_id, acq, cfg.width, cfg.height, rng);
    synth::add_noise(s, cfg.noise, cfg.noise_floor, rng);
    series.archive.push_back(std::move(s));
  }
  for (int i = 0; i < cfg.scenes_per_site; ++i) {
    auto acq = synth::draw_acquisition(cfg, cfg.start + i * step, rng);
    LabelledScene ls;
    ls.scene = synth::base_scene(profile, series.site.site_id, acq, cfg.width, cfg.height, rng);
    ls.label = empty_label(cfg.width, cfg.height);
    if (bernoulli(rng, cfg.artifact_probability)) synth::add_surface_artifact(ls.scene, rng);
    if (bernoulli(rng, profile.plume_rate)) {
      ls.flux_t_per_h = uniform(rng, cfg.flux_min, cfg.flux_max);
      ls.label = generate_plume(ls.flux_t_per_h, acq.wind_u, acq.wind_v, profile.source_x, profile.source_y, cfg.width,
                                cfg.height, rng);
      ls.has_plume = true;
      ls.scene = simulate_plume(physics, ls.scene, ls.label.delta_ch4);
    }
    if (bernoulli(rng, cfg.cloud_probability))
      synth::add_clouds(ls.scene, uniform(rng, 0.03, cfg.max_cloud_fraction), rng);
    synth::add_noise(ls.scene, cfg.noise, cfg.noise_floor, rng);
    series.scenes.push_back(std::move(ls));
  }
  return series;
}

inline std::vector<SiteSeries> generate_fixture(const PlumePhysics& physics, const FixtureConfig& cfg, int first = 0,
                                                int count = -1) {
  if (count < 0) count = cfg.n_sites - first;
  std::vector<SiteSeries> out;
  for (int i = first; i < first + count; ++i) out.push_back(generate_site_series(physics, cfg, i));
  return out;
}

struct ReleaseConfig {
  std::uint64_t seed = 7;
  std::vector<double> ladder = {0.75, 1.0, 1.25, 1.5, 2.0, 3.5, 5.0, 7.5};  // t/h
  int repeats = 3;
  int no_emission = 10;
  double wind_min = 2.0, wind_max = 5.0;
  Background background = Background::arid;
  int width = 64, height = 64;
  double noise = 0.003, noise_floor = 0.0005;
};

/// Controlled-release analogue at one site: every release (and every no-emission
/// overpass) is a short series of one clean earlier pass and the test acquisition.
inline std::vector<SiteSeries> controlled_release_scenario(const PlumePhysics& physics, const ReleaseConfig& cfg) {
  if (cfg.repeats < 0 || cfg.no_emission < 0) throw ArgumentError("release counts must be non-negative");
  for (double q : cfg.ladder)
    if (!(q > 0)) throw ArgumentError("release rates must be positive");
  Rng rng(derive_seed(cfg.seed, 0xC0FFEE));
  FixtureConfig fc;
  fc.width = cfg.width, fc.height = cfg.height, fc.wind_min = cfg.wind_min, fc.wind_max = cfg.wind_max;
  SiteRecord site = synthetic_site_record(fc, 900, cfg.background, rng);
  site.site_id = "release-site";
  site.name = "controlled release test site";
  synth::SiteProfile profile = synth::make_profile(cfg.background, cfg.width, cfg.height, rng);
  std::vector<double> rates;
  for (double q : cfg.ladder)
    for (int r = 0; r < cfg.repeats; ++r) rates.push_back(q);
  for (int r = 0; r < cfg.no_emission; ++r) rates.push_back(0.0);
  std::vector<SiteSeries> out;
  Timestamp t = make_time(2022, 10, 10, 18, 0);
  for (double q : rates) {
    SiteSeries s;
    s.site = site;
    s.background = cfg.background;
    auto ref = synth::draw_acquisition(fc, t - std::chrono::days(5), rng);
    SceneImage r = synth::base_scene(profile, site.site_id, ref, cfg.width, cfg.height, rng);
    synth::add_noise(r, cfg.noise, cfg.noise_floor, rng);
    s.archive.push_back(std::move(r));
    auto acq = synth::draw_acquisition(fc, t, rng);
    LabelledScene ls;
    ls.scene = synth::base_scene(profile, site.site_id, acq, cfg.width, cfg.height, rng);
    ls.label = empty_label(cfg.width, cfg.height);
    if (q > 0) {
      ls.flux_t_per_h = q;
      ls.has_plume = true;
      ls.label = generate_plume(q, acq.wind_u, acq.wind_v, profile.source_x, profile.source_y, cfg.width, cfg.height, rng);
      ls.scene = simulate_plume(physics, ls.scene, ls.label.delta_ch4);
    }
    synth::add_noise(ls.scene, cfg.noise, cfg.noise_floor, rng);
    s.scenes.push_back(std::move(ls));
    out.push_back(std::move(s));
    t += std::chrono::days(1);
  }
  return out;
}

// Label files reuse the band-stack container: planes "mask" (u8) and "delta_ch4" (f32),
// with the flux in the sidecar.
inline void save_label(const PlumeLabel& label, const fs::path& path) {
  BandStack st{label.mask.width(), label.mask.height(), {}};
  st.planes.push_back({"mask", label.mask});
  st.planes.push_back({"delta_ch4", label.delta_ch4});
  write_band_stack(path, st);
  json side = {{"flux_t_per_h", label.flux_t_per_h ? json(*label.flux_t_per_h) : json(nullptr)}, {"units", "mol/m^2"}};
  write_json_file(sidecar_path(path), side);
}

inline PlumeLabel load_label(const fs::path& path) {
  BandStack st = read_band_stack(path);
  const NamedPlane* m = st.find("mask");
  const NamedPlane* d = st.find("delta_ch4");
  if (!m || !d || m->dtype() != DType::u8 || d->dtype() != DType::f32) throw IntegrityError("label file lacks mask/delta_ch4");
  PlumeLabel l{std::get<Mask>(m->data), std::get<Plane>(d->data), std::nullopt};
  json side = read_json_file(sidecar_path(path));
  if (side.contains("flux_t_per_h") && !side["flux_t_per_h"].is_null()) l.flux_t_per_h = side["flux_t_per_h"].get<double>();
  validate(l);
  return l;
}

/// Writes scenes, labels, the site registry and a labels manifest under `dir`.
inline json write_fixture(const std::vector<SiteSeries>& series, const fs::path& dir) {
  fs::create_directories(dir / "scenes");
  fs::create_directories(dir / "labels");
  json manifest = json::array();
  json registry = json::array();
  std::vector<std::string> seen;
  for (const auto& s : series) {
    if (std::find(seen.begin(), seen.end(), s.site.site_id) == seen.end()) {
      registry.push_back(to_json(s.site));
      seen.push_back(s.site.site_id);
    }
    for (const auto& a : s.archive) {
      std::string stem = a.site_id + "_" + compact_time(a.acquisition_time);
      save_scene(a, dir / "scenes" / (stem + ".ms2l"));
      manifest.push_back({{"scene", "scenes/" + stem + ".ms2l"}, {"site_id", a.site_id},
                          {"acquisition_time", to_rfc3339(a.acquisition_time)}, {"role", "archive"},
                          {"has_plume", false}});
    }
    for (const auto& ls : s.scenes) {
      std::string stem = ls.scene.site_id + "_" + compact_time(ls.scene.acquisition_time);
      save_scene(ls.scene, dir / "scenes" / (stem + ".ms2l"));
      json e = {{"scene", "scenes/" + stem + ".ms2l"}, {"site_id", ls.scene.site_id},
                {"acquisition_time", to_rfc3339(ls.scene.acquisition_time)}, {"role", "observation"},
                {"has_plume", ls.has_plume}};
      if (ls.has_plume) {
        save_label(ls.label, dir / "labels" / (stem + ".ms2l"));
        e["label"] = "labels/" + stem + ".ms2l";
        e["flux_t_per_h"] = ls.flux_t_per_h;
      }
      manifest.push_back(e);
    }
  }
  write_json_file(dir / "sites.json", registry);
  write_json_file(dir / "labels.json", manifest);
  return manifest;
}

}  // namespace marss2l
