#pragma once

// Plume injection into clear scenes: band-transmittance scaling of the SWIR
// planes, the wind-consistency rule for donor plumes and donor rotation.

#include <cmath>
#include <numbers>
#include <optional>

#include "marss2l/raster.hpp"
#include "marss2l/spectral.hpp"

namespace marss2l {

/// swir1 and swir2 scaled by their band transmittances; everything else untouched.
inline SceneImage inject_plume(const SceneImage& scene, const Plane& tau_swir1, const Plane& tau_swir2) {
  if (!tau_swir1.same_shape(scene.band(Band::swir1)) || !tau_swir2.same_shape(scene.band(Band::swir2)))
    throw ArgumentError("transmittance maps differ in shape from the scene");
  for (const Plane* t : {&tau_swir1, &tau_swir2})
    for (float v : t->values())
      if (!(v > 0.0f && v <= 1.0f)) throw ArgumentError("transmittance outside (0,1]");
  SceneImage out = scene;
  Plane& s1 = out.band(Band::swir1);
  Plane& s2 = out.band(Band::swir2);
  for (std::size_t i = 0; i < s1.size(); ++i) {
    s1[i] *= tau_swir1[i];
    s2[i] *= tau_swir2[i];
  }
  return out;
}

/// LUT plus spectral context, built once and shared read-only.
struct PlumePhysics {
  TransmittanceLUT lut;
  SpectralContext ctx;

  static PlumePhysics standard(const LutConfig& cfg = {}) {
    PlumePhysics p{build_toy_lut(cfg), {}};
    p.ctx = make_standard_context(p.lut.wavelength_nm);
    return p;
  }
};

/// Injects a column-enhancement map into a scene at the scene's geometry and sensor.
inline SceneImage simulate_plume(const PlumePhysics& physics, const SceneImage& scene, const Plane& delta_ch4) {
  auto t1 = band_transmittance(physics.lut, physics.ctx, delta_ch4, scene.geometry, Band::swir1, scene.sensor);
  auto t2 = band_transmittance(physics.lut, physics.ctx, delta_ch4, scene.geometry, Band::swir2, scene.sensor);
  return inject_plume(scene, t1.tau, t2.tau);
}

inline constexpr double kMaxWindSpeedDifference = 1.5;  // m/s
inline constexpr double kMaxSimulationWindSpeed = 9.0;  // m/s

/// A donor plume may go into a clear image only under similar wind, and never above 9 m/s.
inline bool wind_compatible(double plume_wind_speed, double clear_wind_speed) {
  if (plume_wind_speed < 0.0 || clear_wind_speed < 0.0) throw ArgumentError("wind speeds must be non-negative");
  return std::abs(plume_wind_speed - clear_wind_speed) < kMaxWindSpeedDifference &&
         clear_wind_speed <= kMaxSimulationWindSpeed;
}

/// Direction of travel of a wind vector, degrees counter-clockwise from east.
inline double wind_direction_deg(double u, double v) { return std::atan2(v, u) * 180.0 / std::numbers::pi; }

/// Pixel with the largest column enhancement (first in row-major order on ties).
inline std::pair<int, int> plume_origin(const PlumeLabel& label) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < label.delta_ch4.size(); ++i)
    if (label.delta_ch4[i] > label.delta_ch4[best]) best = i;
  int w = label.delta_ch4.width();
  return {int(best % std::size_t(w)), int(best / std::size_t(w))};
}

/// Rotates a plume about its origin pixel by (to - from) degrees counter-clockwise on the
/// map (north up). delta_ch4 is sampled bilinearly and the mask by nearest neighbour;
/// the result is rescaled inside the rotated mask so the column total equals the original
/// total times the fraction that stays on the grid. Returns nullopt when more than 20% of
/// the plume mass leaves the grid.
inline std::optional<PlumeLabel> rotate_plume(const PlumeLabel& label, double from_direction_deg,
                                              double to_direction_deg) {
  if (label.pixel_count() == 0) throw ArgumentError("cannot rotate an empty plume");
  const int W = label.mask.width(), H = label.mask.height();
  double angle = std::fmod(to_direction_deg - from_direction_deg, 360.0);
  if (angle < 0) angle += 360.0;
  double c, s;
  if (angle == 0.0) {
    c = 1.0, s = 0.0;
  } else if (angle == 90.0) {
    c = 0.0, s = 1.0;
  } else if (angle == 180.0) {
    c = -1.0, s = 0.0;
  } else if (angle == 270.0) {
    c = 0.0, s = -1.0;
  } else {
    double rad = angle * std::numbers::pi / 180.0;
    c = std::cos(rad), s = std::sin(rad);
  }
  auto [ox, oy] = plume_origin(label);
  auto sample = [&](double sx, double sy) -> double {
    int x0 = int(std::floor(sx)), y0 = int(std::floor(sy));
    double fx = sx - x0, fy = sy - y0;
    double acc = 0.0;
    for (int dy = 0; dy < 2; ++dy)
      for (int dx = 0; dx < 2; ++dx) {
        int x = x0 + dx, y = y0 + dy;
        if (x < 0 || y < 0 || x >= W || y >= H) continue;
        double w = (dx ? fx : 1.0 - fx) * (dy ? fy : 1.0 - fy);
        if (w != 0.0) acc += w * label.delta_ch4(x, y);
      }
    return acc;
  };
  PlumeLabel out{Mask(W, H, 0), Plane(W, H, 0.0f), label.flux_t_per_h};
  std::vector<double> rotated(std::size_t(W) * H, 0.0);
  double total = 0.0, inside = 0.0;
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      // Pixel rows grow southward, so a counter-clockwise map rotation has this inverse.
      double dx = x - ox, dy = y - oy;
      double sx = ox + dx * c - dy * s;
      double sy = oy + dx * s + dy * c;
      double v = sample(sx, sy);
      std::size_t i = std::size_t(y) * W + x;
      rotated[i] = v;
      total += v;
      int nx = int(std::lround(sx)), ny = int(std::lround(sy));
      if (nx >= 0 && ny >= 0 && nx < W && ny < H && label.mask(nx, ny)) {
        out.mask[i] = 1;
        inside += v;
      }
    }
  // Bilinear mass over a canvas large enough to hold the whole rotated plume.
  double canvas = 0.0;
  for (int y = -2 * H; y < 3 * H; ++y)
    for (int x = -2 * W; x < 3 * W; ++x) {
      double dx = x - ox, dy = y - oy;
      canvas += sample(ox + dx * c - dy * s, oy + dx * s + dy * c);
    }
  const double on_grid = canvas > 0.0 ? total / canvas : 0.0;
  if (on_grid < 0.8) return std::nullopt;
  const double scale = inside > 0.0 ? label.total_column() * on_grid / inside : 0.0;
  for (std::size_t i = 0; i < rotated.size(); ++i)
    if (out.mask[i]) out.delta_ch4[i] = float(rotated[i] * scale);
  return out;
}

}  // namespace marss2l
