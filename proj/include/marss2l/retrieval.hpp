#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "marss2l/band_stack.hpp"
#include "marss2l/raster.hpp"
#include "marss2l/spectral.hpp"

namespace marss2l {

enum class RetrievalMethod { MBMP, MBSP };

inline const char* to_string(RetrievalMethod m) { return m == RetrievalMethod::MBMP ? "MBMP" : "MBSP"; }

struct RetrievalProduct {
  Plane ratio;  // NaN marks pixels invalid in either input
  RetrievalMethod method = RetrievalMethod::MBSP;
  std::optional<Timestamp> reference_time;
  std::optional<Plane> delta_ch4;  // mol/m^2

  bool valid(std::size_t i) const { return std::isfinite(ratio[i]); }
};

struct RetrievalConfig {
  double radiance_floor = 1e-4;  // reflectance below which swir1 is masked
  std::size_t min_clear_pixels = 100;
  std::chrono::days reference_window{122};
};

namespace detail {

inline double median_of(std::vector<double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  auto mid = v.begin() + std::ptrdiff_t(v.size() / 2);
  std::nth_element(v.begin(), mid, v.end());
  double m = *mid;
  if (v.size() % 2 == 0) m = 0.5 * (m + *std::max_element(v.begin(), mid));
  return m;
}

/// Least-squares scale c minimising sum (c*x - y)^2, refitted once after dropping
/// samples whose scaled ratio c*x/y sits beyond 3 robust sigmas (floor 1e-3) of the median.
inline double robust_scale(const std::vector<double>& x, const std::vector<double>& y) {
  auto fit = [&](const std::vector<char>& keep) {
    double sxy = 0.0, sxx = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i)
      if (keep[i]) {
        sxy += x[i] * y[i];
        sxx += x[i] * x[i];
      }
    return sxx > 0.0 ? sxy / sxx : std::numeric_limits<double>::quiet_NaN();
  };
  std::vector<char> keep(x.size(), 1);
  double c = fit(keep);
  if (!std::isfinite(c)) return c;
  std::vector<double> r(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) r[i] = c * x[i] / y[i];
  double med = median_of(r);
  std::vector<double> dev(r.size());
  for (std::size_t i = 0; i < r.size(); ++i) dev[i] = std::abs(r[i] - med);
  double cut = std::max(3.0 * 1.4826 * median_of(dev), 1e-3);
  std::size_t kept = 0;
  for (std::size_t i = 0; i < r.size(); ++i) kept += keep[i] = std::abs(r[i] - med) <= cut;
  return kept > 0 ? fit(keep) : c;
}

}  // namespace detail

/// Single-pass ratio c * swir2 / swir1, with c regressing swir1 onto swir2 over clear pixels.
inline RetrievalProduct mbsp(const SceneImage& scene, const RetrievalConfig& cfg = {}) {
  const Plane& s1 = scene.band(Band::swir1);
  const Plane& s2 = scene.band(Band::swir2);
  std::vector<double> x, y;
  for (std::size_t i = 0; i < s1.size(); ++i)
    if (s1[i] >= cfg.radiance_floor && scene.cloud_mask[i] == CloudState::clear) {
      x.push_back(s2[i]);
      y.push_back(s1[i]);
    }
  if (x.size() < cfg.min_clear_pixels) throw InsufficientDataError("too few clear pixels for MBSP scaling");
  double c = detail::robust_scale(x, y);
  if (!(std::isfinite(c) && c > 0.0)) throw InsufficientDataError("degenerate swir2 plane for MBSP scaling");
  RetrievalProduct p{Plane(scene.width(), scene.height(), 0.0f), RetrievalMethod::MBSP, std::nullopt, std::nullopt};
  for (std::size_t i = 0; i < s1.size(); ++i)
    p.ratio[i] = s1[i] >= cfg.radiance_floor ? float(c * s2[i] / s1[i]) : std::numeric_limits<float>::quiet_NaN();
  return p;
}

/// Multi-pass ratio: the per-pass swir2/swir1 ratios divided pixelwise, rescaled by one
/// constant so plume-free pixels sit at 1. Equivalent to mbsp(scene) / mbsp(reference)
/// with the two per-pass scalings fused into a single fit.
inline RetrievalProduct mbmp(const SceneImage& scene, const SceneImage& reference, const RetrievalConfig& cfg = {}) {
  if (scene.width() != reference.width() || scene.height() != reference.height())
    throw ArgumentError("scene and reference differ in shape");
  const Plane &t1 = scene.band(Band::swir1), &t2 = scene.band(Band::swir2);
  const Plane &r1 = reference.band(Band::swir1), &r2 = reference.band(Band::swir2);
  const float nan = std::numeric_limits<float>::quiet_NaN();
  std::vector<double> raw(t1.size(), std::numeric_limits<double>::quiet_NaN());
  std::vector<double> x, ones;
  for (std::size_t i = 0; i < t1.size(); ++i) {
    if (t1[i] < cfg.radiance_floor || r1[i] < cfg.radiance_floor || r2[i] < cfg.radiance_floor) continue;
    raw[i] = (double(t2[i]) / t1[i]) / (double(r2[i]) / r1[i]);
    if (scene.cloud_mask[i] == CloudState::clear && reference.cloud_mask[i] == CloudState::clear) {
      x.push_back(raw[i]);
      ones.push_back(1.0);
    }
  }
  if (x.size() < cfg.min_clear_pixels) throw InsufficientDataError("too few mutually clear pixels for MBMP");
  double c = detail::robust_scale(x, ones);
  if (!(std::isfinite(c) && c > 0.0)) throw InsufficientDataError("degenerate MBMP scaling");
  RetrievalProduct p{Plane(scene.width(), scene.height(), nan), RetrievalMethod::MBMP, reference.acquisition_time,
                     std::nullopt};
  for (std::size_t i = 0; i < raw.size(); ++i)
    if (std::isfinite(raw[i])) p.ratio[i] = float(c * raw[i]);
  return p;
}

/// Mean absolute reflectance difference over blue, green, red and swir1 on mutually
/// clear pixels; nullopt when no pixel is clear in both.
inline std::optional<double> reference_dissimilarity(const SceneImage& a, const SceneImage& b) {
  if (a.width() != b.width() || a.height() != b.height()) return std::nullopt;
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < a.cloud_mask.size(); ++i) {
    if (a.cloud_mask[i] != CloudState::clear || b.cloud_mask[i] != CloudState::clear) continue;
    for (Band band : {Band::blue, Band::green, Band::red, Band::swir1})
      sum += std::abs(double(a.band(band)[i]) - double(b.band(band)[i]));
    n += 4;
  }
  if (n == 0) return std::nullopt;
  return sum / double(n);
}

/// Index of the most similar clear candidate acquired within the window before the
/// target. Ties go to the most recent acquisition, then to the lexicographically
/// smaller swir1 plane so the choice does not depend on candidate order.
inline std::optional<std::size_t> select_reference_index(const SceneImage& target,
                                                         std::span<const SceneImage* const> candidates,
                                                         const RetrievalConfig& cfg = {}) {
  std::optional<std::size_t> best;
  double best_score = 0.0;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const SceneImage& c = *candidates[i];
    if (c.site_id != target.site_id) continue;
    if (!(c.acquisition_time < target.acquisition_time)) continue;
    if (c.acquisition_time < target.acquisition_time - cfg.reference_window) continue;
    if (!passes_clear_filter(c)) continue;
    auto score = reference_dissimilarity(target, c);
    if (!score) continue;
    bool better = !best || *score < best_score;
    if (best && *score == best_score) {
      const SceneImage& b = *candidates[*best];
      if (c.acquisition_time != b.acquisition_time)
        better = c.acquisition_time > b.acquisition_time;
      else
        better = c.band(Band::swir1).storage() < b.band(Band::swir1).storage();
    }
    if (better) {
      best = i;
      best_score = *score;
    }
  }
  return best;
}

inline SceneImage select_reference(const SceneImage& target, std::span<const SceneImage> candidates,
                                   const RetrievalConfig& cfg = {}) {
  std::vector<const SceneImage*> ptrs;
  for (const auto& c : candidates) ptrs.push_back(&c);
  auto idx = select_reference_index(target, ptrs, cfg);
  if (!idx) throw NoReferenceError("no clear reference within the window for site " + target.site_id);
  return candidates[*idx];
}

/// Column enhancement from the band-ratio transmittance; masked pixels map to 0.
inline Plane invert_to_concentration(const RetrievalProduct& product, const TransmittanceLUT& lut,
                                     const SpectralContext& ctx, const Geometry& geometry, Sensor sensor) {
  RatioInverter inv(lut, ctx, geometry, sensor);
  Plane out(product.ratio.width(), product.ratio.height(), 0.0f);
  for (std::size_t i = 0; i < out.size(); ++i)
    if (product.valid(i)) out[i] = float(inv(product.ratio[i]));
  return out;
}

inline void save_retrieval(const RetrievalProduct& p, const fs::path& path) {
  BandStack st{p.ratio.width(), p.ratio.height(), {{"ratio", p.ratio}}};
  if (p.delta_ch4) st.planes.push_back({"delta_ch4", *p.delta_ch4});
  write_band_stack(path, st);
  json side = {{"method", to_string(p.method)}, {"grid_resolution_m", 10}};
  side["reference_time"] = p.reference_time ? json(to_rfc3339(*p.reference_time)) : json(nullptr);
  write_json_file(sidecar_path(path), side);
}

inline RetrievalProduct load_retrieval(const fs::path& path) {
  BandStack st = read_band_stack(path);
  const NamedPlane* r = st.find("ratio");
  if (!r || r->dtype() != DType::f32) throw IntegrityError("retrieval lacks an f32 ratio plane");
  RetrievalProduct p;
  p.ratio = std::get<Plane>(r->data);
  if (const NamedPlane* d = st.find("delta_ch4")) p.delta_ch4 = std::get<Plane>(d->data);
  json side = read_json_file(sidecar_path(path));
  std::string m = side.value("method", "");
  if (m == "MBMP")
    p.method = RetrievalMethod::MBMP;
  else if (m == "MBSP")
    p.method = RetrievalMethod::MBSP;
  else
    throw FormatError("unknown retrieval method '" + m + "'");
  if (side.contains("reference_time") && !side["reference_time"].is_null())
    p.reference_time = parse_rfc3339(side["reference_time"].get<std::string>());
  return p;
}

}  // namespace marss2l
