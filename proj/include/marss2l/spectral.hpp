#pragma once

// Methane transmittance look-up tables, solar/atmospheric spectra, sensor
// spectral response functions and band-integrated plume transmittance.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "marss2l/band_stack.hpp"
#include "marss2l/raster.hpp"
#include "marss2l/spline.hpp"

namespace marss2l {

inline constexpr double kAvogadro = 6.02214076e23;
inline constexpr double kBackgroundPpb = 1800.0;
// Molar density of air near the surface (p / RT at 1013 hPa, 293 K), mol/m^3.
inline constexpr double kAirMolarDensity = 41.6;

/// mol/m^2 column enhancement expressed as ppb·m for display.
inline double mol_m2_to_ppb_m(double delta_ch4) { return delta_ch4 / kAirMolarDensity * 1e9; }
inline double ppb_m_to_mol_m2(double ppb_m) { return ppb_m * kAirMolarDensity * 1e-9; }

inline double air_mass_factor(const Geometry& g) {
  constexpr double deg = std::numbers::pi / 180.0;
  return 1.0 / std::cos(g.solar_zenith * deg) + 1.0 / std::cos(g.viewing_zenith * deg);
}

struct AbsorptionLine {
  double center_nm;
  double width_nm;          // Gaussian standard deviation
  double cross_section_cm2; // peak cross-section per molecule
};

/// Parametric methane cross-section: one Gaussian mixture near 1660 nm and one near 2300 nm.
struct AbsorptionModel {
  std::vector<AbsorptionLine> lines = {
      {1645.0, 9.0, 0.5e-21},  {1666.0, 7.0, 1.35e-21}, {1690.0, 12.0, 0.45e-21},
      {2225.0, 22.0, 1.1e-21}, {2265.0, 20.0, 2.25e-21}, {2305.0, 26.0, 5.5e-21},
      {2355.0, 30.0, 4.0e-21}};

  double sigma(double lambda_nm) const {
    double s = 0.0;
    for (const auto& l : lines) {
      double z = (lambda_nm - l.center_nm) / l.width_nm;
      s += l.cross_section_cm2 * std::exp(-0.5 * z * z);
    }
    return s;
  }

  /// Beer-Lambert transmittance of a column enhancement (mol/m^2) along air-mass factor amf.
  double transmittance(double lambda_nm, double delta_ch4, double amf) const {
    return std::exp(-sigma(lambda_nm) * delta_ch4 * kAvogadro * 1e-4 * amf);
  }
};

struct LutConfig {
  double wavelength_start_nm = 1500.0;
  double wavelength_step_nm = 1.0;
  int wavelength_count = 901;
  double delta_step = 0.05;  // mol/m^2
  int delta_count = 81;      // 0 .. 4 mol/m^2
  double amf_start = 2.0;
  double amf_step = 0.25;
  int amf_count = 13;        // 2 .. 5
  AbsorptionModel absorption;
};

/// T(lambda, delta_ch4, amf) stored as f32 with layout [amf][delta][wavelength].
struct TransmittanceLUT {
  std::vector<double> wavelength_nm;
  std::vector<double> delta_ch4;  // mol/m^2
  std::vector<double> amf;
  std::vector<float> values;
  double background_ppb = kBackgroundPpb;
  std::string provenance;

  std::size_t index(std::size_t ia, std::size_t id, std::size_t il) const {
    return (ia * delta_ch4.size() + id) * wavelength_nm.size() + il;
  }
  float at(std::size_t ia, std::size_t id, std::size_t il) const { return values[index(ia, id, il)]; }
  double delta_max() const { return delta_ch4.back(); }
};

/// Throws ConstructionError when the table violates T in (0,1], T(0)=1 or monotonicity in delta.
inline void check_lut(const TransmittanceLUT& lut) {
  const std::size_t nl = lut.wavelength_nm.size(), nd = lut.delta_ch4.size(), na = lut.amf.size();
  if (nl < 2 || nd < 2 || na < 2) throw ConstructionError("LUT grids need at least two nodes");
  if (lut.values.size() != nl * nd * na) throw ConstructionError("LUT value block has wrong size");
  if (lut.delta_ch4.front() != 0.0) throw ConstructionError("LUT delta grid must start at 0");
  for (std::size_t ia = 0; ia < na; ++ia)
    for (std::size_t il = 0; il < nl; ++il) {
      if (lut.at(ia, 0, il) != 1.0f) throw ConstructionError("T(delta=0) must equal 1");
      for (std::size_t id = 0; id < nd; ++id) {
        float t = lut.at(ia, id, il);
        if (!(t > 0.0f && t <= 1.0f)) throw ConstructionError("transmittance outside (0,1]");
        if (id > 0 && t > lut.at(ia, id - 1, il)) throw ConstructionError("transmittance not monotone in delta");
      }
    }
}

inline TransmittanceLUT build_toy_lut(const LutConfig& cfg = {}) {
  if (cfg.wavelength_count < 2 || cfg.delta_count < 2 || cfg.amf_count < 2 || cfg.wavelength_step_nm <= 0 ||
      cfg.delta_step <= 0 || cfg.amf_step <= 0 || cfg.amf_start <= 0)
    throw ArgumentError("LUT grids must be positive");
  TransmittanceLUT lut;
  for (int i = 0; i < cfg.wavelength_count; ++i)
    lut.wavelength_nm.push_back(cfg.wavelength_start_nm + i * cfg.wavelength_step_nm);
  for (int i = 0; i < cfg.delta_count; ++i) lut.delta_ch4.push_back(i * cfg.delta_step);
  for (int i = 0; i < cfg.amf_count; ++i) lut.amf.push_back(cfg.amf_start + i * cfg.amf_step);
  lut.values.resize(lut.wavelength_nm.size() * lut.delta_ch4.size() * lut.amf.size());
  std::vector<double> sigma(lut.wavelength_nm.size());
  for (std::size_t il = 0; il < sigma.size(); ++il) sigma[il] = cfg.absorption.sigma(lut.wavelength_nm[il]);
  for (std::size_t ia = 0; ia < lut.amf.size(); ++ia)
    for (std::size_t id = 0; id < lut.delta_ch4.size(); ++id)
      for (std::size_t il = 0; il < sigma.size(); ++il)
        lut.values[lut.index(ia, id, il)] =
            float(std::exp(-sigma[il] * lut.delta_ch4[id] * kAvogadro * 1e-4 * lut.amf[ia]));
  lut.provenance = "parametric Beer-Lambert methane model (Gaussian-mixture cross-section)";
  check_lut(lut);
  return lut;
}

// LUT file: u32 little-endian header length, JSON header, then the f32 block in
// [amf][delta][wavelength] order.
inline void save_lut(const TransmittanceLUT& lut, const fs::path& path) {
  json header = {{"format", "marss2l-transmittance-lut"},
                 {"version", 1},
                 {"layout", "amf,delta_ch4,wavelength"},
                 {"wavelength_nm", lut.wavelength_nm},
                 {"delta_ch4", lut.delta_ch4},
                 {"amf", lut.amf},
                 {"units", {{"wavelength", "nm"}, {"delta_ch4", "mol/m^2"}, {"amf", "1"}, {"value", "1"}}},
                 {"background_ppb", lut.background_ppb},
                 {"provenance", lut.provenance}};
  std::string h = header.dump();
  std::string out;
  detail::put_le<std::uint32_t>(out, std::uint32_t(h.size()));
  out += h;
  for (float v : lut.values) detail::put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(v));
  detail::write_file(path, out);
}

inline TransmittanceLUT load_lut(const fs::path& path) {
  detail::Reader r(detail::read_file(path));
  auto hlen = r.get<std::uint32_t>();
  json h;
  TransmittanceLUT lut;
  try {
    h = json::parse(r.bytes(hlen));
    if (h.at("format") != "marss2l-transmittance-lut" || h.at("version") != 1)
      throw FormatError("not a version 1 transmittance LUT");
    lut.wavelength_nm = h.at("wavelength_nm").get<std::vector<double>>();
    lut.delta_ch4 = h.at("delta_ch4").get<std::vector<double>>();
    lut.amf = h.at("amf").get<std::vector<double>>();
    lut.background_ppb = h.value("background_ppb", kBackgroundPpb);
    lut.provenance = h.value("provenance", "");
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed LUT header: ") + e.what());
  }
  lut.values.resize(lut.wavelength_nm.size() * lut.delta_ch4.size() * lut.amf.size());
  for (float& v : lut.values) v = std::bit_cast<float>(r.get<std::uint32_t>());
  if (!r.at_end()) throw FormatError("trailing bytes in LUT file");
  check_lut(lut);
  return lut;
}

/// Solar irradiance, atmospheric transmittance and band SRFs sampled on a wavelength grid.
struct SpectralContext {
  std::vector<double> wavelength_nm;
  std::vector<double> irradiance;  // W/m^2/nm
  std::vector<double> t_atm;
  std::map<std::pair<Sensor, Band>, std::vector<double>> srf;

  const std::vector<double>& response(Sensor s, Band b) const {
    auto it = srf.find({s, b});
    if (it == srf.end()) throw ArgumentError("no SRF for requested sensor/band");
    return it->second;
  }
};

/// Analytic stand-ins for a standard atmosphere. Kept as free functions so tests
/// can evaluate them on grids other than the LUT's.
namespace analytic {

inline double solar_irradiance(double lambda_nm) {
  // Planck at 5778 K diluted to top-of-atmosphere: pi * B * (R_sun / AU)^2, per nm.
  constexpr double h = 6.62607015e-34, c = 2.99792458e8, k = 1.380649e-23, T = 5778.0;
  constexpr double dilution = 2.1647e-5;  // (6.957e8 / 1.496e11)^2
  double l = lambda_nm * 1e-9;
  double b = 2.0 * h * c * c / (l * l * l * l * l) / (std::exp(h * c / (l * k * T)) - 1.0);
  return std::numbers::pi * b * dilution * 1e-9;
}

inline double atmospheric_transmittance(double lambda_nm) {
  auto dip = [&](double c, double w, double depth) {
    double z = (lambda_nm - c) / w;
    return depth * std::exp(-0.5 * z * z);
  };
  double t = 0.93 - 0.02 * (lambda_nm - 1500.0) / 900.0;
  t *= 1.0 - dip(1875.0, 45.0, 0.9) - dip(2010.0, 8.0, 0.25) - dip(2060.0, 8.0, 0.25) - dip(1400.0, 40.0, 0.9);
  return std::clamp(t, 0.0, 1.0);
}

/// Flat-topped response: exp(-ln2 * |2 (lambda - c) / fwhm|^8).
inline double flat_top_srf(double lambda_nm, double center_nm, double fwhm_nm) {
  double z = std::abs(2.0 * (lambda_nm - center_nm) / fwhm_nm);
  return std::exp(-std::numbers::ln2 * std::pow(z, 8.0));
}

struct BandShape {
  double center_nm, fwhm_nm;
};

inline BandShape band_shape(Sensor s, Band b) {
  if (s == Sensor::S2) {
    if (b == Band::swir1) return {1613.7, 91.0};
    if (b == Band::swir2) return {2202.4, 175.0};
  } else {
    if (b == Band::swir1) return {1608.9, 84.7};
    if (b == Band::swir2) return {2200.7, 186.7};
  }
  throw ArgumentError("only swir1/swir2 carry methane SRFs");
}

inline double srf(Sensor s, Band b, double lambda_nm) {
  BandShape bs = band_shape(s, b);
  return flat_top_srf(lambda_nm, bs.center_nm, bs.fwhm_nm);
}

}  // namespace analytic

inline SpectralContext make_standard_context(const std::vector<double>& wavelength_nm) {
  SpectralContext ctx;
  ctx.wavelength_nm = wavelength_nm;
  for (double l : wavelength_nm) {
    ctx.irradiance.push_back(analytic::solar_irradiance(l));
    ctx.t_atm.push_back(analytic::atmospheric_transmittance(l));
  }
  for (Sensor s : {Sensor::S2, Sensor::Landsat})
    for (Band b : {Band::swir1, Band::swir2}) {
      std::vector<double> r;
      for (double l : wavelength_nm) r.push_back(analytic::srf(s, b, l));
      ctx.srf[{s, b}] = std::move(r);
    }
  return ctx;
}

inline void check_context(const SpectralContext& ctx) {
  const std::size_t n = ctx.wavelength_nm.size();
  if (ctx.irradiance.size() != n || ctx.t_atm.size() != n) throw IntegrityError("spectral tables misaligned");
  for (std::size_t i = 0; i < n; ++i) {
    if (!(ctx.irradiance[i] >= 0.0)) throw IntegrityError("negative irradiance");
    if (!(ctx.t_atm[i] >= 0.0 && ctx.t_atm[i] <= 1.0)) throw IntegrityError("T_atm outside [0,1]");
  }
  for (const auto& [key, r] : ctx.srf) {
    if (r.size() != n) throw IntegrityError("SRF misaligned with wavelength grid");
    double area = 0.0;
    for (double v : r) {
      if (!(v >= 0.0)) throw IntegrityError("negative SRF value");
      area += v;
    }
    if (!(area > 0.0)) throw IntegrityError("SRF integrates to zero");
  }
}

// Two-column CSV tables (wavelength_nm,value) for SRFs and spectra.
inline void write_spectrum_csv(const fs::path& path, const std::vector<double>& wl, const std::vector<double>& v) {
  std::ostringstream os;
  os.precision(17);
  os << "wavelength_nm,value\n";
  for (std::size_t i = 0; i < wl.size(); ++i) os << wl[i] << ',' << v[i] << '\n';
  detail::write_file(path, os.str());
}

inline std::pair<std::vector<double>, std::vector<double>> read_spectrum_csv(const fs::path& path) {
  std::istringstream is(detail::read_file(path));
  std::string line;
  std::vector<double> wl, v;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    auto comma = line.find(',');
    if (comma == std::string::npos) throw FormatError("spectrum CSV row lacks a comma: " + line);
    try {
      double a = std::stod(line.substr(0, comma)), b = std::stod(line.substr(comma + 1));
      wl.push_back(a);
      v.push_back(b);
    } catch (const std::invalid_argument&) {
      if (wl.empty()) continue;  // header
      throw FormatError("non-numeric spectrum CSV row: " + line);
    }
  }
  if (wl.size() < 2) throw FormatError("spectrum CSV needs at least two rows");
  return {wl, v};
}

/// Linear resampling of a tabulated spectrum onto `grid`, zero outside its support.
inline std::vector<double> resample_spectrum(const std::vector<double>& wl, const std::vector<double>& v,
                                             const std::vector<double>& grid) {
  std::vector<double> out;
  for (double g : grid) {
    if (g < wl.front() || g > wl.back()) {
      out.push_back(0.0);
      continue;
    }
    std::size_t j = std::size_t(std::upper_bound(wl.begin(), wl.end(), g) - wl.begin());
    if (j >= wl.size()) j = wl.size() - 1;
    double t = (g - wl[j - 1]) / (wl[j] - wl[j - 1]);
    out.push_back(v[j - 1] + t * (v[j] - v[j - 1]));
  }
  return out;
}

/// Band transmittance as a function of column enhancement at one geometry. The
/// bicubic-spline interpolation of T(lambda) in (delta, amf) is linear in the table,
/// so integrating the interpolated spectrum equals interpolating the integrals taken
/// at each delta node; the curve stores those node integrals and splines over delta.
class BandTransmittanceCurve {
 public:
  BandTransmittanceCurve(const TransmittanceLUT& lut, const SpectralContext& ctx, const Geometry& g, Band band,
                         Sensor sensor) {
    if (ctx.wavelength_nm != lut.wavelength_nm) throw ArgumentError("spectral context and LUT grids differ");
    double amf = air_mass_factor(g);
    if (!(amf >= lut.amf.front() && amf <= lut.amf.back()))
      throw ExtrapolationError("air-mass factor " + std::to_string(amf) + " outside LUT grid");
    const auto& r = ctx.response(sensor, band);
    const std::size_t nl = lut.wavelength_nm.size();
    // Trapezoid weights E_g * T_atm * srf * dlambda.
    std::vector<double> w(nl, 0.0);
    double den = 0.0;
    for (std::size_t i = 0; i < nl; ++i) {
      double dl = 0.5 * ((i + 1 < nl ? lut.wavelength_nm[i + 1] : lut.wavelength_nm[i]) -
                         (i > 0 ? lut.wavelength_nm[i - 1] : lut.wavelength_nm[i]));
      w[i] = ctx.irradiance[i] * ctx.t_atm[i] * r[i] * dl;
      den += w[i];
    }
    if (!(den > 0.0)) throw ArgumentError("band has no spectral support on the LUT grid");
    std::vector<double> wa = spline_weights(lut.amf, amf);
    std::vector<double> node(lut.delta_ch4.size(), 0.0);
    for (std::size_t id = 0; id < lut.delta_ch4.size(); ++id) {
      double acc = 0.0;
      for (std::size_t ia = 0; ia < lut.amf.size(); ++ia) {
        if (wa[ia] == 0.0) continue;
        const float* row = &lut.values[lut.index(ia, id, 0)];
        double num = 0.0;
        for (std::size_t il = 0; il < nl; ++il) num += w[il] * double(row[il]);
        acc += wa[ia] * num;
      }
      node[id] = acc / den;
    }
    node[0] = 1.0;
    delta_max_ = lut.delta_max();
    spline_ = NaturalCubicSpline(lut.delta_ch4, node);
  }

  /// Band transmittance; delta above the table is clamped to its maximum.
  double operator()(double delta_ch4) const {
    if (delta_ch4 <= 0.0) return 1.0;
    return std::clamp(spline_(std::min(delta_ch4, delta_max_)), 1e-12, 1.0);
  }
  double delta_max() const { return delta_max_; }

 private:
  NaturalCubicSpline spline_;
  double delta_max_ = 0.0;
};

struct BandTransmittance {
  Plane tau;
  std::size_t clamped_pixels = 0;  // delta above LUT maximum
};

inline BandTransmittance band_transmittance(const TransmittanceLUT& lut, const SpectralContext& ctx,
                                            const Plane& delta_ch4, const Geometry& g, Band band, Sensor sensor) {
  BandTransmittanceCurve curve(lut, ctx, g, band, sensor);
  BandTransmittance out{Plane(delta_ch4.width(), delta_ch4.height(), 1.0f), 0};
  for (std::size_t i = 0; i < delta_ch4.size(); ++i) {
    double d = delta_ch4[i];
    if (d > curve.delta_max()) ++out.clamped_pixels;
    out.tau[i] = d > 0.0 ? float(curve(d)) : 1.0f;
  }
  return out;
}

/// Inverse of the swir2/swir1 transmittance ratio, tabulated densely over delta.
class RatioInverter {
 public:
  RatioInverter(const TransmittanceLUT& lut, const SpectralContext& ctx, const Geometry& g, Sensor sensor,
                double step = 1e-3) {
    BandTransmittanceCurve t1(lut, ctx, g, Band::swir1, sensor), t2(lut, ctx, g, Band::swir2, sensor);
    for (double d = 0.0; d <= lut.delta_max() + 1e-12; d += step) {
      delta_.push_back(d);
      ratio_.push_back(t2(d) / t1(d));
    }
    for (std::size_t i = 1; i < ratio_.size(); ++i)
      if (ratio_[i] > ratio_[i - 1]) throw ConstructionError("band ratio not monotone in delta");
  }

  /// Column enhancement producing `ratio`; 0 for ratio >= 1, table maximum below its range.
  double operator()(double ratio) const {
    if (!(ratio < 1.0)) return 0.0;
    if (ratio <= ratio_.back()) return delta_.back();
    // ratio_ is non-increasing: find first index with ratio_[i] <= ratio.
    auto it = std::partition_point(ratio_.begin(), ratio_.end(), [&](double r) { return r > ratio; });
    std::size_t j = std::size_t(it - ratio_.begin());
    double r0 = ratio_[j - 1], r1 = ratio_[j];
    double t = r0 == r1 ? 0.0 : (r0 - ratio) / (r0 - r1);
    return delta_[j - 1] + t * (delta_[j] - delta_[j - 1]);
  }

  double forward(double delta_ch4) const {
    if (delta_ch4 <= 0.0) return 1.0;
    auto j = std::min<std::size_t>(std::size_t(std::upper_bound(delta_.begin(), delta_.end(), delta_ch4) - delta_.begin()),
                                   delta_.size() - 1);
    double t = (delta_ch4 - delta_[j - 1]) / (delta_[j] - delta_[j - 1]);
    return ratio_[j - 1] + std::clamp(t, 0.0, 1.0) * (ratio_[j] - ratio_[j - 1]);
  }

 private:
  std::vector<double> delta_, ratio_;
};

}  // namespace marss2l
