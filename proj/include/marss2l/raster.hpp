#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "marss2l/error.hpp"
#include "marss2l/time.hpp"

namespace marss2l {

/// Row-major 2-D raster. Every plane in the system lives on the 10 m grid.
template <typename T>
class Grid {
 public:
  Grid() = default;
  Grid(int width, int height, T fill = T{}) : width_(width), height_(height) {
    if (width <= 0 || height <= 0) throw ArgumentError("grid dimensions must be positive");
    data_.assign(std::size_t(width) * std::size_t(height), fill);
  }
  Grid(int width, int height, std::vector<T> data)
      : width_(width), height_(height), data_(std::move(data)) {
    if (width <= 0 || height <= 0) throw ArgumentError("grid dimensions must be positive");
    if (data_.size() != std::size_t(width) * std::size_t(height))
      throw IntegrityError("grid data size does not match dimensions");
  }

  int width() const { return width_; }
  int height() const { return height_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T& operator()(int x, int y) { return data_[std::size_t(y) * width_ + x]; }
  const T& operator()(int x, int y) const { return data_[std::size_t(y) * width_ + x]; }
  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  std::span<T> values() { return data_; }
  std::span<const T> values() const { return data_; }
  std::vector<T>& storage() { return data_; }
  const std::vector<T>& storage() const { return data_; }

  template <typename U>
  bool same_shape(const Grid<U>& o) const {
    return width_ == o.width() && height_ == o.height();
  }

  bool operator==(const Grid&) const = default;

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<T> data_;
};

using Plane = Grid<float>;
using Mask = Grid<std::uint8_t>;

enum class CloudState : std::uint8_t { clear = 0, cloud = 1, shadow = 2, missing = 3 };
enum class Sensor { S2, Landsat };
enum class Band { blue = 0, green, red, nir, swir1, swir2 };
inline constexpr int kBandCount = 6;
inline constexpr std::array<const char*, kBandCount> kBandNames = {"blue", "green", "red",
                                                                   "nir",  "swir1", "swir2"};
inline constexpr double kPixelAreaM2 = 100.0;
inline constexpr double kGridResolutionM = 10.0;
inline constexpr double kMaxWindSpeed = 60.0;

inline const char* to_string(Sensor s) { return s == Sensor::S2 ? "S2" : "Landsat"; }
inline Sensor sensor_from_string(const std::string& s) {
  if (s == "S2") return Sensor::S2;
  if (s == "Landsat") return Sensor::Landsat;
  throw FormatError("unknown sensor: " + s);
}

struct Geometry {
  double solar_zenith = 0.0;    // degrees
  double viewing_zenith = 0.0;  // degrees
  bool operator==(const Geometry&) const = default;
};

struct SceneImage {
  std::string site_id;
  Timestamp acquisition_time{};
  Sensor sensor = Sensor::S2;
  std::array<Plane, kBandCount> bands;
  Grid<CloudState> cloud_mask;
  double wind_u = 0.0;  // m/s, eastward
  double wind_v = 0.0;  // m/s, northward
  Geometry geometry;

  int width() const { return bands[0].width(); }
  int height() const { return bands[0].height(); }
  Plane& band(Band b) { return bands[std::size_t(b)]; }
  const Plane& band(Band b) const { return bands[std::size_t(b)]; }
  double wind_speed() const { return std::hypot(wind_u, wind_v); }

  bool operator==(const SceneImage&) const = default;
};

/// Throws IntegrityError unless every SceneImage invariant holds. Negative
/// reflectance is not an integrity failure; clamp_negative_reflectance fixes it.
inline void validate(const SceneImage& s) {
  const Plane& ref = s.bands[0];
  if (ref.empty()) throw IntegrityError("scene has no pixels");
  for (const Plane& p : s.bands) {
    if (!p.same_shape(ref)) throw IntegrityError("band planes differ in shape");
    for (float v : p.values())
      if (!std::isfinite(v)) throw IntegrityError("non-finite reflectance");
  }
  if (!s.cloud_mask.same_shape(ref)) throw IntegrityError("cloud mask shape differs from bands");
  for (CloudState c : s.cloud_mask.values())
    if (std::uint8_t(c) > 3) throw IntegrityError("invalid cloud mask state");
  double ws = s.wind_speed();
  if (!std::isfinite(ws) || ws >= kMaxWindSpeed) throw IntegrityError("wind speed out of range");
}

inline void clamp_negative_reflectance(SceneImage& s) {
  for (Plane& p : s.bands)
    for (float& v : p.values()) v = std::max(v, 0.0f);
}

struct ProbabilityMap {
  Plane values;
  int width() const { return values.width(); }
  int height() const { return values.height(); }
};

inline void validate(const ProbabilityMap& p) {
  for (float v : p.values.values())
    if (!(v >= 0.0f && v <= 1.0f)) throw IntegrityError("probability outside [0,1]");
}

struct PlumeLabel {
  Mask mask;
  Plane delta_ch4;  // mol/m^2
  std::optional<double> flux_t_per_h;

  std::size_t pixel_count() const {
    std::size_t n = 0;
    for (auto m : mask.values()) n += m != 0;
    return n;
  }
  double area_m2() const { return double(pixel_count()) * kPixelAreaM2; }
  double total_column() const {
    double s = 0.0;
    for (float v : delta_ch4.values()) s += v;
    return s;
  }
};

inline PlumeLabel empty_label(int width, int height) {
  return PlumeLabel{Mask(width, height, 0), Plane(width, height, 0.0f), std::nullopt};
}

inline void validate(const PlumeLabel& l) {
  if (!l.mask.same_shape(l.delta_ch4)) throw IntegrityError("label planes differ in shape");
  for (std::size_t i = 0; i < l.mask.size(); ++i) {
    float d = l.delta_ch4[i];
    if (!(d >= 0.0f)) throw IntegrityError("negative or non-finite delta_ch4");
    if (d > 0.0f && !l.mask[i]) throw IntegrityError("delta_ch4 > 0 outside plume mask");
  }
}

/// Catmull-Rom bicubic upsampling by an integer factor, edges replicated, no clamping.
/// Output pixel centres map back to (X + 0.5) / factor - 0.5 in input coordinates.
template <typename T>
Grid<T> bicubic_upsample(const Grid<T>& in, int factor) {
  if (in.width() <= 0 || in.height() <= 0) throw ArgumentError("non-positive input dimensions");
  if (factor < 1) throw ArgumentError("upsampling factor must be >= 1");
  const int W = in.width(), H = in.height();
  auto kernel = [](double t) {
    constexpr double a = -0.5;
    t = std::abs(t);
    if (t <= 1.0) return ((a + 2.0) * t - (a + 3.0)) * t * t + 1.0;
    if (t < 2.0) return ((a * t - 5.0 * a) * t + 8.0 * a) * t - 4.0 * a;
    return 0.0;
  };
  // The kernel is separable and every output row/column shares one of `factor` phases.
  struct Taps {
    int base;
    std::array<double, 4> w;
  };
  auto taps_for = [&](int out_index) {
    double src = (out_index + 0.5) / factor - 0.5;
    int i0 = int(std::floor(src));
    double frac = src - i0;
    Taps t{i0 - 1, {kernel(1.0 + frac), kernel(frac), kernel(1.0 - frac), kernel(2.0 - frac)}};
    return t;
  };
  const int OW = W * factor, OH = H * factor;
  std::vector<double> tmp(std::size_t(OW) * H);
  for (int y = 0; y < H; ++y)
    for (int X = 0; X < OW; ++X) {
      Taps t = taps_for(X);
      double acc = 0.0;
      for (int k = 0; k < 4; ++k) acc += t.w[k] * double(in(std::clamp(t.base + k, 0, W - 1), y));
      tmp[std::size_t(y) * OW + X] = acc;
    }
  Grid<T> out(OW, OH);
  for (int Y = 0; Y < OH; ++Y) {
    Taps t = taps_for(Y);
    for (int X = 0; X < OW; ++X) {
      double acc = 0.0;
      for (int k = 0; k < 4; ++k)
        acc += t.w[k] * tmp[std::size_t(std::clamp(t.base + k, 0, H - 1)) * OW + X];
      out(X, Y) = T(acc);
    }
  }
  return out;
}

/// Bicubic resampling of a 20 m (factor 2) or 30 m (factor 3) plane onto the 10 m grid.
template <typename T>
Grid<T> resample_to_10m(const Grid<T>& plane, int factor) {
  Grid<T> out = bicubic_upsample(plane, factor);
  for (T& v : out.values()) v = std::max(v, T(0));
  return out;
}

inline double flagged_fraction(const Grid<CloudState>& mask) {
  if (mask.empty()) return 1.0;
  std::size_t n = 0;
  for (CloudState c : mask.values()) n += c != CloudState::clear;
  return double(n) / double(mask.size());
}

/// Scenes with more than half their pixels cloud, shadow or missing are discarded.
inline bool passes_clear_filter(const SceneImage& scene) {
  return flagged_fraction(scene.cloud_mask) <= 0.5;
}

/// 1 where a pixel is anything but clear.
inline Mask cloud_binary(const SceneImage& scene) {
  Mask m(scene.width(), scene.height(), 0);
  for (std::size_t i = 0; i < m.size(); ++i) m[i] = scene.cloud_mask[i] != CloudState::clear;
  return m;
}

}  // namespace marss2l
