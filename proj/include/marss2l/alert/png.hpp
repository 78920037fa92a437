#pragma once

// 8-bit RGBA layer rendering with fixed colour ramps, encoded with libpng.

#include <png.h>

#include <array>
#include <cmath>
#include <cstring>
#include <string>
#include <vector>

#include <json.hpp>

#include "marss2l/raster.hpp"

namespace marss2l::alert {

using json = nlohmann::json;

struct RampStop {
  double position;  // 0..1 along [min, max]
  std::array<std::uint8_t, 3> rgb;
};

struct ColorRamp {
  std::string name;
  std::string unit;
  double min = 0.0, max = 1.0;
  std::vector<RampStop> stops;

  std::array<std::uint8_t, 3> operator()(double v) const {
    double t = std::clamp((v - min) / (max - min), 0.0, 1.0);
    for (std::size_t i = 1; i < stops.size(); ++i) {
      if (t > stops[i].position) continue;
      const auto& a = stops[i - 1];
      const auto& b = stops[i];
      double f = (t - a.position) / (b.position - a.position);
      std::array<std::uint8_t, 3> out;
      for (int c = 0; c < 3; ++c) out[c] = std::uint8_t(std::lround(a.rgb[c] + f * (b.rgb[c] - a.rgb[c])));
      return out;
    }
    return stops.back().rgb;
  }
};

inline json to_json(const ColorRamp& r) {
  json stops = json::array();
  for (const auto& s : r.stops) stops.push_back({{"position", s.position}, {"rgb", s.rgb}});
  return {{"ramp", r.name}, {"unit", r.unit}, {"min", r.min}, {"max", r.max}, {"stops", stops}};
}

inline const ColorRamp& reflectance_ramp() {
  static const ColorRamp r{"linear-gray", "reflectance", 0.0, 0.4, {{0.0, {0, 0, 0}}, {1.0, {255, 255, 255}}}};
  return r;
}

// Ratio below 1 (absorption) runs to red, above 1 to blue; invalid pixels are transparent.
inline const ColorRamp& ratio_ramp() {
  static const ColorRamp r{"diverging-red-blue", "ratio", 0.9, 1.1,
                           {{0.0, {178, 24, 43}}, {0.5, {247, 247, 247}}, {1.0, {33, 102, 172}}}};
  return r;
}

inline const ColorRamp& delta_ch4_ramp() {
  static const ColorRamp r{"inferno", "mol/m^2", 0.0, 0.5,
                           {{0.0, {0, 0, 4}}, {0.25, {87, 16, 110}}, {0.5, {188, 55, 84}}, {0.75, {249, 142, 9}},
                            {1.0, {252, 255, 164}}}};
  return r;
}

inline const ColorRamp& probability_ramp() {
  static const ColorRamp r{"viridis", "probability", 0.0, 1.0,
                           {{0.0, {68, 1, 84}}, {0.25, {59, 82, 139}}, {0.5, {33, 145, 140}}, {0.75, {94, 201, 98}},
                            {1.0, {253, 231, 37}}}};
  return r;
}

struct RgbaImage {
  int width = 0, height = 0;
  std::vector<std::uint8_t> pixels;  // row-major RGBA

  RgbaImage(int w, int h) : width(w), height(h), pixels(std::size_t(w) * h * 4, 0) {}
  std::uint8_t* at(std::size_t i) { return pixels.data() + 4 * i; }
};

inline RgbaImage render_plane(const Plane& p, const ColorRamp& ramp) {
  RgbaImage img(p.width(), p.height());
  for (std::size_t i = 0; i < p.size(); ++i) {
    std::uint8_t* px = img.at(i);
    if (!std::isfinite(p[i])) continue;  // transparent
    auto c = ramp(p[i]);
    px[0] = c[0], px[1] = c[1], px[2] = c[2], px[3] = 255;
  }
  return img;
}

/// True-colour composite, each channel stretched with the reflectance ramp.
inline RgbaImage render_rgb(const SceneImage& s) {
  RgbaImage img(s.width(), s.height());
  const auto& ramp = reflectance_ramp();
  const Plane* ch[3] = {&s.band(Band::red), &s.band(Band::green), &s.band(Band::blue)};
  for (std::size_t i = 0; i < s.band(Band::red).size(); ++i) {
    std::uint8_t* px = img.at(i);
    for (int c = 0; c < 3; ++c) px[c] = ramp((*ch[c])[i])[0];
    px[3] = 255;
  }
  return img;
}

inline std::string encode_png(const RgbaImage& img) {
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw Error("png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw Error("png_create_info_struct failed");
  }
  std::string out;
  std::vector<png_bytep> rows(std::size_t(img.height));
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw Error("PNG encoding failed");
  }
  png_set_write_fn(
      png, &out,
      [](png_structp p, png_bytep data, png_size_t n) {
        static_cast<std::string*>(png_get_io_ptr(p))->append(reinterpret_cast<const char*>(data), n);
      },
      nullptr);
  png_set_IHDR(png, info, png_uint_32(img.width), png_uint_32(img.height), 8, PNG_COLOR_TYPE_RGBA, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  for (int y = 0; y < img.height; ++y)
    rows[std::size_t(y)] = const_cast<png_bytep>(img.pixels.data() + std::size_t(y) * img.width * 4);
  png_set_rows(png, info, rows.data());
  png_write_png(png, info, PNG_TRANSFORM_IDENTITY, nullptr);
  png_destroy_write_struct(&png, &info);
  return out;
}

inline RgbaImage decode_png(const std::string& bytes) {
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&image, bytes.data(), bytes.size())) throw FormatError("not a PNG");
  image.format = PNG_FORMAT_RGBA;
  RgbaImage img(int(image.width), int(image.height));
  if (!png_image_finish_read(&image, nullptr, img.pixels.data(), 0, nullptr)) {
    png_image_free(&image);
    throw FormatError(std::string("PNG decode failed: ") + image.message);
  }
  return img;
}

}  // namespace marss2l::alert
