#pragma once

// Band-stack container: little-endian, magic "MS2L", u16 version = 1, u32 width,
// u32 height, u8 plane count, then per plane a u8 name length, the UTF-8 name and
// a u8 dtype (0 = f32, 1 = u8); plane payloads follow row-major in declared order.
// Scenes carry a JSON sidecar <stem>.json next to the stack.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "marss2l/raster.hpp"

namespace marss2l {

namespace fs = std::filesystem;
using nlohmann::json;

enum class DType : std::uint8_t { f32 = 0, u8 = 1 };

struct NamedPlane {
  std::string name;
  std::variant<Plane, Mask> data;
  DType dtype() const { return std::holds_alternative<Plane>(data) ? DType::f32 : DType::u8; }
};

struct BandStack {
  int width = 0;
  int height = 0;
  std::vector<NamedPlane> planes;

  const NamedPlane* find(const std::string& name) const {
    for (const auto& p : planes)
      if (p.name == name) return &p;
    return nullptr;
  }
};

namespace detail {

inline constexpr char kMagic[4] = {'M', 'S', '2', 'L'};
inline constexpr std::uint16_t kFormatVersion = 1;

template <typename U>
void put_le(std::string& out, U v) {
  for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(char((std::uint64_t(v) >> (8 * i)) & 0xff));
}

class Reader {
 public:
  explicit Reader(std::string bytes) : buf_(std::move(bytes)) {}
  template <typename U>
  U get() {
    need(sizeof(U));
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) v |= std::uint64_t(std::uint8_t(buf_[pos_ + i])) << (8 * i);
    pos_ += sizeof(U);
    return U(v);
  }
  std::string bytes(std::size_t n) {
    need(n);
    std::string s = buf_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool at_end() const { return pos_ == buf_.size(); }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > buf_.size()) throw FormatError("band-stack truncated");
  }
  std::string buf_;
  std::size_t pos_ = 0;
};

inline std::string read_file(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  if (!f) throw FormatError("cannot open " + p.string());
  return std::string(std::istreambuf_iterator<char>(f), {});
}

inline void write_file(const fs::path& p, const std::string& bytes) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream f(p, std::ios::binary | std::ios::trunc);
  if (!f) throw Error("cannot write " + p.string());
  f.write(bytes.data(), std::streamsize(bytes.size()));
  if (!f) throw Error("short write to " + p.string());
}

}  // namespace detail

inline std::string encode_band_stack(const BandStack& stack) {
  if (stack.planes.size() > 255) throw ArgumentError("too many planes");
  std::string out(detail::kMagic, 4);
  detail::put_le<std::uint16_t>(out, detail::kFormatVersion);
  detail::put_le<std::uint32_t>(out, std::uint32_t(stack.width));
  detail::put_le<std::uint32_t>(out, std::uint32_t(stack.height));
  detail::put_le<std::uint8_t>(out, std::uint8_t(stack.planes.size()));
  for (const auto& p : stack.planes) {
    if (p.name.size() > 255) throw ArgumentError("plane name too long");
    detail::put_le<std::uint8_t>(out, std::uint8_t(p.name.size()));
    out += p.name;
    detail::put_le<std::uint8_t>(out, std::uint8_t(p.dtype()));
  }
  for (const auto& p : stack.planes) {
    if (const Plane* f = std::get_if<Plane>(&p.data)) {
      if (f->width() != stack.width || f->height() != stack.height)
        throw IntegrityError("plane '" + p.name + "' shape differs from stack");
      for (float v : f->values()) detail::put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(v));
    } else {
      const Mask& m = std::get<Mask>(p.data);
      if (m.width() != stack.width || m.height() != stack.height)
        throw IntegrityError("plane '" + p.name + "' shape differs from stack");
      out.append(reinterpret_cast<const char*>(m.storage().data()), m.size());
    }
  }
  return out;
}

inline BandStack decode_band_stack(std::string bytes) {
  detail::Reader r(std::move(bytes));
  if (r.bytes(4) != std::string(detail::kMagic, 4)) throw FormatError("bad band-stack magic");
  if (r.get<std::uint16_t>() != detail::kFormatVersion) throw FormatError("unsupported band-stack version");
  BandStack s;
  std::uint32_t w = r.get<std::uint32_t>(), h = r.get<std::uint32_t>();
  if (w == 0 || h == 0 || w > (1u << 16) || h > (1u << 16)) throw FormatError("bad band-stack dimensions");
  s.width = int(w);
  s.height = int(h);
  const std::size_t n = std::size_t(w) * h;
  int count = r.get<std::uint8_t>();
  std::vector<std::pair<std::string, DType>> header;
  for (int i = 0; i < count; ++i) {
    std::string name = r.bytes(r.get<std::uint8_t>());
    auto code = r.get<std::uint8_t>();
    if (code > 1) throw FormatError("unknown dtype code in plane '" + name + "'");
    header.emplace_back(std::move(name), DType(code));
  }
  for (auto& [name, dtype] : header) {
    if (dtype == DType::f32) {
      std::vector<float> v(n);
      for (auto& x : v) x = std::bit_cast<float>(r.get<std::uint32_t>());
      s.planes.push_back({name, Plane(s.width, s.height, std::move(v))});
    } else {
      std::string raw = r.bytes(n);
      std::vector<std::uint8_t> v(raw.begin(), raw.end());
      s.planes.push_back({name, Mask(s.width, s.height, std::move(v))});
    }
  }
  if (!r.at_end()) throw IntegrityError("trailing bytes after band-stack payload");
  return s;
}

inline void write_band_stack(const fs::path& path, const BandStack& stack) {
  detail::write_file(path, encode_band_stack(stack));
}

inline BandStack read_band_stack(const fs::path& path) {
  return decode_band_stack(detail::read_file(path));
}

inline fs::path sidecar_path(const fs::path& stack_path) {
  fs::path p = stack_path;
  return p.replace_extension(".json");
}

inline json read_json_file(const fs::path& p) {
  try {
    return json::parse(detail::read_file(p));
  } catch (const json::exception& e) {
    throw FormatError("malformed JSON in " + p.string() + ": " + e.what());
  }
}

inline void write_json_file(const fs::path& p, const json& j) { detail::write_file(p, j.dump(2) + "\n"); }

inline void save_scene(const SceneImage& scene, const fs::path& path) {
  validate(scene);
  BandStack st{scene.width(), scene.height(), {}};
  for (int b = 0; b < kBandCount; ++b) st.planes.push_back({kBandNames[b], scene.bands[b]});
  Mask cm(scene.width(), scene.height());
  for (std::size_t i = 0; i < cm.size(); ++i) cm[i] = std::uint8_t(scene.cloud_mask[i]);
  st.planes.push_back({"cloud_mask", std::move(cm)});
  write_band_stack(path, st);
  json side = {{"site_id", scene.site_id},
               {"acquisition_time", to_rfc3339(scene.acquisition_time)},
               {"sensor", to_string(scene.sensor)},
               {"wind_u", scene.wind_u},
               {"wind_v", scene.wind_v},
               {"solar_zenith", scene.geometry.solar_zenith},
               {"viewing_zenith", scene.geometry.viewing_zenith},
               {"grid_resolution_m", 10}};
  write_json_file(sidecar_path(path), side);
}

inline SceneImage load_scene(const fs::path& path) {
  BandStack st = read_band_stack(path);
  SceneImage s;
  int n_bands = 0;
  for (int b = 0; b < kBandCount; ++b) {
    const NamedPlane* p = st.find(kBandNames[b]);
    if (!p) continue;
    if (p->dtype() != DType::f32) throw IntegrityError(std::string("band ") + kBandNames[b] + " is not f32");
    s.bands[b] = std::get<Plane>(p->data);
    ++n_bands;
  }
  if (n_bands != kBandCount) throw IntegrityError("scene needs 6 band planes, found " + std::to_string(n_bands));
  const NamedPlane* cm = st.find("cloud_mask");
  if (!cm || cm->dtype() != DType::u8) throw IntegrityError("scene lacks a u8 cloud_mask plane");
  const Mask& raw = std::get<Mask>(cm->data);
  s.cloud_mask = Grid<CloudState>(raw.width(), raw.height(), CloudState::clear);
  for (std::size_t i = 0; i < raw.size(); ++i) {
    if (raw[i] > 3) throw IntegrityError("invalid cloud mask state");
    s.cloud_mask[i] = CloudState(raw[i]);
  }
  json side = read_json_file(sidecar_path(path));
  try {
    s.site_id = side.at("site_id").get<std::string>();
    s.acquisition_time = parse_rfc3339(side.at("acquisition_time").get<std::string>());
    s.sensor = sensor_from_string(side.at("sensor").get<std::string>());
    s.wind_u = side.at("wind_u").get<double>();
    s.wind_v = side.at("wind_v").get<double>();
    s.geometry.solar_zenith = side.at("solar_zenith").get<double>();
    s.geometry.viewing_zenith = side.at("viewing_zenith").get<double>();
    if (side.value("grid_resolution_m", 10.0) != 10.0) throw FormatError("scene grid must be 10 m");
  } catch (const json::exception& e) {
    throw FormatError("malformed scene sidecar " + sidecar_path(path).string() + ": " + e.what());
  }
  clamp_negative_reflectance(s);
  validate(s);
  return s;
}

inline void save_probability(const ProbabilityMap& p, const fs::path& path) {
  write_band_stack(path, BandStack{p.width(), p.height(), {{"probability", p.values}}});
}

inline ProbabilityMap load_probability(const fs::path& path) {
  BandStack st = read_band_stack(path);
  const NamedPlane* p = st.find("probability");
  if (!p || p->dtype() != DType::f32) throw IntegrityError("no f32 probability plane");
  ProbabilityMap m{std::get<Plane>(p->data)};
  validate(m);
  return m;
}

}  // namespace marss2l
