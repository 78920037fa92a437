#pragma once

// Model file: u32 little-endian manifest length, JSON manifest (architecture,
// channel statistics, alpha, seed, tag and the named tensor table), then the raw
// f32 parameter block.

#include <cstring>
#include <string>

#include <json.hpp>

#include "marss2l/band_stack.hpp"
#include "marss2l/detector.hpp"

namespace marss2l {

inline constexpr const char* kModelFormat = "marss2l-unet";
inline constexpr int kModelFormatVersion = 1;

inline std::string encode_model(const Detector& d) {
  const auto& cfg = d.params.config;
  json tensors = json::array();
  for (const auto& t : d.params.table)
    tensors.push_back({{"name", t.name}, {"shape", t.shape}, {"offset", t.offset}, {"count", t.count},
                       {"trainable", t.trainable}});
  json channels = json::array();
  for (std::size_t c = 0; c < kChannelNames.size(); ++c)
    channels.push_back({{"name", kChannelNames[c]}, {"mean", d.stats.mean[c]}, {"std", d.stats.std[c]}});
  json manifest = {{"format", kModelFormat},
                   {"version", kModelFormatVersion},
                   {"architecture",
                    {{"in_channels", cfg.in_channels},
                     {"depth", cfg.depth},
                     {"widths", cfg.widths},
                     {"bn_eps", cfg.bn_eps},
                     {"bn_momentum", cfg.bn_momentum}}},
                   {"channels", channels},
                   {"alpha", d.alpha},
                   {"seed", d.seed},
                   {"tag", d.tag},
                   {"dtype", "f32"},
                   {"tensors", tensors}};
  std::string header = manifest.dump();
  std::string out;
  detail::put_le(out, std::uint32_t(header.size()));
  out += header;
  const std::size_t bytes = d.params.values.size() * sizeof(float);
  const std::size_t at = out.size();
  out.resize(at + bytes);
  std::memcpy(out.data() + at, d.params.values.data(), bytes);
  return out;
}

inline Detector decode_model(const std::string& bytes) {
  detail::Reader r(bytes);
  const auto len = r.get<std::uint32_t>();
  json m;
  try {
    m = json::parse(r.bytes(len));
  } catch (const json::exception& e) {
    throw FormatError(std::string("model manifest: ") + e.what());
  }
  Detector d;
  try {
    if (m.at("format") != kModelFormat) throw FormatError("not a model file");
    if (m.at("version").get<int>() != kModelFormatVersion) throw FormatError("unsupported model version");
    const auto& a = m.at("architecture");
    nn::UNetConfig cfg;
    cfg.in_channels = a.at("in_channels").get<int>();
    cfg.depth = a.at("depth").get<int>();
    cfg.widths = a.at("widths").get<std::vector<int>>();
    cfg.bn_eps = a.at("bn_eps").get<double>();
    cfg.bn_momentum = a.at("bn_momentum").get<double>();
    d.params = nn::make_params<float>(cfg);
    const auto& tensors = m.at("tensors");
    if (tensors.size() != d.params.table.size()) throw IntegrityError("model tensor table does not match architecture");
    for (std::size_t i = 0; i < tensors.size(); ++i) {
      const auto& t = d.params.table[i];
      if (tensors[i].at("name") != t.name || tensors[i].at("offset").get<std::size_t>() != t.offset ||
          tensors[i].at("count").get<std::size_t>() != t.count)
        throw IntegrityError("model tensor " + t.name + " does not match architecture");
    }
    const auto& ch = m.at("channels");
    if (ch.size() != kChannelNames.size()) throw IntegrityError("model needs 16 channel statistics");
    for (std::size_t c = 0; c < ch.size(); ++c) {
      d.stats.mean[c] = ch[c].at("mean").get<double>();
      d.stats.std[c] = ch[c].at("std").get<double>();
    }
    d.alpha = m.at("alpha").get<double>();
    d.seed = m.at("seed").get<std::uint64_t>();
    d.tag = m.at("tag").get<std::string>();
  } catch (const json::exception& e) {
    throw FormatError(std::string("model manifest: ") + e.what());
  }
  std::string block = r.bytes(d.params.values.size() * sizeof(float));
  if (!r.at_end()) throw IntegrityError("trailing bytes after model parameters");
  std::memcpy(d.params.values.data(), block.data(), block.size());
  for (float v : d.params.values)
    if (!std::isfinite(v)) throw IntegrityError("non-finite model parameter");
  return d;
}

inline void save_model(const Detector& d, const fs::path& path) { detail::write_file(path, encode_model(d)); }
inline Detector load_model(const fs::path& path) { return decode_model(detail::read_file(path)); }

}  // namespace marss2l
