#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "marss2l/raster.hpp"

namespace marss2l {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Connected components
// ---------------------------------------------------------------------------

class DisjointSet {
 public:
  explicit DisjointSet(std::size_t n = 0) : parent_(n), size_(n, 1) { std::iota(parent_.begin(), parent_.end(), 0); }
  std::size_t add() {
    parent_.push_back(parent_.size());
    size_.push_back(1);
    return parent_.size() - 1;
  }
  std::size_t find(std::size_t x) {
    while (parent_[x] != x) {
      parent_[x] = parent_[parent_[x]];
      x = parent_[x];
    }
    return x;
  }
  /// Returns the size of the merged set.
  std::size_t unite(std::size_t a, std::size_t b) {
    a = find(a), b = find(b);
    if (a == b) return size_[a];
    if (size_[a] < size_[b]) std::swap(a, b);
    parent_[b] = a;
    size_[a] += size_[b];
    return size_[a];
  }
  std::size_t set_size(std::size_t x) { return size_[find(x)]; }

 private:
  std::vector<std::size_t> parent_;
  std::vector<std::size_t> size_;
};

struct Components {
  Grid<std::uint32_t> labels;        // 0 = background, 1..count
  std::vector<std::size_t> sizes;    // sizes[i] belongs to label i + 1
  std::size_t count() const { return sizes.size(); }
  std::size_t largest() const { return sizes.empty() ? 0 : *std::max_element(sizes.begin(), sizes.end()); }
};

/// Two-pass labelling with union-find; connectivity 4 or 8. Labels are consecutive
/// in raster order of each component's first pixel.
inline Components connected_components(const Mask& mask, int connectivity = 8) {
  if (connectivity != 4 && connectivity != 8) throw ArgumentError("connectivity must be 4 or 8");
  const int W = mask.width(), H = mask.height();
  Components out{Grid<std::uint32_t>(W, H, 0u), {}};
  DisjointSet ds(1);  // provisional label 0 unused
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      if (!mask(x, y)) continue;
      std::uint32_t cur = 0;
      auto visit = [&](int nx, int ny) {
        if (nx < 0 || ny < 0 || nx >= W) return;
        std::uint32_t l = out.labels(nx, ny);
        if (!l) return;
        if (!cur)
          cur = l;
        else
          ds.unite(cur, l);
      };
      visit(x - 1, y);
      visit(x, y - 1);
      if (connectivity == 8) {
        visit(x - 1, y - 1);
        visit(x + 1, y - 1);
      }
      out.labels(x, y) = cur ? cur : std::uint32_t(ds.add());
    }
  std::vector<std::uint32_t> remap;
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      std::uint32_t& l = out.labels(x, y);
      if (!l) continue;
      std::size_t root = ds.find(l);
      if (remap.size() <= root) remap.resize(root + 1, 0);
      if (!remap[root]) {
        out.sizes.push_back(0);
        remap[root] = std::uint32_t(out.sizes.size());
      }
      l = remap[root];
      ++out.sizes[l - 1];
    }
  return out;
}

// ---------------------------------------------------------------------------
// Scene score
// ---------------------------------------------------------------------------

inline constexpr std::size_t kDefaultComponentPixels = 100;
inline constexpr int kConnectivity = 8;

/// Largest threshold t among the map's values for which {p >= t} holds an
/// 8-connected component of at least k pixels; 0 when no positive t qualifies.
/// Pixels set in `excluded` (cloud, shadow, missing) never join a component.
/// Pixels are activated in descending order of probability while union-find
/// tracks the largest component, so the sweep stops at the first qualifying level.
inline double scene_score(const Plane& prob, std::size_t k = kDefaultComponentPixels, const Mask* excluded = nullptr) {
  if (k < 1) throw ArgumentError("component size threshold must be >= 1");
  if (excluded && !excluded->same_shape(prob)) throw ArgumentError("exclusion mask shape differs");
  const int W = prob.width(), H = prob.height();
  std::vector<std::uint32_t> order;
  order.reserve(prob.size());
  for (std::size_t i = 0; i < prob.size(); ++i)
    if (prob[i] > 0.0f && !(excluded && (*excluded)[i])) order.push_back(std::uint32_t(i));
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return prob[a] > prob[b]; });
  DisjointSet ds(prob.size());
  std::vector<char> active(prob.size(), 0);
  std::size_t largest = 0;
  for (std::size_t g = 0; g < order.size();) {
    const float level = prob[order[g]];
    std::size_t end = g;
    while (end < order.size() && prob[order[end]] == level) ++end;
    for (std::size_t j = g; j < end; ++j) {
      std::uint32_t i = order[j];
      active[i] = 1;
      largest = std::max<std::size_t>(largest, 1);
      int x = int(i % std::uint32_t(W)), y = int(i / std::uint32_t(W));
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
          int nx = x + dx, ny = y + dy;
          if ((dx == 0 && dy == 0) || nx < 0 || ny < 0 || nx >= W || ny >= H) continue;
          std::size_t n = std::size_t(ny) * W + nx;
          if (active[n]) largest = std::max(largest, ds.unite(i, n));
        }
    }
    if (largest >= k) return level;
    g = end;
  }
  return 0.0;
}

inline double scene_score(const ProbabilityMap& prob, std::size_t k = kDefaultComponentPixels,
                          const Mask* excluded = nullptr) {
  return scene_score(prob.values, k, excluded);
}

inline Mask extract_mask(const Plane& prob, double pixel_threshold = 0.5) {
  Mask m(prob.width(), prob.height(), 0);
  for (std::size_t i = 0; i < m.size(); ++i) m[i] = prob[i] >= pixel_threshold;
  return m;
}

inline Mask extract_mask(const ProbabilityMap& prob, double pixel_threshold = 0.5) {
  return extract_mask(prob.values, pixel_threshold);
}

// ---------------------------------------------------------------------------
// Quantification
// ---------------------------------------------------------------------------

inline constexpr double kMethaneMolarMass = 0.01604;  // kg/mol

/// Integrated mass enhancement, kg CH4.
inline double ime(const Mask& mask, const Plane& delta_ch4, double pixel_area_m2 = kPixelAreaM2) {
  if (!mask.same_shape(delta_ch4)) throw ArgumentError("mask and delta_ch4 differ in shape");
  double s = 0.0;
  for (std::size_t i = 0; i < mask.size(); ++i)
    if (mask[i]) s += delta_ch4[i];
  return s * pixel_area_m2 * kMethaneMolarMass;
}

struct FluxModel {
  double wind_slope = 0.33;   // U_eff = a * U10 + b
  double wind_offset = 0.45;  // m/s
  double effective_wind(double u10) const { return wind_slope * u10 + wind_offset; }
};

inline std::size_t count_set(const Mask& m) {
  std::size_t n = 0;
  for (auto v : m.values()) n += v != 0;
  return n;
}

/// Emission rate in t/h from IME over plume length sqrt(area).
inline double flux_from_ime(double ime_kg, std::size_t n_pixels, double wind_speed_mps, const FluxModel& model = {},
                            double pixel_area_m2 = kPixelAreaM2) {
  if (n_pixels == 0) return 0.0;
  double length = std::sqrt(double(n_pixels) * pixel_area_m2);
  double ueff = std::max(model.effective_wind(wind_speed_mps), 0.0);
  return std::max(ueff * ime_kg / length, 0.0) * 3.6;  // kg/s -> t/h
}

inline double flux(double ime_kg, const Mask& mask, double wind_speed_mps, const FluxModel& model = {}) {
  return flux_from_ime(ime_kg, count_set(mask), wind_speed_mps, model);
}

enum class GwpHorizon { GWP20, GWP100 };

struct Co2Equivalent {
  double tonnes_co2e;
  double car_equivalents;
};

inline constexpr double kGwp20 = 81.0;
inline constexpr double kGwp100 = 27.9;
inline constexpr double kCarTonnesPerYear = 4.6;

inline Co2Equivalent co2_equivalent(double annual_tonnes_ch4, GwpHorizon horizon) {
  if (annual_tonnes_ch4 < 0.0) throw ArgumentError("annual emissions must be non-negative");
  double co2e = annual_tonnes_ch4 * (horizon == GwpHorizon::GWP20 ? kGwp20 : kGwp100);
  return {co2e, co2e / kCarTonnesPerYear};
}

// ---------------------------------------------------------------------------
// Detection records
// ---------------------------------------------------------------------------

/// Run-length encoding "W,H:r0,r1,..." with runs alternating 0/1 starting at 0.
inline std::string rle_encode(const Mask& m) {
  std::string s = std::to_string(m.width()) + "," + std::to_string(m.height()) + ":";
  std::uint8_t cur = 0;
  std::size_t run = 0;
  bool first = true;
  auto flush = [&] {
    if (!first) s += ',';
    s += std::to_string(run);
    first = false;
  };
  for (auto v : m.values()) {
    std::uint8_t b = v ? 1 : 0;
    if (b != cur) {
      flush();
      cur = b;
      run = 0;
    }
    ++run;
  }
  flush();
  return s;
}

inline Mask rle_decode(const std::string& s) {
  auto colon = s.find(':');
  auto comma = s.find(',');
  if (colon == std::string::npos || comma == std::string::npos || comma > colon)
    throw FormatError("bad RLE mask header");
  int w = std::stoi(s.substr(0, comma)), h = std::stoi(s.substr(comma + 1, colon - comma - 1));
  Mask m(w, h, 0);
  std::size_t pos = 0, i = colon + 1;
  std::uint8_t cur = 0;
  while (i < s.size()) {
    std::size_t next = s.find(',', i);
    if (next == std::string::npos) next = s.size();
    std::size_t run = std::stoul(s.substr(i, next - i));
    if (pos + run > m.size()) throw FormatError("RLE runs exceed mask size");
    for (std::size_t j = 0; j < run; ++j) m[pos++] = cur;
    cur ^= 1;
    i = next + 1;
  }
  if (pos != m.size()) throw FormatError("RLE runs do not cover the mask");
  return m;
}

enum class ReviewStatus { pending, confirmed, rejected };

inline const char* to_string(ReviewStatus s) {
  switch (s) {
    case ReviewStatus::pending: return "pending";
    case ReviewStatus::confirmed: return "confirmed";
    case ReviewStatus::rejected: return "rejected";
  }
  return "pending";
}

inline ReviewStatus review_status_from_string(const std::string& s) {
  if (s == "pending") return ReviewStatus::pending;
  if (s == "confirmed") return ReviewStatus::confirmed;
  if (s == "rejected") return ReviewStatus::rejected;
  throw FormatError("unknown review status: " + s);
}

inline constexpr int kDetectionSchemaVersion = 1;

struct DetectionRecord {
  std::string id;
  std::string site_id;
  std::string scene_ref;
  std::string reference_ref;  // empty for single-pass retrievals
  std::string product_ref;    // band-stack with probability, ratio and delta_ch4 planes
  Timestamp acquisition_time{};
  double scene_score = 0.0;
  Mask mask;
  std::size_t n_plume_pixels = 0;
  double ime_kg = 0.0;
  double flux_t_per_h = 0.0;
  double wind_speed_mps = 0.0;
  Timestamp created_at{};
  ReviewStatus review_status = ReviewStatus::pending;
  std::string reviewer;
  std::string reviewer_note;
  std::string retrieval_method = "MBMP";
  int connectivity = kConnectivity;
  std::size_t component_pixels = kDefaultComponentPixels;
};

inline void validate(const DetectionRecord& r) {
  if (!(r.scene_score >= 0.0 && r.scene_score <= 1.0)) throw IntegrityError("scene_score outside [0,1]");
  if (!(r.flux_t_per_h >= 0.0)) throw IntegrityError("negative flux");
  if (r.review_status == ReviewStatus::confirmed && r.n_plume_pixels == 0)
    throw IntegrityError("confirmed detection without plume pixels");
}

inline json to_json(const DetectionRecord& r) {
  return json{{"schema_version", kDetectionSchemaVersion},
              {"id", r.id},
              {"site_id", r.site_id},
              {"scene_ref", r.scene_ref},
              {"reference_ref", r.reference_ref},
              {"product_ref", r.product_ref},
              {"acquisition_time", to_rfc3339(r.acquisition_time)},
              {"scene_score", r.scene_score},
              {"mask_rle", r.mask.empty() ? std::string() : rle_encode(r.mask)},
              {"n_plume_pixels", r.n_plume_pixels},
              {"ime_kg", r.ime_kg},
              {"flux_t_per_h", r.flux_t_per_h},
              {"wind_speed_mps", r.wind_speed_mps},
              {"created_at", to_rfc3339(r.created_at)},
              {"review_status", to_string(r.review_status)},
              {"reviewer", r.reviewer},
              {"reviewer_note", r.reviewer_note},
              {"retrieval_method", r.retrieval_method},
              {"connectivity", r.connectivity},
              {"component_pixels", r.component_pixels}};
}

inline DetectionRecord detection_from_json(const json& j) {
  try {
    if (j.at("schema_version").get<int>() != kDetectionSchemaVersion)
      throw FormatError("unsupported detection schema version");
    DetectionRecord r;
    r.id = j.at("id");
    r.site_id = j.at("site_id");
    r.scene_ref = j.value("scene_ref", "");
    r.reference_ref = j.value("reference_ref", "");
    r.product_ref = j.value("product_ref", "");
    r.acquisition_time = parse_rfc3339(j.at("acquisition_time").get<std::string>());
    r.scene_score = j.at("scene_score");
    std::string rle = j.value("mask_rle", "");
    if (!rle.empty()) r.mask = rle_decode(rle);
    r.n_plume_pixels = j.at("n_plume_pixels");
    r.ime_kg = j.at("ime_kg");
    r.flux_t_per_h = j.at("flux_t_per_h");
    r.wind_speed_mps = j.at("wind_speed_mps");
    r.created_at = parse_rfc3339(j.at("created_at").get<std::string>());
    r.review_status = review_status_from_string(j.at("review_status"));
    r.reviewer = j.value("reviewer", "");
    r.reviewer_note = j.value("reviewer_note", "");
    r.retrieval_method = j.value("retrieval_method", "MBMP");
    r.connectivity = j.value("connectivity", kConnectivity);
    r.component_pixels = j.value("component_pixels", kDefaultComponentPixels);
    validate(r);
    return r;
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed detection record: ") + e.what());
  }
}

}  // namespace marss2l
