#pragma once

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "marss2l/error.hpp"

namespace marss2l {

using json = nlohmann::json;

/// A monitored emitter.
struct SiteRecord {
  std::string site_id;
  std::string name;
  std::string country;
  double latitude = 0.0;
  double longitude = 0.0;
  std::string facility_type;
  std::optional<std::string> operator_name;
  bool offshore = false;

  bool operator==(const SiteRecord&) const = default;
};

inline void validate(const SiteRecord& s) {
  if (s.site_id.empty()) throw ArgumentError("site_id must not be empty");
  if (!(s.latitude >= -90 && s.latitude <= 90) || !(s.longitude >= -180 && s.longitude <= 180))
    throw ArgumentError("site coordinates out of range");
}

inline json to_json(const SiteRecord& s) {
  return {{"site_id", s.site_id},
          {"name", s.name},
          {"country", s.country},
          {"latitude", s.latitude},
          {"longitude", s.longitude},
          {"facility_type", s.facility_type},
          {"operator", s.operator_name ? json(*s.operator_name) : json(nullptr)},
          {"offshore", s.offshore}};
}

inline SiteRecord site_from_json(const json& j) {
  SiteRecord s;
  try {
    s.site_id = j.at("site_id").get<std::string>();
    s.name = j.value("name", "");
    s.country = j.value("country", "");
    s.latitude = j.value("latitude", 0.0);
    s.longitude = j.value("longitude", 0.0);
    s.facility_type = j.value("facility_type", "");
    if (j.contains("operator") && !j["operator"].is_null()) s.operator_name = j["operator"].get<std::string>();
    s.offshore = j.value("offshore", false);
  } catch (const json::exception& e) {
    throw FormatError(std::string("site record: ") + e.what());
  }
  validate(s);
  return s;
}

/// Registry of sites; duplicate ids are rejected.
inline std::vector<SiteRecord> registry_from_json(const json& j) {
  std::vector<SiteRecord> out;
  for (const auto& e : j) {
    SiteRecord s = site_from_json(e);
    for (const auto& o : out)
      if (o.site_id == s.site_id) throw RegistryError("duplicate site_id " + s.site_id);
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace marss2l
