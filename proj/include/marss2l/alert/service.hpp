#pragma once

#include <algorithm>
#include <map>

#include "marss2l/alert/store.hpp"

namespace marss2l::alert {

class SiteRegistry {
 public:
  SiteRegistry() = default;
  explicit SiteRegistry(const std::vector<SiteRecord>& sites) {
    for (const auto& s : sites) {
      validate(s);
      if (!sites_.emplace(s.site_id, s).second) throw RegistryError("duplicate site_id " + s.site_id);
    }
  }

  const SiteRecord* find(const std::string& id) const {
    auto it = sites_.find(id);
    return it == sites_.end() ? nullptr : &it->second;
  }
  const SiteRecord& at(const std::string& id) const {
    if (auto* s = find(id)) return *s;
    throw RegistryError("site " + id + " is not in the registry");
  }
  std::vector<SiteRecord> all() const {
    std::vector<SiteRecord> out;
    for (const auto& [id, s] : sites_) out.push_back(s);
    return out;
  }
  std::size_t size() const { return sites_.size(); }

 private:
  std::map<std::string, SiteRecord> sites_;
};

/// Draft notification for a confirmed detection; stored once per detection.
inline NotificationRecord make_notification(AlertStore& store, const std::string& detection_id,
                                            const SiteRegistry& registry,
                                            RecipientRole recipient = RecipientRole::government) {
  DetectionRecord d = store.get(detection_id);
  if (d.review_status != ReviewStatus::confirmed)
    throw GuardError("detection " + detection_id + " is " + to_string(d.review_status) + ", not confirmed");
  if (auto existing = store.notification_for(detection_id)) return *existing;
  NotificationRecord n;
  n.id = "notif-" + detection_id;
  n.detection_id = detection_id;
  n.site = registry.at(d.site_id);
  n.operator_name = n.site.operator_name.value_or("unknown");
  n.plume_image_ref = "/api/alerts/" + detection_id + "/layers/delta_ch4.png";
  n.flux_t_per_h = d.flux_t_per_h;
  n.prior_detections = store.confirmed_before(d.site_id, d.acquisition_time);
  n.acquisition_time = d.acquisition_time;
  n.issued_at = store.clock().now();
  n.recipient = recipient;
  n.status = NotificationStatus::draft;
  return store.add_notification(n);
}

enum class TimelineKind { detection, no_detection, pending, cloudy, failed };

inline const char* to_string(TimelineKind k) {
  switch (k) {
    case TimelineKind::detection: return "detection";
    case TimelineKind::no_detection: return "no_detection";
    case TimelineKind::pending: return "pending";
    case TimelineKind::cloudy: return "cloudy";
    case TimelineKind::failed: return "failed";
  }
  return "failed";
}

struct TimelineEntry {
  Timestamp time{};
  TimelineKind kind = TimelineKind::no_detection;
  std::optional<double> flux_t_per_h;  // confirmed detections only
  std::string detection_id;
};

struct SiteTimeline {
  std::string site_id;
  std::vector<TimelineEntry> entries;  // strictly increasing time

  std::vector<TimelineEntry> detections() const {
    std::vector<TimelineEntry> out;
    for (const auto& e : entries)
      if (e.kind == TimelineKind::detection) out.push_back(e);
    return out;
  }
  std::vector<Timestamp> coverage() const {
    std::vector<Timestamp> out;
    for (const auto& e : entries) out.push_back(e.time);
    return out;
  }
};

/// One entry per observed date. Rejected detections count as no-detection dates.
inline SiteTimeline site_timeline(const AlertStore& store, const SiteRegistry& registry, const std::string& site_id) {
  if (!registry.find(site_id)) throw NotFoundError("unknown site " + site_id);
  std::map<Timestamp, TimelineEntry> by_time;
  for (const auto& o : store.scenes(site_id)) {
    TimelineEntry e{o.acquisition_time, TimelineKind::no_detection, std::nullopt, ""};
    if (o.outcome == SceneOutcome::cloudy) e.kind = TimelineKind::cloudy;
    if (o.outcome == SceneOutcome::failed) e.kind = TimelineKind::failed;
    by_time[o.acquisition_time] = e;
  }
  for (const auto& d : store.detections(site_id)) {
    TimelineEntry e{d.acquisition_time, TimelineKind::no_detection, std::nullopt, d.id};
    if (d.review_status == ReviewStatus::confirmed) {
      e.kind = TimelineKind::detection;
      e.flux_t_per_h = d.flux_t_per_h;
    } else if (d.review_status == ReviewStatus::pending) {
      e.kind = TimelineKind::pending;
    }
    by_time[d.acquisition_time] = e;
  }
  SiteTimeline t{site_id, {}};
  for (auto& [time, e] : by_time) t.entries.push_back(std::move(e));
  return t;
}

inline json to_json(const TimelineEntry& e) {
  json j = {{"time", to_rfc3339(e.time)}, {"kind", to_string(e.kind)}};
  j["flux_t_per_h"] = e.flux_t_per_h ? json(*e.flux_t_per_h) : json(nullptr);
  if (!e.detection_id.empty()) j["detection_id"] = e.detection_id;
  return j;
}

inline json to_json(const SiteTimeline& t) {
  json entries = json::array();
  for (const auto& e : t.entries) entries.push_back(to_json(e));
  return {{"site_id", t.site_id}, {"entries", entries}, {"n_detections", t.detections().size()}};
}

}  // namespace marss2l::alert
