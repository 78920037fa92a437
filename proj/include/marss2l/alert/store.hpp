#pragma once

// Detection store: an append-only JSON-lines event log (events.jsonl) replayed into
// an in-memory index at open, with an index.json snapshot recording the last applied
// sequence number. Readers share the index; writers are serialised.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include <json.hpp>

#include "marss2l/alert/clock.hpp"
#include "marss2l/scene_analysis.hpp"
#include "marss2l/site.hpp"

namespace marss2l::alert {

namespace fs = std::filesystem;
using json = nlohmann::json;

enum class SceneOutcome { detection, no_detection, cloudy, failed };

inline const char* to_string(SceneOutcome o) {
  switch (o) {
    case SceneOutcome::detection: return "detection";
    case SceneOutcome::no_detection: return "no_detection";
    case SceneOutcome::cloudy: return "cloudy";
    case SceneOutcome::failed: return "failed";
  }
  return "failed";
}

inline SceneOutcome scene_outcome_from_string(const std::string& s) {
  if (s == "detection") return SceneOutcome::detection;
  if (s == "no_detection") return SceneOutcome::no_detection;
  if (s == "cloudy") return SceneOutcome::cloudy;
  if (s == "failed") return SceneOutcome::failed;
  throw FormatError("unknown scene outcome " + s);
}

/// One processed acquisition, recorded whether or not it produced a detection.
struct SceneObservation {
  std::string site_id;
  Timestamp acquisition_time{};
  std::string scene_ref;
  SceneOutcome outcome = SceneOutcome::no_detection;
  double scene_score = 0.0;
  std::string detail;
};

inline json to_json(const SceneObservation& o) {
  return {{"site_id", o.site_id}, {"acquisition_time", to_rfc3339(o.acquisition_time)}, {"scene_ref", o.scene_ref},
          {"outcome", to_string(o.outcome)}, {"scene_score", o.scene_score}, {"detail", o.detail}};
}

inline SceneObservation observation_from_json(const json& j) {
  return {j.at("site_id").get<std::string>(), parse_rfc3339(j.at("acquisition_time").get<std::string>()),
          j.at("scene_ref").get<std::string>(), scene_outcome_from_string(j.at("outcome").get<std::string>()),
          j.at("scene_score").get<double>(), j.value("detail", "")};
}

struct AuditEntry {
  std::uint64_t seq = 0;
  ReviewStatus status = ReviewStatus::pending;
  std::string actor;
  std::string note;
  Timestamp at{};
};

inline json to_json(const AuditEntry& a) {
  return {{"seq", a.seq}, {"status", to_string(a.status)}, {"actor", a.actor}, {"note", a.note}, {"at", to_rfc3339(a.at)}};
}

enum class RecipientRole { government, operator_ };
enum class NotificationStatus { draft, issued, feedback_received };

inline const char* to_string(RecipientRole r) { return r == RecipientRole::government ? "government" : "operator"; }
inline RecipientRole recipient_from_string(const std::string& s) {
  if (s == "government") return RecipientRole::government;
  if (s == "operator") return RecipientRole::operator_;
  throw ArgumentError("unknown recipient role " + s);
}
inline const char* to_string(NotificationStatus s) {
  switch (s) {
    case NotificationStatus::draft: return "draft";
    case NotificationStatus::issued: return "issued";
    case NotificationStatus::feedback_received: return "feedback_received";
  }
  return "draft";
}
inline NotificationStatus notification_status_from_string(const std::string& s) {
  if (s == "draft") return NotificationStatus::draft;
  if (s == "issued") return NotificationStatus::issued;
  if (s == "feedback_received") return NotificationStatus::feedback_received;
  throw FormatError("unknown notification status " + s);
}

struct NotificationRecord {
  std::string id;
  std::string detection_id;
  SiteRecord site;
  std::string operator_name;  // "unknown" when the registry has none
  std::string plume_image_ref;
  double flux_t_per_h = 0.0;
  std::size_t prior_detections = 0;
  Timestamp acquisition_time{};
  Timestamp issued_at{};
  RecipientRole recipient = RecipientRole::government;
  NotificationStatus status = NotificationStatus::draft;
};

inline json to_json(const NotificationRecord& n) {
  return {{"id", n.id},
          {"detection_id", n.detection_id},
          {"site", to_json(n.site)},
          {"operator", n.operator_name},
          {"plume_image_ref", n.plume_image_ref},
          {"flux_t_per_h", n.flux_t_per_h},
          {"prior_detections", n.prior_detections},
          {"acquisition_time", to_rfc3339(n.acquisition_time)},
          {"issued_at", to_rfc3339(n.issued_at)},
          {"recipient", to_string(n.recipient)},
          {"status", to_string(n.status)}};
}

inline NotificationRecord notification_from_json(const json& j) {
  NotificationRecord n;
  n.id = j.at("id").get<std::string>();
  n.detection_id = j.at("detection_id").get<std::string>();
  n.site = site_from_json(j.at("site"));
  n.operator_name = j.at("operator").get<std::string>();
  n.plume_image_ref = j.at("plume_image_ref").get<std::string>();
  n.flux_t_per_h = j.at("flux_t_per_h").get<double>();
  n.prior_detections = j.at("prior_detections").get<std::size_t>();
  n.acquisition_time = parse_rfc3339(j.at("acquisition_time").get<std::string>());
  n.issued_at = parse_rfc3339(j.at("issued_at").get<std::string>());
  n.recipient = recipient_from_string(j.at("recipient").get<std::string>());
  n.status = notification_status_from_string(j.at("status").get<std::string>());
  return n;
}

struct AlertQuery {
  std::optional<ReviewStatus> status;
  std::optional<std::string> site_id;
  std::optional<Timestamp> since;  // acquisition_time >= since
  std::size_t offset = 0;
  std::size_t limit = 50;
};

struct AlertPage {
  std::vector<DetectionRecord> items;  // score descending, then id
  std::size_t total = 0;
};

/// Deterministic detection id: one per (site, acquisition time).
inline std::string detection_id(const std::string& site_id, Timestamp t) { return site_id + "-" + compact_time(t); }

class AlertStore {
 public:
  explicit AlertStore(fs::path dir, std::shared_ptr<Clock> clock = std::make_shared<SystemClock>())
      : dir_(std::move(dir)), clock_(std::move(clock)) {
    fs::create_directories(dir_);
    replay();
  }

  const fs::path& dir() const { return dir_; }
  fs::path log_path() const { return dir_ / "events.jsonl"; }
  fs::path index_path() const { return dir_ / "index.json"; }
  Clock& clock() { return *clock_; }

  /// True when the snapshot lagged the log at open (the index was rebuilt by replay).
  bool recovered() const { return recovered_; }
  /// True when a torn trailing line was dropped at open.
  bool repaired_tail() const { return repaired_tail_; }

  std::uint64_t last_seq() const {
    std::shared_lock lk(mu_);
    return last_seq_;
  }

  /// Appends a pending detection; false (no write) when the id already exists.
  bool add_detection(DetectionRecord r) {
    std::lock_guard w(write_mu_);
    {
      std::shared_lock lk(mu_);
      if (records_.count(r.id)) return false;
    }
    r.review_status = ReviewStatus::pending;
    r.reviewer.clear();
    r.reviewer_note.clear();
    r.created_at = clock_->now();
    validate(r);
    append({{"type", "detection"}, {"record", to_json(r)}});
    return true;
  }

  /// Records a processed scene; false when (site, time) was already recorded.
  bool record_scene(const SceneObservation& o) {
    std::lock_guard w(write_mu_);
    {
      std::shared_lock lk(mu_);
      if (scene_keys_.count(scene_key(o.site_id, o.acquisition_time))) return false;
    }
    append({{"type", "scene"}, {"observation", to_json(o)}});
    return true;
  }

  bool has_scene(const std::string& site_id, Timestamp t) const {
    std::shared_lock lk(mu_);
    return scene_keys_.count(scene_key(site_id, t)) > 0;
  }

  std::optional<DetectionRecord> find(const std::string& id) const {
    std::shared_lock lk(mu_);
    auto it = records_.find(id);
    if (it == records_.end()) return std::nullopt;
    return it->second;
  }

  DetectionRecord get(const std::string& id) const {
    auto r = find(id);
    if (!r) throw NotFoundError("no detection " + id);
    return *r;
  }

  AlertPage query(const AlertQuery& q) const {
    std::shared_lock lk(mu_);
    std::vector<const DetectionRecord*> hits;
    for (const auto& [id, r] : records_) {
      if (q.status && r.review_status != *q.status) continue;
      if (q.site_id && r.site_id != *q.site_id) continue;
      if (q.since && r.acquisition_time < *q.since) continue;
      hits.push_back(&r);
    }
    std::stable_sort(hits.begin(), hits.end(), [](auto* a, auto* b) { return a->scene_score > b->scene_score; });
    AlertPage page;
    page.total = hits.size();
    for (std::size_t i = q.offset; i < hits.size() && page.items.size() < q.limit; ++i) page.items.push_back(*hits[i]);
    return page;
  }

  /// pending -> confirmed | rejected; any other transition is a conflict.
  DetectionRecord review(const std::string& id, ReviewStatus verdict, const std::string& reviewer,
                         const std::string& note) {
    if (reviewer.empty()) throw ArgumentError("a reviewer name is required");
    if (verdict == ReviewStatus::pending) throw ConflictError("cannot move a detection back to pending");
    std::lock_guard w(write_mu_);
    DetectionRecord current = get(id);
    if (current.review_status != ReviewStatus::pending)
      throw ConflictError("detection " + id + " was already " + to_string(current.review_status));
    if (verdict == ReviewStatus::confirmed && current.n_plume_pixels == 0)
      throw GuardError("a confirmed detection needs a non-empty plume mask");
    append({{"type", "review"}, {"id", id}, {"status", to_string(verdict)}, {"reviewer", reviewer}, {"note", note},
            {"at", to_rfc3339(clock_->now())}});
    return get(id);
  }

  std::vector<AuditEntry> audit(const std::string& id) const {
    std::shared_lock lk(mu_);
    auto it = audit_.find(id);
    if (it == audit_.end()) throw NotFoundError("no detection " + id);
    return it->second;
  }

  /// Confirmed detections at a site acquired strictly before `t`.
  std::size_t confirmed_before(const std::string& site_id, Timestamp t) const {
    std::shared_lock lk(mu_);
    std::size_t n = 0;
    for (const auto& [id, r] : records_)
      n += r.site_id == site_id && r.review_status == ReviewStatus::confirmed && r.acquisition_time < t;
    return n;
  }

  std::vector<SceneObservation> scenes(const std::string& site_id) const {
    std::shared_lock lk(mu_);
    std::vector<SceneObservation> out;
    for (const auto& [key, o] : scene_keys_)
      if (o.site_id == site_id) out.push_back(o);
    return out;
  }

  std::vector<DetectionRecord> detections(const std::string& site_id) const {
    std::shared_lock lk(mu_);
    std::vector<DetectionRecord> out;
    for (const auto& [id, r] : records_)
      if (r.site_id == site_id) out.push_back(r);
    return out;
  }

  /// Stores a notification draft once per detection; later calls return the first draft.
  NotificationRecord add_notification(const NotificationRecord& n) {
    std::lock_guard w(write_mu_);
    if (auto existing = notification_for(n.detection_id)) return *existing;
    append({{"type", "notification"}, {"record", to_json(n)}});
    return *notification_for(n.detection_id);
  }

  std::optional<NotificationRecord> notification_for(const std::string& detection_id) const {
    std::shared_lock lk(mu_);
    auto it = notifications_.find(detection_id);
    if (it == notifications_.end()) return std::nullopt;
    return it->second;
  }

  std::size_t size() const {
    std::shared_lock lk(mu_);
    return records_.size();
  }

 private:
  static std::string scene_key(const std::string& site, Timestamp t) { return site + "|" + to_rfc3339(t); }

  // Caller holds write_mu_.
  void append(json event) {
    std::uint64_t seq;
    {
      std::shared_lock lk(mu_);
      seq = last_seq_ + 1;
    }
    event["seq"] = seq;
    std::string line = event.dump() + "\n";
    {
      std::ofstream f(log_path(), std::ios::binary | std::ios::app);
      if (!f) throw Error("cannot append to " + log_path().string());
      f << line;
      f.flush();
      if (!f) throw Error("short write to " + log_path().string());
    }
    {
      std::unique_lock lk(mu_);
      apply(event);
    }
    write_index();
  }

  void write_index() const {
    json idx;
    {
      std::shared_lock lk(mu_);
      idx = {{"last_seq", last_seq_}, {"detections", records_.size()}, {"scenes", scene_keys_.size()},
             {"notifications", notifications_.size()}};
    }
    fs::path tmp = index_path();
    tmp += ".tmp";
    {
      std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
      f << idx.dump(2) << "\n";
    }
    fs::rename(tmp, index_path());
  }

  // Caller holds mu_ exclusively (or is single-threaded during replay).
  void apply(const json& e) {
    const std::uint64_t seq = e.at("seq").get<std::uint64_t>();
    if (seq != last_seq_ + 1) throw IntegrityError("event log sequence gap at " + std::to_string(seq));
    const std::string type = e.at("type").get<std::string>();
    if (type == "detection") {
      DetectionRecord r = detection_from_json(e.at("record"));
      audit_[r.id].push_back({seq, ReviewStatus::pending, "pipeline", "", r.created_at});
      records_[r.id] = std::move(r);
    } else if (type == "review") {
      const std::string id = e.at("id").get<std::string>();
      auto it = records_.find(id);
      if (it == records_.end()) throw IntegrityError("review of unknown detection " + id);
      it->second.review_status = review_status_from_string(e.at("status").get<std::string>());
      it->second.reviewer = e.at("reviewer").get<std::string>();
      it->second.reviewer_note = e.at("note").get<std::string>();
      audit_[id].push_back({seq, it->second.review_status, it->second.reviewer, it->second.reviewer_note,
                            parse_rfc3339(e.at("at").get<std::string>())});
    } else if (type == "scene") {
      SceneObservation o = observation_from_json(e.at("observation"));
      scene_keys_[scene_key(o.site_id, o.acquisition_time)] = o;
    } else if (type == "notification") {
      NotificationRecord n = notification_from_json(e.at("record"));
      notifications_[n.detection_id] = n;
    } else {
      throw IntegrityError("unknown event type " + type);
    }
    last_seq_ = seq;
  }

  void replay() {
    std::uint64_t snapshot_seq = 0;
    if (fs::exists(index_path())) {
      try {
        std::ifstream f(index_path());
        snapshot_seq = json::parse(f).at("last_seq").get<std::uint64_t>();
      } catch (const std::exception&) {
        snapshot_seq = 0;  // unreadable snapshot: the log is authoritative
      }
    }
    if (fs::exists(log_path())) {
      std::ifstream f(log_path(), std::ios::binary);
      std::string content((std::istreambuf_iterator<char>(f)), {});
      std::size_t pos = 0, good_end = 0;
      while (pos < content.size()) {
        std::size_t nl = content.find('\n', pos);
        if (nl == std::string::npos) break;  // torn tail: no newline
        json e;
        try {
          e = json::parse(content.substr(pos, nl - pos));
        } catch (const json::exception&) {
          if (content.find('\n', nl + 1) == std::string::npos && nl + 1 >= content.size()) break;
          throw IntegrityError("corrupt event at byte " + std::to_string(pos));
        }
        try {
          apply(e);
        } catch (const json::exception& ex) {
          throw IntegrityError(std::string("malformed event: ") + ex.what());
        }
        pos = good_end = nl + 1;
      }
      if (good_end < content.size()) {
        repaired_tail_ = true;
        fs::resize_file(log_path(), good_end);
      }
    }
    recovered_ = snapshot_seq != last_seq_;
    if (recovered_ || !fs::exists(index_path())) write_index();
  }

  fs::path dir_;
  std::shared_ptr<Clock> clock_;
  mutable std::shared_mutex mu_;
  std::mutex write_mu_;
  std::uint64_t last_seq_ = 0;
  std::map<std::string, DetectionRecord> records_;
  std::map<std::string, std::vector<AuditEntry>> audit_;
  std::map<std::string, SceneObservation> scene_keys_;
  std::map<std::string, NotificationRecord> notifications_;
  bool recovered_ = false;
  bool repaired_tail_ = false;
};

}  // namespace marss2l::alert
