#pragma once

// JSON-over-HTTP API for the review console.
//   GET  /api/alerts?status=&site=&since=&offset=&limit=
//   GET  /api/alerts/{id}
//   GET  /api/alerts/{id}/layers/{rgb|rgb_ref|mbmp|delta_ch4|probability}.png
//   POST /api/alerts/{id}/review         {"verdict": "confirmed"|"rejected", "note": "..."}
//   POST /api/alerts/{id}/notification   {"recipient": "government"|"operator"} (optional body)
//   GET  /api/sites
//   GET  /api/sites/{id}/timeline
// Mutations require an X-Reviewer header.

#include <httplib.h>

#include <json.hpp>

#include "marss2l/alert/png.hpp"
#include "marss2l/alert/service.hpp"
#include "marss2l/band_stack.hpp"

namespace marss2l::alert {

inline constexpr std::array<const char*, 5> kLayerNames = {"rgb", "rgb_ref", "mbmp", "delta_ch4", "probability"};

inline json layer_manifest(const std::string& id) {
  json layers = json::object();
  auto entry = [&](const char* name, const ColorRamp& ramp) {
    json j = to_json(ramp);
    j["url"] = "/api/alerts/" + id + "/layers/" + name + ".png";
    layers[name] = j;
  };
  entry("rgb", reflectance_ramp());
  entry("rgb_ref", reflectance_ramp());
  entry("mbmp", ratio_ramp());
  entry("delta_ch4", delta_ch4_ramp());
  entry("probability", probability_ramp());
  return layers;
}

inline std::string render_layer(const AlertStore& store, const DetectionRecord& r, const std::string& name) {
  auto product_plane = [&](const char* plane) {
    BandStack st = read_band_stack(store.dir() / r.product_ref);
    const NamedPlane* p = st.find(plane);
    if (!p || p->dtype() != DType::f32) throw NotFoundError(std::string("product lacks ") + plane);
    return std::get<Plane>(p->data);
  };
  if (name == "rgb") return encode_png(render_rgb(load_scene(r.scene_ref)));
  if (name == "rgb_ref") {
    if (r.reference_ref.empty()) throw NotFoundError("single-pass retrieval has no reference image");
    return encode_png(render_rgb(load_scene(r.reference_ref)));
  }
  if (name == "mbmp") return encode_png(render_plane(product_plane("ratio"), ratio_ramp()));
  if (name == "delta_ch4") return encode_png(render_plane(product_plane("delta_ch4"), delta_ch4_ramp()));
  if (name == "probability") return encode_png(render_plane(product_plane("probability"), probability_ramp()));
  throw NotFoundError("unknown layer " + name);
}

class ApiServer {
 public:
  ApiServer(AlertStore& store, SiteRegistry registry) : store_(&store), registry_(std::move(registry)) { routes(); }

  httplib::Server& server() { return server_; }
  int bind_any_port(const std::string& host = "127.0.0.1") { return server_.bind_to_any_port(host); }
  bool listen(const std::string& host, int port) { return server_.listen(host, port); }
  bool listen_after_bind() { return server_.listen_after_bind(); }
  void stop() { server_.stop(); }
  void wait_until_ready() { server_.wait_until_ready(); }

 private:
  static void send(httplib::Response& res, int status, const json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
  }

  static void fail(httplib::Response& res, int status, const char* kind, const std::string& msg) {
    send(res, status, {{"error", kind}, {"message", msg}});
  }

  template <typename F>
  static void guarded(httplib::Response& res, F&& f) {
    try {
      f();
    } catch (const NotFoundError& e) {
      fail(res, 404, "not_found", e.what());
    } catch (const ConflictError& e) {
      fail(res, 409, "conflict", e.what());
    } catch (const GuardError& e) {
      fail(res, 409, "guard", e.what());
    } catch (const RegistryError& e) {
      fail(res, 422, "registry", e.what());
    } catch (const ArgumentError& e) {
      fail(res, 400, "bad_request", e.what());
    } catch (const json::exception& e) {
      fail(res, 400, "bad_request", e.what());
    } catch (const FormatError& e) {
      fail(res, 400, "bad_request", e.what());
    } catch (const std::exception& e) {
      fail(res, 500, "internal", e.what());
    }
  }

  static std::string reviewer(const httplib::Request& req) {
    std::string r = req.get_header_value("X-Reviewer");
    if (r.empty()) throw ArgumentError("X-Reviewer header is required");
    return r;
  }

  json detail(const DetectionRecord& r) const {
    json j = to_json(r);
    j["layers"] = layer_manifest(r.id);
    j["prior_detections"] = store_->confirmed_before(r.site_id, r.acquisition_time);
    if (const SiteRecord* s = registry_.find(r.site_id)) j["site"] = to_json(*s);
    if (auto n = store_->notification_for(r.id)) j["notification"] = to_json(*n);
    j["audit"] = json::array();
    for (const auto& a : store_->audit(r.id)) j["audit"].push_back(to_json(a));
    return j;
  }

  void routes() {
    server_.Get("/api/alerts", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        AlertQuery q;
        if (req.has_param("status") && !req.get_param_value("status").empty())
          q.status = review_status_from_string(req.get_param_value("status"));
        if (req.has_param("site") && !req.get_param_value("site").empty()) q.site_id = req.get_param_value("site");
        if (req.has_param("since") && !req.get_param_value("since").empty())
          q.since = parse_rfc3339(req.get_param_value("since"));
        try {
          if (req.has_param("offset")) q.offset = std::stoul(req.get_param_value("offset"));
          if (req.has_param("limit")) q.limit = std::stoul(req.get_param_value("limit"));
        } catch (const std::exception&) {
          throw ArgumentError("offset and limit must be non-negative integers");
        }
        AlertPage page = store_->query(q);
        json items = json::array();
        for (const auto& r : page.items) items.push_back(to_json(r));
        send(res, 200, {{"items", items}, {"total", page.total}, {"offset", q.offset}, {"limit", q.limit}});
      });
    });

    server_.Get(R"(/api/alerts/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] { send(res, 200, detail(store_->get(req.matches[1]))); });
    });

    server_.Get(R"(/api/alerts/([^/]+)/layers/([a-z0-9_]+)\.png)",
                [this](const httplib::Request& req, httplib::Response& res) {
                  guarded(res, [&] {
                    std::string png = render_layer(*store_, store_->get(req.matches[1]), req.matches[2]);
                    res.status = 200;
                    res.set_content(png, "image/png");
                  });
                });

    server_.Post(R"(/api/alerts/([^/]+)/review)", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        std::string who = reviewer(req);
        json body = json::parse(req.body.empty() ? "{}" : req.body);
        std::string verdict = body.at("verdict").get<std::string>();
        if (verdict != "confirmed" && verdict != "rejected")
          throw ArgumentError("verdict must be confirmed or rejected");
        DetectionRecord r = store_->review(req.matches[1], review_status_from_string(verdict), who,
                                           body.value("note", ""));
        send(res, 200, detail(r));
      });
    });

    server_.Post(R"(/api/alerts/([^/]+)/notification)", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        reviewer(req);
        json body = json::parse(req.body.empty() ? "{}" : req.body);
        RecipientRole role = recipient_from_string(body.value("recipient", "government"));
        send(res, 200, to_json(make_notification(*store_, req.matches[1], registry_, role)));
      });
    });

    server_.Get("/api/sites", [this](const httplib::Request&, httplib::Response& res) {
      guarded(res, [&] {
        json out = json::array();
        for (const auto& s : registry_.all()) {
          json j = to_json(s);
          std::size_t pending = 0, confirmed = 0;
          for (const auto& d : store_->detections(s.site_id)) {
            pending += d.review_status == ReviewStatus::pending;
            confirmed += d.review_status == ReviewStatus::confirmed;
          }
          j["pending"] = pending;
          j["confirmed"] = confirmed;
          out.push_back(j);
        }
        send(res, 200, out);
      });
    });

    server_.Get(R"(/api/sites/([^/]+)/timeline)", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] { send(res, 200, to_json(site_timeline(*store_, registry_, req.matches[1]))); });
    });
  }

  AlertStore* store_;
  SiteRegistry registry_;
  httplib::Server server_;
};

}  // namespace marss2l::alert
