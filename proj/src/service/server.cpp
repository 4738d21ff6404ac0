#include "dropcast/service/server.hpp"

#include <httplib.h>
#include <spdlog/spdlog.h>

#include <chrono>
#include <cstdlib>
#include <regex>
#include <sstream>

#include "dropcast/error.hpp"
#include "dropcast/scoring.hpp"

namespace dropcast::service {

using nlohmann::json;

ServiceConfig ServiceConfig::from_env() {
  ServiceConfig c;
  if (const char* p = std::getenv("SERVICE_PORT")) {
    try {
      c.port = std::stoi(p);
    } catch (const std::exception&) {
      throw Error(std::string("SERVICE_PORT is not a number: ") + p);
    }
  }
  if (const char* d = std::getenv("DATA_DIR")) c.data_dir = d;
  if (const char* m = std::getenv("MODEL_DIR")) c.model_dir = m;
  if (const char* t = std::getenv("SERVICE_TOKEN"); t && *t) c.token = t;
  return c;
}

namespace {

bool valid_model_id(const std::string& id) {
  static const std::regex pattern("[A-Za-z0-9][A-Za-z0-9._-]*");
  return std::regex_match(id, pattern) && id.find("..") == std::string::npos;
}

std::string utc_now() {
  const auto now = std::chrono::floor<std::chrono::seconds>(std::chrono::system_clock::now());
  const auto day = std::chrono::floor<std::chrono::days>(now);
  const std::chrono::hh_mm_ss hms(now - day);
  char buf[32];
  std::snprintf(buf, sizeof buf, "%sT%02d:%02d:%02dZ", Date(day).iso().c_str(), static_cast<int>(hms.hours().count()),
                static_cast<int>(hms.minutes().count()), static_cast<int>(hms.seconds().count()));
  return buf;
}

void send_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& message) {
  send_json(res, status, json{{"error", message}});
}

json row_errors_json(const std::vector<RowError>& errors) {
  json out = json::array();
  for (const auto& e : errors) out.push_back({{"line", e.line}, {"reason", e.reason}});
  return out;
}

json stored_score_json(const Store::StoredScore& s) {
  return {{"beneficiary_id", s.beneficiary_id}, {"probability", s.probability}, {"risk_band", s.risk_band},
          {"model_id", s.model_id},             {"scored_at", s.scored_at},     {"inputs_through", s.inputs_through}};
}

json intervention_json(const Store::Intervention& i) {
  return {{"id", i.id}, {"beneficiary_id", i.beneficiary_id}, {"kind", i.kind}, {"note", i.note},
          {"created_at", i.created_at}};
}

json profile_json(const ProfileCandidate& p) {
  auto opt = [](const auto& v) { return v ? json(*v) : json(); };
  return {{"beneficiary_id", p.beneficiary_id},
          {"age", opt(p.age_years)},
          {"education", opt(p.education_level)},
          {"income", opt(p.income_group)},
          {"registration_date", p.registration_date ? json(p.registration_date->iso()) : json()},
          {"gestation_weeks", opt(p.gestation_age_weeks)},
          {"call_slot", opt(p.call_slot)},
          {"language", opt(p.language)},
          {"phone_owner", p.phone_owner ? json(std::string(to_string(*p.phone_owner))) : json()}};
}

std::string_view outcome_name(CallOutcome o) {
  switch (o) {
    case CallOutcome::FailedAttempt: return "attempt";
    case CallOutcome::Connection: return "connection";
    case CallOutcome::Engagement: return "engagement";
  }
  return "attempt";
}

std::optional<int> positive_int(const std::string& text) {
  if (text.empty() || text.size() > 9) return std::nullopt;
  for (char c : text)
    if (c < '0' || c > '9') return std::nullopt;
  const int v = std::stoi(text);
  return v >= 1 ? std::optional<int>(v) : std::nullopt;
}

}  // namespace

std::shared_ptr<const Model> ModelRegistry::get(const std::string& model_id) {
  if (!valid_model_id(model_id)) return nullptr;
  std::lock_guard lock(mu_);
  if (auto it = cache_.find(model_id); it != cache_.end()) return it->second;
  const auto path = dir_ / (model_id + ".json");
  if (!std::filesystem::exists(path)) return nullptr;
  auto model = std::make_shared<const Model>(load_model(path));
  cache_[model_id] = model;
  return model;
}

std::vector<std::string> ModelRegistry::available() const {
  std::vector<std::string> ids;
  std::error_code ec;
  for (const auto& entry : std::filesystem::directory_iterator(dir_, ec)) {
    if (entry.path().extension() != ".json") continue;
    auto id = entry.path().stem().string();
    if (valid_model_id(id)) ids.push_back(id);
  }
  std::sort(ids.begin(), ids.end());
  return ids;
}

struct Server::Impl {
  explicit Impl(const ServiceConfig& c)
      : store(c.data_dir / "dropcast.sqlite3"), models(c.model_dir), token(c.token) {
    routes();
  }

  Store store;
  ModelRegistry models;
  std::optional<std::string> token;
  httplib::Server http;

  void routes() {
    http.set_logger([](const httplib::Request& req, const httplib::Response& res) {
      spdlog::info(json{{"method", req.method}, {"path", req.path}, {"status", res.status},
                        {"remote", req.remote_addr}}.dump());
    });
    http.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
      try {
        std::rethrow_exception(ep);
      } catch (const std::exception& e) {
        spdlog::error(json{{"event", "unhandled"}, {"error", e.what()}}.dump());
        send_error(res, 500, e.what());
      } catch (...) {
        send_error(res, 500, "unknown error");
      }
    });
    http.set_post_routing_handler([](const httplib::Request&, httplib::Response& res) {
      res.set_header("Access-Control-Allow-Origin", "*");
      res.set_header("Access-Control-Allow-Headers", "Content-Type, Authorization");
      res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
    });
    http.set_pre_routing_handler([this](const httplib::Request& req, httplib::Response& res) {
      if (!token || req.method == "OPTIONS" || req.path == "/api/v1/health") return httplib::Server::HandlerResponse::Unhandled;
      if (req.get_header_value("Authorization") != "Bearer " + *token) {
        send_error(res, 401, "missing or invalid bearer token");
        return httplib::Server::HandlerResponse::Handled;
      }
      return httplib::Server::HandlerResponse::Unhandled;
    });
    http.Options(R"(/api/v1/.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });

    http.Get("/api/v1/health", [this](const httplib::Request&, httplib::Response& res) {
      send_json(res, 200, json{{"status", "ok"}, {"models", models.available()}});
    });
    http.Get("/api/v1/models", [this](const httplib::Request&, httplib::Response& res) {
      send_json(res, 200, json{{"models", models.available()}});
    });
    http.Post(R"(/api/v1/ingest/(calls|beneficiaries))", [this](const httplib::Request& req, httplib::Response& res) {
      std::istringstream body(req.body);
      Store::IngestResult result;
      try {
        result = req.matches[1] == "calls" ? store.ingest_calls(body) : store.ingest_beneficiaries(body);
      } catch (const Error& e) {
        send_error(res, 400, e.what());
        return;
      }
      send_json(res, 200, json{{"accepted", result.accepted}, {"row_errors", row_errors_json(result.row_errors)}});
    });
    http.Post("/api/v1/score", [this](const httplib::Request& req, httplib::Response& res) { score(req, res); });
    http.Get("/api/v1/beneficiaries", [this](const httplib::Request& req, httplib::Response& res) { triage(req, res); });
    http.Get(R"(/api/v1/beneficiaries/([^/]+))",
             [this](const httplib::Request& req, httplib::Response& res) { detail(req.matches[1], res); });
    http.Post("/api/v1/interventions", [this](const httplib::Request& req, httplib::Response& res) { intervene(req, res); });
  }

  void score(const httplib::Request& req, httplib::Response& res) {
    json body;
    try {
      body = json::parse(req.body);
    } catch (const json::exception&) {
      send_error(res, 400, "request body is not valid JSON");
      return;
    }
    if (!body.is_object() || !body.contains("model_id") || !body["model_id"].is_string() ||
        !body.contains("as_of_date") || !body["as_of_date"].is_string()) {
      send_error(res, 400, "model_id and as_of_date are required strings");
      return;
    }
    auto as_of = Date::parse(body["as_of_date"].get<std::string>());
    if (!as_of) {
      send_error(res, 400, "as_of_date must be YYYY-MM-DD");
      return;
    }
    std::vector<std::string> ids;
    if (body.contains("beneficiary_ids") && !body["beneficiary_ids"].is_null()) {
      if (!body["beneficiary_ids"].is_array()) {
        send_error(res, 400, "beneficiary_ids must be an array of strings");
        return;
      }
      for (const auto& id : body["beneficiary_ids"]) {
        if (!id.is_string()) {
          send_error(res, 400, "beneficiary_ids must be an array of strings");
          return;
        }
        ids.push_back(id.get<std::string>());
      }
      if (ids.empty() && !body.value("all", false)) {
        send_error(res, 400, "beneficiary_ids is empty; pass \"all\": true to score everyone");
        return;
      }
    }
    const auto model_id = body["model_id"].get<std::string>();
    auto model = models.get(model_id);
    if (!model) {
      send_error(res, 404, "unknown model_id '" + model_id + "'");
      return;
    }
    const Date from = as_of->plus_days(-model->layout().input_days);
    const auto calls = store.calls(from, *as_of);
    const auto profiles = store.profiles();
    const auto result = scoring::score_beneficiaries(*model, calls, profiles, ids, *as_of);
    const auto scored_at = utc_now();
    store.record_scores(model_id, scored_at, result.scores);

    json scores = json::array(), skipped = json::array();
    for (const auto& s : result.scores) {
      auto row = scoring::to_json(s);
      row["model_id"] = model_id;
      row["scored_at"] = scored_at;
      scores.push_back(std::move(row));
    }
    for (const auto& s : result.skipped) skipped.push_back(scoring::to_json(s));
    send_json(res, 200, json{{"model_id", model_id}, {"as_of_date", as_of->iso()}, {"scores", scores},
                             {"skipped", skipped}});
  }

  void triage(const httplib::Request& req, httplib::Response& res) {
    Store::TriageQuery q;
    for (const auto& [key, value] : req.params) {
      if (key == "band") {
        if (value != "high" && value != "low") return send_error(res, 400, "band must be high or low");
        q.band = value;
      } else if (key == "sort") {
        if (value == "probability_desc") q.sort = Store::Sort::probability_desc;
        else if (value == "probability_asc") q.sort = Store::Sort::probability_asc;
        else if (value == "beneficiary_id") q.sort = Store::Sort::beneficiary_id;
        else return send_error(res, 400, "sort must be probability_desc, probability_asc or beneficiary_id");
      } else if (key == "page") {
        auto v = positive_int(value);
        if (!v) return send_error(res, 400, "page must be a positive integer");
        q.page = *v;
      } else if (key == "page_size") {
        auto v = positive_int(value);
        if (!v || *v > 1000) return send_error(res, 400, "page_size must be an integer in [1, 1000]");
        q.page_size = *v;
      } else {
        return send_error(res, 400, "unknown query parameter '" + key + "'");
      }
    }
    const auto page = store.triage(q);
    json items = json::array();
    for (const auto& row : page.rows) {
      auto item = stored_score_json(row.latest);
      item["last_engagement_date"] = row.last_engagement_date ? json(*row.last_engagement_date) : json();
      item["interventions_count"] = row.interventions_count;
      items.push_back(std::move(item));
    }
    send_json(res, 200, json{{"page", q.page}, {"page_size", q.page_size}, {"total", page.total}, {"items", items}});
  }

  void detail(const std::string& id, httplib::Response& res) {
    auto profile = store.profile(id);
    if (!profile) return send_error(res, 404, "unknown beneficiary '" + id + "'");
    json timeline = json::array();
    const auto calls = store.calls_for(id);
    for (const auto& c : dedup_best_outcome(calls))
      timeline.push_back({{"call_date", c.call_date.iso()},
                          {"message_id", c.message_id},
                          {"duration_s", c.duration_s},
                          {"connected", c.connected},
                          {"outcome", outcome_name(classify(c))}});
    json history = json::array();
    for (const auto& s : store.score_history(id)) history.push_back(stored_score_json(s));
    json interventions = json::array();
    for (const auto& i : store.interventions(id)) interventions.push_back(intervention_json(i));
    send_json(res, 200, json{{"profile", profile_json(*profile)},
                             {"latest_score", history.empty() ? json() : history.back()},
                             {"scores", history},
                             {"calls", timeline},
                             {"interventions", interventions}});
  }

  void intervene(const httplib::Request& req, httplib::Response& res) {
    json body;
    try {
      body = json::parse(req.body);
    } catch (const json::exception&) {
      return send_error(res, 400, "request body is not valid JSON");
    }
    if (!body.is_object() || !body.contains("beneficiary_id") || !body["beneficiary_id"].is_string() ||
        !body.contains("kind") || !body["kind"].is_string())
      return send_error(res, 400, "beneficiary_id and kind are required strings");
    const auto kind = body["kind"].get<std::string>();
    if (kind != "reminder_call" && kind != "counseling" && kind != "other")
      return send_error(res, 400, "kind must be reminder_call, counseling or other");
    if (body.contains("note") && !body["note"].is_string()) return send_error(res, 400, "note must be a string");
    const auto id = body["beneficiary_id"].get<std::string>();
    auto rec = store.add_intervention(id, kind, body.value("note", ""), utc_now());
    if (!rec) return send_error(res, 404, "unknown beneficiary '" + id + "'");
    send_json(res, 201, intervention_json(*rec));
  }
};

Server::Server(ServiceConfig config) : config_(std::move(config)) {
  std::filesystem::create_directories(config_.data_dir);
  impl_ = std::make_unique<Impl>(config_);
}

Server::~Server() { stop(); }

int Server::bind() {
  port_ = config_.port == 0 ? impl_->http.bind_to_any_port(config_.host)
                            : (impl_->http.bind_to_port(config_.host, config_.port) ? config_.port : -1);
  if (port_ < 0) throw Error("cannot bind " + config_.host + ":" + std::to_string(config_.port));
  return port_;
}

void Server::run() {
  spdlog::info(json{{"event", "listening"}, {"host", config_.host}, {"port", port_},
                    {"data_dir", config_.data_dir.string()}, {"model_dir", config_.model_dir.string()}}.dump());
  impl_->http.listen_after_bind();
}

void Server::stop() {
  if (impl_) impl_->http.stop();
}

}  // namespace dropcast::service
