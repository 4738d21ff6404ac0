#include <doctest.h>
#include <httplib.h>

#include <sstream>
#include <thread>

#include "dropcast/service/server.hpp"
#include "dropcast/service/store.hpp"
#include "support/fixtures.hpp"
#include "support/oracles.hpp"

using namespace dropcast;
using namespace dropcast::service;
using nlohmann::json;

namespace {

// Server on a free port in a background thread, stopped on scope exit.
struct Running {
  std::filesystem::path dir;
  Server server;
  std::thread thread;
  httplib::Client client;

  explicit Running(std::filesystem::path d, std::optional<std::string> token = std::nullopt)
      : dir(d), server(config(d, token)), client("127.0.0.1", server.bind()) {
    thread = std::thread([this] { server.run(); });
    for (int i = 0; i < 200 && !client.Get("/api/v1/health"); ++i) std::this_thread::sleep_for(std::chrono::milliseconds(10));
  }
  ~Running() {
    server.stop();
    thread.join();
  }

  static ServiceConfig config(const std::filesystem::path& d, std::optional<std::string> token) {
    ServiceConfig c;
    c.host = "127.0.0.1";
    c.port = 0;
    c.data_dir = d / "data";
    c.model_dir = d / "models";
    c.token = std::move(token);
    return c;
  }

  json post(const std::string& path, const std::string& body, const char* type = "application/json", int* status = nullptr) {
    auto r = client.Post(path, body, type);
    REQUIRE(r);
    if (status) *status = r->status;
    return r->body.empty() ? json() : json::parse(r->body);
  }
  json get(const std::string& path, int* status = nullptr) {
    auto r = client.Get(path);
    REQUIRE(r);
    if (status) *status = r->status;
    return json::parse(r->body);
  }
};

std::string calls_csv(const std::vector<CallRecord>& calls) {
  std::ostringstream out;
  write_call_log(out, calls);
  return out.str();
}

std::string profiles_csv(const std::vector<ProfileCandidate>& profiles) {
  std::ostringstream out;
  out << kBeneficiariesHeader << '\n';
  for (const auto& p : profiles)
    out << p.beneficiary_id << ',' << *p.age_years << ',' << *p.education_level << ',' << *p.income_group << ','
        << p.registration_date->iso() << ',' << *p.gestation_age_weeks << ',' << *p.call_slot << ',' << *p.language
        << ',' << to_string(*p.phone_owner) << '\n';
  return out.str();
}

std::filesystem::path with_oracle_model(const std::string& tag) {
  auto dir = testing::make_temp_dir(tag);
  std::filesystem::create_directories(dir / "models");
  save_model(testing::owner_oracle_model(Task::long_engagement, 60, 18), dir / "models" / "oracle.json");
  return dir;
}

}  // namespace

TEST_SUITE("service") {

TEST_CASE("health and models") {
  Running s(with_oracle_model("svc-health"));
  int status = 0;
  auto h = s.get("/api/v1/health", &status);
  CHECK(status == 200);
  CHECK(h["status"] == "ok");
  CHECK(h["models"] == json::array({"oracle"}));
}

TEST_CASE("ingest examples") {
  Running s(with_oracle_model("svc-ingest"));
  auto c = testing::bimodal_cohort(3, 1);
  std::vector<CallRecord> ten(c.raw_calls.begin(), c.raw_calls.begin() + 10);
  int status = 0;
  auto r = s.post("/api/v1/ingest/calls", calls_csv(ten), "text/csv", &status);
  CHECK(status == 200);
  CHECK(r["accepted"] == 10);
  CHECK(r["row_errors"].empty());

  ten.pop_back();
  auto body = calls_csv(ten);
  body.insert(body.find('\n') + 1, "P100,5,not-a-date,0,0\n");
  r = s.post("/api/v1/ingest/calls", body, "text/csv", &status);
  CHECK(status == 200);
  CHECK(r["accepted"] == 9);
  REQUIRE(r["row_errors"].size() == 1);
  CHECK(r["row_errors"][0]["line"] == 2);

  s.post("/api/v1/ingest/calls", "who,what\n1,2\n", "text/csv", &status);
  CHECK(status == 400);
  s.post("/api/v1/ingest/beneficiaries", "nope\n", "text/csv", &status);
  CHECK(status == 400);
  r = s.post("/api/v1/ingest/beneficiaries", profiles_csv(c.profiles), "text/csv", &status);
  CHECK(status == 200);
  CHECK(r["accepted"] == 3);
}

TEST_CASE("score, triage, detail and interventions") {
  Running s(with_oracle_model("svc-flow"));
  auto c = testing::bimodal_cohort(30, 2);
  s.post("/api/v1/ingest/beneficiaries", profiles_csv(c.profiles), "text/csv");
  s.post("/api/v1/ingest/calls", calls_csv(c.raw_calls), "text/csv");

  int status = 0;
  const json req{{"model_id", "oracle"}, {"beneficiary_ids", {"P100", "P101", "NOPE"}}, {"as_of_date", "2019-03-15"}};
  auto r = s.post("/api/v1/score", req.dump(), "application/json", &status);
  CHECK(status == 200);
  REQUIRE(r["scores"].size() == 2);
  CHECK(r["scores"][0]["beneficiary_id"] == "P100");
  CHECK(r["scores"][0]["probability"] == 1.0);
  CHECK(r["scores"][0]["risk_band"] == "high");
  CHECK(r["scores"][1]["risk_band"] == "low");
  CHECK(r["scores"][0]["inputs_through"] == "2019-03-14");
  CHECK(r["scores"][0]["model_id"] == "oracle");
  REQUIRE(r["skipped"].size() == 1);
  CHECK(r["skipped"][0]["reason"] == "no profile");

  auto again = s.post("/api/v1/score", req.dump());
  CHECK(again["scores"][0]["probability"] == r["scores"][0]["probability"]);

  // Beneficiaries registered after as_of have no input calls.
  auto all = s.post("/api/v1/score", json{{"model_id", "oracle"}, {"all", true}, {"as_of_date", "2019-02-01"}}.dump());
  CHECK(all["scores"].size() + all["skipped"].size() == 30);
  for (const auto& row : all["scores"])
    CHECK((row["risk_band"] == "high") == (row["probability"].get<double>() >= 0.5));
  for (const auto& sk : all["skipped"]) CHECK(sk["reason"] == "no input calls");

  s.post("/api/v1/score", json{{"model_id", "ghost"}, {"as_of_date", "2019-02-01"}}.dump(), "application/json", &status);
  CHECK(status == 404);
  s.post("/api/v1/score", json{{"model_id", "../oracle"}, {"as_of_date", "2019-02-01"}}.dump(), "application/json",
         &status);
  CHECK(status == 404);
  s.post("/api/v1/score", json{{"model_id", "oracle"}, {"as_of_date", "Feb 1"}}.dump(), "application/json", &status);
  CHECK(status == 400);
  s.post("/api/v1/score", "{", "application/json", &status);
  CHECK(status == 400);
  s.post("/api/v1/score", json{{"model_id", "oracle"}, {"beneficiary_ids", json::array()}, {"as_of_date", "2019-02-01"}}.dump(),
         "application/json", &status);
  CHECK(status == 400);

  // Triage.
  auto high = s.get("/api/v1/beneficiaries?band=high&page_size=1000", &status);
  CHECK(status == 200);
  CHECK(high["total"].get<long>() == static_cast<long>(high["items"].size()));
  for (const auto& row : high["items"]) CHECK(row["probability"].get<double>() >= 0.5);

  std::vector<double> probs;
  for (int page = 1; page <= 5; ++page) {
    auto p = s.get("/api/v1/beneficiaries?sort=probability_desc&page_size=7&page=" + std::to_string(page));
    for (const auto& row : p["items"]) probs.push_back(row["probability"].get<double>());
  }
  CHECK(std::is_sorted(probs.rbegin(), probs.rend()));
  auto beyond = s.get("/api/v1/beneficiaries?page=99", &status);
  CHECK(status == 200);
  CHECK(beyond["items"].empty());
  s.get("/api/v1/beneficiaries?band=medium", &status);
  CHECK(status == 400);
  s.get("/api/v1/beneficiaries?page=0", &status);
  CHECK(status == 400);
  s.get("/api/v1/beneficiaries?colour=red", &status);
  CHECK(status == 400);

  // Interventions.
  auto created = s.post("/api/v1/interventions", json{{"beneficiary_id", "P100"}, {"kind", "reminder_call"}, {"note", "x"}}.dump(),
                        "application/json", &status);
  CHECK(status == 201);
  CHECK(created["id"].get<long>() >= 1);
  s.post("/api/v1/interventions", json{{"beneficiary_id", "P100"}, {"kind", "counseling"}}.dump());
  s.post("/api/v1/interventions", json{{"beneficiary_id", "NOPE"}, {"kind", "other"}}.dump(), "application/json", &status);
  CHECK(status == 404);
  s.post("/api/v1/interventions", json{{"beneficiary_id", "P100"}, {"kind", "sms"}}.dump(), "application/json", &status);
  CHECK(status == 400);
  s.post("/api/v1/interventions", json{{"beneficiary_id", "P100"}}.dump(), "application/json", &status);
  CHECK(status == 400);

  auto ids = s.get("/api/v1/beneficiaries?sort=beneficiary_id&page_size=1000");
  REQUIRE_FALSE(ids["items"].empty());
  CHECK(ids["items"][0]["beneficiary_id"] == "P100");
  CHECK(ids["items"][0]["interventions_count"] == 2);
  CHECK(ids["items"][0]["model_id"] == "oracle");
  CHECK(ids["items"][1]["interventions_count"] == 0);
  CHECK_FALSE(ids["items"][1]["last_engagement_date"].is_null());

  // Detail.
  auto d = s.get("/api/v1/beneficiaries/P100", &status);
  CHECK(status == 200);
  CHECK(d["profile"]["phone_owner"] == "husband");
  CHECK(d["interventions"].size() == 2);
  CHECK(d["scores"].size() >= 2);
  CHECK(d["latest_score"] == d["scores"].back());
  for (const auto& call : d["calls"]) CHECK(call["outcome"] == "connection");
  auto d1 = s.get("/api/v1/beneficiaries/P101");
  bool engaged = false;
  for (const auto& call : d1["calls"]) engaged |= call["outcome"] == "engagement";
  CHECK(engaged);
  s.get("/api/v1/beneficiaries/NOPE", &status);
  CHECK(status == 404);
}

TEST_CASE("scores survive a restart") {
  auto dir = with_oracle_model("svc-restart");
  auto c = testing::bimodal_cohort(10, 3);
  const json req{{"model_id", "oracle"}, {"all", true}, {"as_of_date", "2019-03-01"}};
  json first;
  {
    Running s(dir);
    s.post("/api/v1/ingest/beneficiaries", profiles_csv(c.profiles), "text/csv");
    s.post("/api/v1/ingest/calls", calls_csv(c.raw_calls), "text/csv");
    first = s.post("/api/v1/score", req.dump());
  }
  Running s(dir);
  auto second = s.post("/api/v1/score", req.dump());
  REQUIRE(first["scores"].size() == second["scores"].size());
  for (std::size_t i = 0; i < first["scores"].size(); ++i)
    CHECK(first["scores"][i]["probability"] == second["scores"][i]["probability"]);
  CHECK(s.get("/api/v1/beneficiaries/P100")["scores"].size() == 2);
}

TEST_CASE("bearer token") {
  Running s(with_oracle_model("svc-auth"), std::string("s3cret"));
  int status = 0;
  s.get("/api/v1/health", &status);
  CHECK(status == 200);
  s.get("/api/v1/beneficiaries", &status);
  CHECK(status == 401);
  s.client.set_bearer_token_auth("wrong");
  s.get("/api/v1/beneficiaries", &status);
  CHECK(status == 401);
  s.client.set_bearer_token_auth("s3cret");
  s.get("/api/v1/beneficiaries", &status);
  CHECK(status == 200);
}

TEST_CASE("store reads back raw rows and deduplicates in detail") {
  auto dir = testing::make_temp_dir("store");
  Store store(dir / "s.sqlite3");
  std::istringstream calls(std::string(kCallsHeader) +
                           "\nB1,5,2019-01-02,0,0\nB1,5,2019-01-03,45,1\nB1,6,2019-01-09,10,1\n");
  CHECK(store.ingest_calls(calls).accepted == 3);
  CHECK(store.calls().size() == 3);
  CHECK(store.calls(Date::from_ymd(2019, 1, 3), Date::from_ymd(2019, 1, 9)).size() == 1);
  CHECK(dedup_best_outcome(store.calls_for("B1")).size() == 2);
  CHECK_FALSE(store.profile("B1"));
  CHECK_FALSE(store.add_intervention("B1", "other", "", "2019-01-10T00:00:00Z"));

  std::istringstream profiles(std::string(kBeneficiariesHeader) + "\nB1,24,3,2,2018-12-01,12,4,hindi,self\n"
                                                                    "B1,25,3,2,2018-12-01,12,4,hindi,self\n");
  CHECK(store.ingest_beneficiaries(profiles).accepted == 2);
  REQUIRE(store.profile("B1"));
  CHECK(*store.profile("B1")->age_years == 25);
  CHECK(store.profiles().size() == 1);
}

}
