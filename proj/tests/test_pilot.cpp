#include <doctest.h>

#include <set>

#include "dropcast/error.hpp"
#include "dropcast/pilot.hpp"
#include "dropcast/synthgen.hpp"
#include "support/fixtures.hpp"

using namespace dropcast;
using namespace dropcast::pilot;

namespace {

Model oracle() { return testing::owner_oracle_model(Task::long_engagement, 60, 18); }

bool subset(const std::vector<std::string>& small, const std::vector<std::string>& big) {
  std::set<std::string> b(big.begin(), big.end());
  return std::all_of(small.begin(), small.end(), [&](const std::string& s) { return b.count(s) > 0; });
}

}  // namespace

TEST_SUITE("pilot") {

TEST_CASE("oracle scorer on a bimodal cohort is perfect at every MC") {
  auto c = testing::bimodal_cohort(150, 1);
  PilotConfig cfg;
  auto r = run_pilot(oracle(), c.raw_calls, c.profiles, cfg);
  REQUIRE(r.per_mc.size() == 3);
  for (const auto& m : r.per_mc) {
    CAPTURE(m.mc);
    CHECK(m.report.accuracy == 1.0);
    CHECK(m.report.n == static_cast<long>(m.cohort.size()));
  }
  for (const auto& o : r.outcomes) CHECK(o.connections >= 1);
  CHECK(r.exclusions.at("no post-input connections") > 0);
}

TEST_CASE("cohorts nest as MC grows") {
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    synth::PopulationConfig pc;
    pc.n_beneficiaries = 300;
    pc.horizon_weeks = 40;
    pc.seed = seed;
    auto pop = synth::generate(pc);
    std::vector<ProfileCandidate> profiles;
    for (const auto& p : pop.profiles) profiles.push_back(ProfileCandidate::from(p));
    PilotConfig cfg;
    cfg.mc_thresholds = {1, 2, 3, 5, 8, 10, 12, 15};
    auto r = run_pilot(oracle(), pop.calls, profiles, cfg);
    for (std::size_t k = 1; k < r.per_mc.size(); ++k) {
      CHECK(subset(r.per_mc[k].cohort, r.per_mc[k - 1].cohort));
      CHECK(r.per_mc[k].cohort.size() <= r.per_mc[k - 1].cohort.size());
    }
    for (const auto& m : r.per_mc)
      for (const auto& id : m.cohort) {
        auto it = std::find_if(r.outcomes.begin(), r.outcomes.end(), [&](auto& o) { return o.beneficiary_id == id; });
        REQUIRE(it != r.outcomes.end());
        CHECK(it->connections >= m.mc);
      }
  }
}

TEST_CASE("a cutoff after the data changes nothing") {
  auto c = testing::bimodal_cohort(90, 2);
  PilotConfig cfg;
  auto base = report_json(run_pilot(oracle(), c.raw_calls, c.profiles, cfg));
  cfg.cutoff_date = Date::from_ymd(2030, 1, 1);
  auto late = report_json(run_pilot(oracle(), c.raw_calls, c.profiles, cfg));
  CHECK(base["per_mc"].dump() == late["per_mc"].dump());
  CHECK(base["exclusions"].dump() == late["exclusions"].dump());
}

TEST_CASE("a cutoff truncates realized outcomes") {
  auto c = testing::bimodal_cohort(90, 3);
  PilotConfig cfg;
  cfg.mc_thresholds = {1};
  auto full = run_pilot(oracle(), c.raw_calls, c.profiles, cfg);
  cfg.cutoff_date = Date::from_ymd(2019, 4, 15);
  auto cut = run_pilot(oracle(), c.raw_calls, c.profiles, cfg);
  long full_conn = 0, cut_conn = 0;
  for (const auto& o : full.outcomes) full_conn += o.connections;
  for (const auto& o : cut.outcomes) cut_conn += o.connections;
  CHECK(cut_conn < full_conn);
  CHECK(cut.per_mc[0].cohort.size() <= full.per_mc[0].cohort.size());
}

TEST_CASE("exclusion reasons") {
  auto c = testing::bimodal_cohort(30, 4);
  c.profiles[1].income_group.reset();  // invalid profile
  c.profiles.erase(c.profiles.begin() + 2);  // no profile
  std::erase_if(c.raw_calls, [](const CallRecord& r) {  // attempt minimum
    return r.beneficiary_id == "P103" && r.call_date > Date::from_ymd(2019, 1, 10) &&
           r.call_date < Date::from_ymd(2019, 3, 1);
  });
  PilotConfig cfg;
  cfg.registration_to = Date::from_ymd(2019, 1, 25);  // drops P125..P129
  cfg.mc_thresholds = {1};
  auto cohort = cohort_filter(dedup_best_outcome(c.raw_calls), c.profiles, cfg);
  CHECK(cohort.exclusions.at("invalid profile") == 1);
  CHECK(cohort.exclusions.at("no profile") == 1);
  CHECK(cohort.exclusions.at("attempt minimum") == 1);
  CHECK(cohort.exclusions.at("registration window") == 5);
  CHECK(cohort.eligible.size() == 30 - 8);
  CHECK(std::is_sorted(cohort.eligible.begin(), cohort.eligible.end()));

  auto r = run_pilot(oracle(), c.raw_calls, c.profiles, cfg);
  auto j = report_json(r);
  CHECK(j["exclusions"]["no profile"] == 1);
  CHECK(j["exclusions"].contains("no post-input connections"));
  CHECK(j["per_mc"][0]["mc"] == 1);
  CHECK(j["config"]["registration_window"]["to"] == "2019-01-25");
}

TEST_CASE("errors") {
  auto c = testing::bimodal_cohort(30, 5);
  PilotConfig cfg;
  CHECK_THROWS_AS(run_pilot(testing::owner_oracle_model(Task::short_term, 28, 8), c.raw_calls, c.profiles, cfg), Error);
  CHECK_THROWS_AS(run_pilot(testing::owner_oracle_model(Task::long_connection, 60, 18), c.raw_calls, c.profiles, cfg),
                  Error);
  cfg.mc_thresholds = {5, 500};
  CHECK_THROWS_AS(run_pilot(oracle(), c.raw_calls, c.profiles, cfg), Error);
  cfg = {};
  cfg.registration_from = Date::from_ymd(2025, 1, 1);
  CHECK_THROWS_AS(run_pilot(oracle(), c.raw_calls, c.profiles, cfg), Error);
  cfg = {};
  cfg.mc_thresholds = {10, 5};
  CHECK_THROWS_AS(cfg.validate(), Error);
}

TEST_CASE("config json") {
  PilotConfig cfg;
  cfg.registration_from = Date::from_ymd(2019, 1, 1);
  cfg.cutoff_date = Date::from_ymd(2020, 3, 10);
  nlohmann::json j = cfg;
  CHECK(j["cutoff_date"] == "2020-03-10");
  CHECK(j["registration_window"]["to"].is_null());
  CHECK(nlohmann::json(j.get<PilotConfig>()) == j);
  j["cutoff_date"] = "10/03/2020";
  CHECK_THROWS_AS(j.get<PilotConfig>(), Error);
}

}
