#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "dropcast/call_data.hpp"
#include "dropcast/exec.hpp"
#include "dropcast/metrics.hpp"
#include "dropcast/model.hpp"

namespace dropcast::pilot {

struct PilotConfig {
  std::optional<Date> registration_from;  // inclusive
  std::optional<Date> registration_to;    // inclusive
  int input_days = 60;
  int min_attempts_input = 8;
  std::vector<int> mc_thresholds{5, 10, 15};
  std::optional<Date> cutoff_date;  // records on or after this day are dropped
  double risk_threshold = 0.5;

  void validate() const;
};

void to_json(nlohmann::json& j, const PilotConfig& c);
void from_json(const nlohmann::json& j, PilotConfig& c);

struct Cohort {
  std::vector<std::string> eligible;  // ascending id
  std::map<std::string, int> exclusions;
};

// `calls` deduplicated. Exclusion reasons: "registration window",
// "attempt minimum", "no profile", "invalid profile".
Cohort cohort_filter(std::span<const CallRecord> calls, std::span<const ProfileCandidate> profiles,
                     const PilotConfig& cfg, const ProfileSchema& schema = {});

struct RealizedOutcome {
  std::string beneficiary_id;
  double probability = 0.0;
  int connections = 0;
  int engagements = 0;
  int label = 0;  // 1 when engagements / connections < risk threshold
};

struct McResult {
  int mc = 0;
  std::vector<std::string> cohort;
  metrics::MetricsReport report;
};

struct PilotReport {
  PilotConfig config;
  std::vector<RealizedOutcome> outcomes;  // everyone scored with >= 1 realized connection
  std::vector<McResult> per_mc;
  std::map<std::string, int> exclusions;
};

// Throws Error when the model is not a long-term engagement model, when no
// beneficiary is eligible, or when some MC cohort is empty.
PilotReport run_pilot(const Model& model, std::span<const CallRecord> raw_calls,
                      std::span<const ProfileCandidate> profiles, const PilotConfig& cfg, Exec exec = Exec::parallel);

// {config, per_mc: [{mc, n, accuracy, precision, recall, f1, ...}], exclusions}
nlohmann::json report_json(const PilotReport& report);

}  // namespace dropcast::pilot
