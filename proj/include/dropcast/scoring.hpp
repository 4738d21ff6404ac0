#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "dropcast/call_data.hpp"
#include "dropcast/exec.hpp"
#include "dropcast/model.hpp"

namespace dropcast::scoring {

inline constexpr double kRiskBandThreshold = 0.5;

struct RiskScore {
  std::string beneficiary_id;
  double probability = 0.0;
  std::string risk_band;  // "high" iff probability >= 0.5
  Date inputs_through;    // last day of the input window
};

struct Skipped {
  std::string beneficiary_id;
  std::string reason;
};

struct ScoreResult {
  std::vector<RiskScore> scores;  // ascending beneficiary_id
  std::vector<Skipped> skipped;
};

std::string risk_band(double probability);

// Scores each beneficiary from the model's input window ending the day
// before `as_of`. `ids` empty means every beneficiary with a profile.
// Raw calls are deduplicated here. Skip reasons: "no profile",
// "invalid profile: <reason>", "no input calls".
ScoreResult score_beneficiaries(const Model& model, std::span<const CallRecord> raw_calls,
                                std::span<const ProfileCandidate> profiles, std::span<const std::string> ids,
                                Date as_of, Exec exec = Exec::parallel);

nlohmann::json to_json(const RiskScore& s);
nlohmann::json to_json(const Skipped& s);

}  // namespace dropcast::scoring
