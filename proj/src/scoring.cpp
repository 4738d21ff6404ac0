#include "dropcast/scoring.hpp"

#include <algorithm>
#include <map>

#include "dropcast/pipeline.hpp"

namespace dropcast::scoring {

std::string risk_band(double probability) { return probability >= kRiskBandThreshold ? "high" : "low"; }

ScoreResult score_beneficiaries(const Model& model, std::span<const CallRecord> raw_calls,
                                std::span<const ProfileCandidate> profiles, std::span<const std::string> ids,
                                Date as_of, Exec exec) {
  const auto& layout = model.layout();
  const Date start = as_of.plus_days(-layout.input_days);

  std::vector<CallRecord> window;
  for (const auto& c : raw_calls)
    if (c.call_date >= start && c.call_date < as_of) window.push_back(c);
  const auto calls = dedup_best_outcome(window);
  std::map<std::string_view, std::span<const CallRecord>> calls_by_id;
  for (const auto& g : group_by_beneficiary(calls)) calls_by_id[g.beneficiary_id] = g.calls;

  std::map<std::string, const ProfileCandidate*> profile_by_id;
  for (const auto& p : profiles) profile_by_id[p.beneficiary_id] = &p;

  std::vector<std::string> wanted(ids.begin(), ids.end());
  if (wanted.empty())
    for (const auto& [id, p] : profile_by_id) wanted.push_back(id);
  std::sort(wanted.begin(), wanted.end());
  wanted.erase(std::unique(wanted.begin(), wanted.end()), wanted.end());

  ScoreResult result;
  std::vector<pipeline::WindowSample> samples;
  for (const auto& id : wanted) {
    auto pit = profile_by_id.find(id);
    if (pit == profile_by_id.end()) {
      result.skipped.push_back({id, "no profile"});
      continue;
    }
    auto valid = validate_profile(*pit->second, layout.schema);
    if (auto* rej = std::get_if<Rejection>(&valid)) {
      result.skipped.push_back({id, "invalid profile: " + rej->reason});
      continue;
    }
    auto cit = calls_by_id.find(id);
    if (cit == calls_by_id.end()) {
      result.skipped.push_back({id, "no input calls"});
      continue;
    }
    samples.push_back(pipeline::build_input_sample(cit->second, std::get<BeneficiaryProfile>(valid), start,
                                                   {layout.input_days, layout.max_len}, layout.schema, layout.task));
  }
  std::vector<const pipeline::WindowSample*> ptrs;
  for (const auto& s : samples) ptrs.push_back(&s);
  const auto probs = model.predict(ptrs, exec);
  for (std::size_t i = 0; i < samples.size(); ++i)
    result.scores.push_back({samples[i].beneficiary_id, probs[i], risk_band(probs[i]), as_of.plus_days(-1)});
  return result;
}

nlohmann::json to_json(const RiskScore& s) {
  return {{"beneficiary_id", s.beneficiary_id},
          {"probability", s.probability},
          {"risk_band", s.risk_band},
          {"inputs_through", s.inputs_through.iso()}};
}

nlohmann::json to_json(const Skipped& s) { return {{"beneficiary_id", s.beneficiary_id}, {"reason", s.reason}}; }

}  // namespace dropcast::scoring
