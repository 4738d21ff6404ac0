#include "dropcast/pilot.hpp"

#include <algorithm>
#include <limits>
#include <unordered_map>

#include "dropcast/error.hpp"
#include "dropcast/pipeline.hpp"

namespace dropcast::pilot {

void PilotConfig::validate() const {
  if (input_days <= 0) throw Error("pilot: input_days must be positive");
  if (min_attempts_input < 0) throw Error("pilot: min_attempts_input must be >= 0");
  if (mc_thresholds.empty()) throw Error("pilot: at least one MC threshold is required");
  if (!std::is_sorted(mc_thresholds.begin(), mc_thresholds.end()))
    throw Error("pilot: mc_thresholds must be sorted ascending");
  if (!(risk_threshold > 0 && risk_threshold < 1)) throw Error("pilot: risk_threshold must be in (0, 1)");
  if (registration_from && registration_to && *registration_to < *registration_from)
    throw Error("pilot: registration window ends before it starts");
}

namespace {

nlohmann::json date_json(const std::optional<Date>& d) { return d ? nlohmann::json(d->iso()) : nlohmann::json(); }

std::optional<Date> date_from(const nlohmann::json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  auto d = Date::parse(j.at(key).get<std::string>());
  if (!d) throw Error(std::string("pilot: ") + key + " must be YYYY-MM-DD");
  return d;
}

}  // namespace

void to_json(nlohmann::json& j, const PilotConfig& c) {
  j = nlohmann::json{{"registration_window", {{"from", date_json(c.registration_from)}, {"to", date_json(c.registration_to)}}},
                     {"input_days", c.input_days},
                     {"min_attempts_input", c.min_attempts_input},
                     {"mc_thresholds", c.mc_thresholds},
                     {"cutoff_date", date_json(c.cutoff_date)},
                     {"cutoff_exclusive", true},
                     {"risk_threshold", c.risk_threshold}};
}

void from_json(const nlohmann::json& j, PilotConfig& c) {
  if (j.contains("registration_window")) {
    c.registration_from = date_from(j["registration_window"], "from");
    c.registration_to = date_from(j["registration_window"], "to");
  }
  c.input_days = j.value("input_days", c.input_days);
  c.min_attempts_input = j.value("min_attempts_input", c.min_attempts_input);
  c.mc_thresholds = j.value("mc_thresholds", c.mc_thresholds);
  c.cutoff_date = date_from(j, "cutoff_date");
  c.risk_threshold = j.value("risk_threshold", c.risk_threshold);
  c.validate();
}

namespace {

std::span<const CallRecord> window_calls(std::span<const CallRecord> calls, Date from, Date to) {
  auto lo = std::partition_point(calls.begin(), calls.end(), [&](const CallRecord& c) { return c.call_date < from; });
  auto hi = std::partition_point(lo, calls.end(), [&](const CallRecord& c) { return c.call_date < to; });
  return {lo, hi};
}

struct Member {
  BeneficiaryProfile profile;
  std::span<const CallRecord> calls;
};

struct Screened {
  Cohort cohort;
  std::vector<Member> members;  // parallel to cohort.eligible
};

Screened screen(std::span<const CallRecord> calls, std::span<const ProfileCandidate> profiles, const PilotConfig& cfg,
                const ProfileSchema& schema) {
  cfg.validate();
  Screened out;
  auto& ex = out.cohort.exclusions;
  for (const char* reason : {"registration window", "attempt minimum", "no profile", "invalid profile"}) ex[reason] = 0;

  std::unordered_map<std::string_view, const ProfileCandidate*> by_id;
  for (const auto& p : profiles) by_id[p.beneficiary_id] = &p;
  for (const auto& group : group_by_beneficiary(calls)) {
    auto it = by_id.find(group.beneficiary_id);
    if (it == by_id.end()) {
      ++ex["no profile"];
      continue;
    }
    auto valid = validate_profile(*it->second, schema);
    if (std::holds_alternative<Rejection>(valid)) {
      ++ex["invalid profile"];
      continue;
    }
    auto& profile = std::get<BeneficiaryProfile>(valid);
    const Date reg = profile.registration_date;
    if ((cfg.registration_from && reg < *cfg.registration_from) || (cfg.registration_to && reg > *cfg.registration_to)) {
      ++ex["registration window"];
      continue;
    }
    const auto input = window_calls(group.calls, reg, reg.plus_days(cfg.input_days));
    if (static_cast<int>(input.size()) < cfg.min_attempts_input) {
      ++ex["attempt minimum"];
      continue;
    }
    out.cohort.eligible.emplace_back(group.beneficiary_id);
    out.members.push_back(Member{std::move(profile), group.calls});
  }
  return out;
}

std::vector<CallRecord> prepared_calls(std::span<const CallRecord> raw, const PilotConfig& cfg) {
  std::vector<CallRecord> kept;
  kept.reserve(raw.size());
  for (const auto& c : raw)
    if (!cfg.cutoff_date || c.call_date < *cfg.cutoff_date) kept.push_back(c);
  return dedup_best_outcome(kept);
}

}  // namespace

Cohort cohort_filter(std::span<const CallRecord> calls, std::span<const ProfileCandidate> profiles,
                     const PilotConfig& cfg, const ProfileSchema& schema) {
  return screen(calls, profiles, cfg, schema).cohort;
}

PilotReport run_pilot(const Model& model, std::span<const CallRecord> raw_calls,
                      std::span<const ProfileCandidate> profiles, const PilotConfig& cfg, Exec exec) {
  const auto& layout = model.layout();
  if (layout.task != Task::long_engagement) throw Error("pilot requires a long-term engagement model");
  if (layout.input_days != cfg.input_days)
    throw Error("pilot input_days " + std::to_string(cfg.input_days) + " differs from the model's " +
                std::to_string(layout.input_days));

  const auto calls = prepared_calls(raw_calls, cfg);
  auto screened = screen(calls, profiles, cfg, layout.schema);
  PilotReport report;
  report.config = cfg;
  report.exclusions = screened.cohort.exclusions;
  if (screened.members.empty()) throw Error("pilot: no eligible beneficiaries");

  const pipeline::WindowSpec window{layout.input_days, layout.max_len};
  std::vector<pipeline::WindowSample> samples;
  std::vector<RealizedOutcome> outcomes;
  int no_connections = 0;
  for (const auto& m : screened.members) {
    const Date start = m.profile.registration_date.plus_days(cfg.input_days);
    auto realized = window_calls(m.calls, start, Date::from_serial(std::numeric_limits<int>::max() / 2));
    RealizedOutcome o;
    o.beneficiary_id = m.profile.beneficiary_id;
    for (const auto& c : realized) {
      o.connections += c.connected;
      o.engagements += is_engagement(c, layout.schema.engagement_threshold_s);
    }
    if (o.connections == 0) {
      ++no_connections;
      continue;
    }
    o.label = static_cast<double>(o.engagements) / o.connections < cfg.risk_threshold;
    samples.push_back(pipeline::build_input_sample(m.calls, m.profile, m.profile.registration_date, window,
                                                   layout.schema, layout.task));
    outcomes.push_back(std::move(o));
  }
  report.exclusions["no post-input connections"] = no_connections;
  if (samples.empty()) throw Error("pilot: no eligible beneficiary has a post-input connection");

  std::vector<const pipeline::WindowSample*> ptrs;
  for (const auto& s : samples) ptrs.push_back(&s);
  const auto probs = model.predict(ptrs, exec);
  for (std::size_t i = 0; i < outcomes.size(); ++i) outcomes[i].probability = probs[i];

  for (int mc : cfg.mc_thresholds) {
    McResult r;
    r.mc = mc;
    std::vector<double> p;
    std::vector<int> y;
    for (const auto& o : outcomes) {
      if (o.connections < mc) continue;
      r.cohort.push_back(o.beneficiary_id);
      p.push_back(o.probability);
      y.push_back(o.label);
    }
    if (r.cohort.empty()) throw Error("pilot: empty cohort at MC=" + std::to_string(mc));
    r.report = metrics::evaluate(p, y);
    report.per_mc.push_back(std::move(r));
  }
  report.outcomes = std::move(outcomes);
  return report;
}

nlohmann::json report_json(const PilotReport& report) {
  nlohmann::json per_mc = nlohmann::json::array();
  for (const auto& r : report.per_mc) {
    auto row = metrics::summary_json(r.report);
    row["mc"] = r.mc;
    per_mc.push_back(std::move(row));
  }
  nlohmann::json exclusions = report.exclusions;
  return {{"config", report.config}, {"per_mc", per_mc}, {"exclusions", exclusions}};
}

}  // namespace dropcast::pilot
