#include "dropcast/pipeline.hpp"

#include <algorithm>
#include <unordered_map>

#include <json.hpp>

#include "dropcast/error.hpp"

namespace dropcast::pipeline {

AggregateFeatures aggregate_features(std::span<const CallRecord> window_calls, Date window_end, int window_days,
                                     int engagement_threshold_s) {
  const int sentinel = window_days + 1;
  AggregateFeatures f{0, 0, 0, sentinel, sentinel, sentinel};
  for (const auto& call : window_calls) {
    int gap = days_between(call.call_date, window_end);
    ++f.n_attempts;
    f.days_since_last_attempt = std::min(f.days_since_last_attempt, gap);
    auto outcome = classify(call, engagement_threshold_s);
    if (outcome != CallOutcome::FailedAttempt) {
      ++f.n_connections;
      f.days_since_last_connection = std::min(f.days_since_last_connection, gap);
    }
    if (outcome == CallOutcome::Engagement) {
      ++f.n_engagements;
      f.days_since_last_engagement = std::min(f.days_since_last_engagement, gap);
    }
  }
  return f;
}

SequenceFeatures sequence_features(std::span<const CallRecord> window_calls, Date window_start, int window_days,
                                   int max_len, int engagement_threshold_s) {
  SequenceFeatures seq;
  seq.max_len = max_len;
  seq.values.assign(static_cast<std::size_t>(max_len) * kPerCallFeatures, 0.0);
  const std::size_t n = window_calls.size();
  const std::size_t first = n > static_cast<std::size_t>(max_len) ? n - static_cast<std::size_t>(max_len) : 0;
  seq.seq_len = static_cast<int>(n - first);
  for (std::size_t i = first; i < n; ++i) {
    const auto& call = window_calls[i];
    Date previous = i == 0 ? window_start : window_calls[i - 1].call_date;
    double* row = seq.values.data() + (i - first) * kPerCallFeatures;
    row[0] = std::min(1.0, call.duration_s / kDurationScale);
    row[1] = call.connected ? 1.0 : 0.0;
    row[2] = classify(call, engagement_threshold_s) == CallOutcome::Engagement ? 1.0 : 0.0;
    row[3] = static_cast<double>(days_between(previous, call.call_date)) / window_days;
    row[4] = static_cast<double>(call.message_id) / kMaxMessageId;
  }
  return seq;
}

namespace {

int category_block_width(int levels) { return levels + 1; }

double min_max(double value, double lo, double hi) {
  if (hi <= lo) return 0.0;
  return std::clamp((value - lo) / (hi - lo), 0.0, 1.0);
}

}  // namespace

StaticLayout::StaticLayout(const ProfileSchema& schema) : schema_(schema) {
  demographic_width_ = 2 + category_block_width(schema.education_levels) +
                       category_block_width(schema.income_levels) + category_block_width(schema.call_slots) +
                       category_block_width(static_cast<int>(schema.languages.size())) + 4;
}

std::vector<std::string> StaticLayout::slot_names() const {
  std::vector<std::string> names{"age", "gestation_weeks"};
  auto block = [&](const std::string& prefix, int levels) {
    for (int i = 1; i <= levels; ++i) names.push_back(prefix + "=" + std::to_string(i));
    names.push_back(prefix + "=other");
  };
  block("education", schema_.education_levels);
  block("income", schema_.income_levels);
  block("call_slot", schema_.call_slots);
  for (const auto& lang : schema_.languages) names.push_back("language=" + lang);
  names.push_back("language=other");
  for (auto owner : {PhoneOwner::self, PhoneOwner::husband, PhoneOwner::family, PhoneOwner::other})
    names.push_back("phone_owner=" + std::string(to_string(owner)));
  for (const char* agg : {"n_attempts", "n_connections", "n_engagements", "days_since_last_attempt",
                          "days_since_last_connection", "days_since_last_engagement"})
    names.emplace_back(agg);
  return names;
}

std::vector<double> encode_static(const BeneficiaryProfile& profile, const AggregateFeatures& agg,
                                  const ProfileSchema& schema, int window_days, int max_len) {
  StaticLayout layout(schema);
  std::vector<double> x;
  x.reserve(static_cast<std::size_t>(layout.width()));
  x.push_back(min_max(profile.age_years, schema.min_age, schema.max_age));
  x.push_back(min_max(profile.gestation_age_weeks, schema.min_gestation_weeks, schema.max_gestation_weeks));
  auto one_hot = [&](int value, int levels) {
    int slot = (value >= 1 && value <= levels) ? value - 1 : levels;
    for (int i = 0; i <= levels; ++i) x.push_back(i == slot ? 1.0 : 0.0);
  };
  one_hot(profile.education_level, schema.education_levels);
  one_hot(profile.income_group, schema.income_levels);
  one_hot(profile.call_slot, schema.call_slots);
  auto lang = std::find(schema.languages.begin(), schema.languages.end(), profile.language);
  one_hot(static_cast<int>(lang - schema.languages.begin()) + 1, static_cast<int>(schema.languages.size()));
  for (int i = 0; i < 4; ++i) x.push_back(static_cast<int>(profile.phone_owner) == i ? 1.0 : 0.0);

  const double count_scale = std::max(1, max_len);
  const double gap_scale = window_days + 1;
  x.push_back(std::min(1.0, agg.n_attempts / count_scale));
  x.push_back(std::min(1.0, agg.n_connections / count_scale));
  x.push_back(std::min(1.0, agg.n_engagements / count_scale));
  x.push_back(agg.days_since_last_attempt / gap_scale);
  x.push_back(agg.days_since_last_connection / gap_scale);
  x.push_back(agg.days_since_last_engagement / gap_scale);
  return x;
}

RatioLabel label_long_term_engagement(std::span<const CallRecord> prediction_calls, int history_months,
                                      const RatioLabelConfig& cfg, int engagement_threshold_s) {
  RatioLabel out;
  for (const auto& c : prediction_calls) {
    auto outcome = classify(c, engagement_threshold_s);
    if (outcome != CallOutcome::FailedAttempt) ++out.denominator;
    if (outcome == CallOutcome::Engagement) ++out.numerator;
  }
  if (history_months < cfg.min_history_months) {
    out.reason = Ineligibility::short_history;
  } else if (out.denominator < cfg.min_denominator || out.denominator == 0) {
    out.reason = Ineligibility::few_events;
  } else {
    double ratio = static_cast<double>(out.numerator) / out.denominator;
    out.label = ratio < cfg.risk_threshold ? RiskLabel::high_risk : RiskLabel::low_risk;
  }
  return out;
}

RatioLabel label_long_term_connection(std::span<const CallRecord> prediction_calls, int history_months,
                                      const RatioLabelConfig& cfg) {
  RatioLabel out;
  out.denominator = static_cast<int>(prediction_calls.size());
  out.numerator = static_cast<int>(std::count_if(prediction_calls.begin(), prediction_calls.end(),
                                                 [](const CallRecord& c) { return c.connected; }));
  if (history_months < cfg.min_history_months) {
    out.reason = Ineligibility::short_history;
  } else if (out.denominator < cfg.min_denominator || out.denominator == 0) {
    out.reason = Ineligibility::few_events;
  } else {
    double ratio = static_cast<double>(out.numerator) / out.denominator;
    out.label = ratio < cfg.risk_threshold ? RiskLabel::high_risk : RiskLabel::low_risk;
  }
  return out;
}

WindowSpec input_window(Task task, const PipelineConfig& cfg) {
  if (task == Task::short_term) return {cfg.short_input_days, cfg.short_max_len};
  return {cfg.long_input_days, cfg.long_max_len};
}

namespace {

// Sub-span of date-ordered calls with window_start <= date < window_end.
std::span<const CallRecord> calls_between(std::span<const CallRecord> calls, Date from, Date to_exclusive) {
  auto lo = std::lower_bound(calls.begin(), calls.end(), from,
                             [](const CallRecord& c, Date d) { return c.call_date < d; });
  auto hi = std::lower_bound(lo, calls.end(), to_exclusive,
                             [](const CallRecord& c, Date d) { return c.call_date < d; });
  return calls.subspan(static_cast<std::size_t>(lo - calls.begin()), static_cast<std::size_t>(hi - lo));
}

}  // namespace

WindowSample build_input_sample(std::span<const CallRecord> calls, const BeneficiaryProfile& profile,
                                Date window_start, WindowSpec window, const ProfileSchema& schema, Task task) {
  Date window_end = window_start.plus_days(window.input_days);
  auto in_window = calls_between(calls, window_start, window_end);
  auto agg = aggregate_features(in_window, window_end, window.input_days, schema.engagement_threshold_s);
  auto seq = sequence_features(in_window, window_start, window.input_days, window.max_len,
                               schema.engagement_threshold_s);
  WindowSample s;
  s.beneficiary_id = profile.beneficiary_id;
  s.task = task;
  s.max_len = window.max_len;
  s.seq_len = seq.seq_len;
  s.seq_x = std::move(seq.values);
  s.static_x = encode_static(profile, agg, schema, window.input_days, window.max_len);
  return s;
}

std::optional<WindowSample> sample_short_term(std::span<const CallRecord> calls, const BeneficiaryProfile& profile,
                                              Rng& rng, const PipelineConfig& cfg) {
  if (calls.empty()) return std::nullopt;
  const int span_days = cfg.short_input_days + cfg.short_label_days;
  Date first = calls.front().call_date;
  Date last = calls.back().call_date;
  int history_days = days_between(first, last) + 1;
  if (history_days < span_days) return std::nullopt;
  int offset = std::uniform_int_distribution<int>(0, history_days - span_days)(rng);
  Date start = first.plus_days(offset);
  auto sample = build_input_sample(calls, profile, start, input_window(Task::short_term, cfg), cfg.schema,
                                   Task::short_term);
  Date label_start = start.plus_days(cfg.short_input_days);
  auto label_calls = calls_between(calls, label_start, start.plus_days(span_days));
  bool engaged = std::any_of(label_calls.begin(), label_calls.end(), [&](const CallRecord& c) {
    return classify(c, cfg.schema.engagement_threshold_s) == CallOutcome::Engagement;
  });
  sample.label = engaged ? 0 : 1;
  return sample;
}

LongTermOutcome sample_long_term(std::span<const CallRecord> calls, const BeneficiaryProfile& profile, Task task,
                                 Date observation_end, const PipelineConfig& cfg) {
  const Date reg = profile.registration_date;
  const Date prediction_start = reg.plus_days(cfg.long_input_days);
  auto prediction = calls_between(calls, prediction_start, observation_end.plus_days(1));
  int history_months = whole_months_between(reg, observation_end);
  RatioLabel label = task == Task::long_engagement
                         ? label_long_term_engagement(prediction, history_months, cfg.engagement,
                                                      cfg.schema.engagement_threshold_s)
                         : label_long_term_connection(prediction, history_months, cfg.connection);
  LongTermOutcome out;
  out.reason = label.reason;
  if (!label.label) return out;
  out.sample = build_input_sample(calls, profile, reg, input_window(task, cfg), cfg.schema, task);
  out.sample->label = static_cast<int>(*label.label);
  return out;
}

namespace {

struct BeneficiaryResult {
  std::vector<WindowSample> samples;
  std::string exclusion;
};

}  // namespace

Dataset build_dataset(std::span<const CallRecord> calls, std::span<const ProfileCandidate> profiles, Task task,
                      const PipelineConfig& cfg, std::uint64_t seed, Exec exec) {
  for (std::size_t i = 1; i < calls.size(); ++i) {
    const auto& a = calls[i - 1];
    const auto& b = calls[i];
    if (a.beneficiary_id > b.beneficiary_id || (a.beneficiary_id == b.beneficiary_id && a.call_date > b.call_date))
      throw Error("call log must be deduplicated (ordered by beneficiary and date) before building a dataset");
  }

  Dataset ds;
  ds.task = task;
  auto window = input_window(task, cfg);
  ds.max_len = window.max_len;
  ds.input_days = window.input_days;
  ds.schema = cfg.schema;
  StaticLayout layout(cfg.schema);
  ds.static_width = layout.width();
  ds.demographic_width = layout.demographic_width();

  std::unordered_map<std::string, BeneficiaryProfile> valid;
  std::unordered_map<std::string, bool> seen_profile;
  for (const auto& candidate : profiles) {
    seen_profile[candidate.beneficiary_id] = true;
    auto checked = validate_profile(candidate, cfg.schema);
    if (auto* p = std::get_if<BeneficiaryProfile>(&checked)) valid.emplace(p->beneficiary_id, *p);
  }

  auto groups = group_by_beneficiary(calls);
  Date observation_end = cfg.observation_end.value_or(Date{});
  if (!cfg.observation_end) {
    for (const auto& c : calls) observation_end = std::max(observation_end, c.call_date);
  }

  std::vector<BeneficiaryResult> results(groups.size());
  auto process = [&](std::size_t gi) {
    const auto& group = groups[gi];
    auto& res = results[gi];
    std::string id(group.beneficiary_id);
    auto it = valid.find(id);
    if (it == valid.end()) {
      res.exclusion = seen_profile.count(id) ? "invalid_profile" : "no_profile";
      return;
    }
    if (task == Task::short_term) {
      Rng rng = make_rng(seed, salt::sampling, gi);
      for (int draw = 0; draw < std::max(1, cfg.short_draws); ++draw) {
        auto s = sample_short_term(group.calls, it->second, rng, cfg);
        if (!s) {
          res.exclusion = "short_history";
          res.samples.clear();
          return;
        }
        s->draw = draw;
        res.samples.push_back(std::move(*s));
      }
    } else {
      auto outcome = sample_long_term(group.calls, it->second, task, observation_end, cfg);
      if (!outcome.sample) {
        res.exclusion = outcome.reason == Ineligibility::short_history ? "short_history"
                        : task == Task::long_engagement                ? "few_connections"
                                                                       : "few_attempts";
        return;
      }
      res.samples.push_back(std::move(*outcome.sample));
    }
  };
  const auto n_groups = static_cast<std::ptrdiff_t>(groups.size());
  if (exec == Exec::parallel) {
#pragma omp parallel for schedule(dynamic, 16)
    for (std::ptrdiff_t gi = 0; gi < n_groups; ++gi) process(static_cast<std::size_t>(gi));
  } else {
    for (std::ptrdiff_t gi = 0; gi < n_groups; ++gi) process(static_cast<std::size_t>(gi));
  }

  for (const char* reason : {"invalid_profile", "no_profile", "no_calls", "short_history"}) ds.exclusions[reason] = 0;
  ds.exclusions[task == Task::long_connection ? "few_attempts" : "few_connections"] = 0;
  if (task == Task::short_term) ds.exclusions.erase("few_connections");

  std::unordered_map<std::string, bool> has_calls;
  for (const auto& g : groups) has_calls[std::string(g.beneficiary_id)] = true;
  for (const auto& [id, _] : seen_profile)
    if (!has_calls.count(id)) ++ds.exclusions["no_calls"];

  for (auto& res : results) {
    if (!res.exclusion.empty()) {
      ++ds.exclusions[res.exclusion];
      continue;
    }
    for (auto& s : res.samples) {
      (s.label ? ds.counts.high_risk : ds.counts.low_risk)++;
      ds.samples.push_back(std::move(s));
    }
  }
  if (ds.samples.empty()) {
    std::string detail;
    for (const auto& [reason, count] : ds.exclusions) detail += " " + reason + "=" + std::to_string(count);
    throw Error("no eligible beneficiaries for task " + std::string(to_string(task)) + ";" + detail);
  }
  return ds;
}

void to_json(nlohmann::json& j, const PipelineConfig& c) {
  auto ratio = [](const RatioLabelConfig& r) {
    return nlohmann::json{{"risk_threshold", r.risk_threshold},
                          {"min_denominator", r.min_denominator},
                          {"min_history_months", r.min_history_months}};
  };
  j = nlohmann::json{{"schema", c.schema},
                     {"short_input_days", c.short_input_days},
                     {"short_label_days", c.short_label_days},
                     {"short_max_len", c.short_max_len},
                     {"short_draws", c.short_draws},
                     {"long_input_days", c.long_input_days},
                     {"long_max_len", c.long_max_len},
                     {"engagement", ratio(c.engagement)},
                     {"connection", ratio(c.connection)},
                     {"observation_end", c.observation_end ? nlohmann::json(c.observation_end->iso()) : nlohmann::json()}};
}

void from_json(const nlohmann::json& j, PipelineConfig& c) {
  if (j.contains("schema")) j.at("schema").get_to(c.schema);
  c.short_input_days = j.value("short_input_days", c.short_input_days);
  c.short_label_days = j.value("short_label_days", c.short_label_days);
  c.short_max_len = j.value("short_max_len", c.short_max_len);
  c.short_draws = j.value("short_draws", c.short_draws);
  c.long_input_days = j.value("long_input_days", c.long_input_days);
  c.long_max_len = j.value("long_max_len", c.long_max_len);
  auto ratio = [](const nlohmann::json& r, RatioLabelConfig& out) {
    out.risk_threshold = r.value("risk_threshold", out.risk_threshold);
    out.min_denominator = r.value("min_denominator", out.min_denominator);
    out.min_history_months = r.value("min_history_months", out.min_history_months);
    if (!(out.risk_threshold > 0.0 && out.risk_threshold < 1.0)) throw Error("risk_threshold must be in (0,1)");
    if (out.min_denominator < 1) throw Error("min_denominator must be >= 1");
  };
  if (j.contains("engagement")) ratio(j.at("engagement"), c.engagement);
  if (j.contains("connection")) ratio(j.at("connection"), c.connection);
  if (j.contains("observation_end") && !j.at("observation_end").is_null()) {
    auto d = Date::parse(j.at("observation_end").get<std::string>());
    if (!d) throw Error("observation_end must be YYYY-MM-DD");
    c.observation_end = d;
  }
  if (c.short_input_days < 1 || c.short_label_days < 1 || c.long_input_days < 1 || c.short_max_len < 1 ||
      c.long_max_len < 1)
    throw Error("window lengths must be positive");
}

}  // namespace dropcast::pipeline
